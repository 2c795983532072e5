#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace satlms::csv {

/// Shortest decimal that parses back to the same double; "inf"/"-inf"/"nan"
/// for non-finite values.
std::string format(double x);

/// Empty field for a missing value.
std::string format(const std::optional<double>& x);

/// Parses a field written by `format`; accepts "inf" spellings.
double parse(std::string_view s);

/// Writes one comma-separated row terminated by '\n'.
void write_row(std::ostream& os, const std::vector<std::string>& fields);

}  // namespace satlms::csv
