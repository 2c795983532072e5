#pragma once

// Command-line front end. `run` is the whole program minus process setup so
// tests can drive it with in-memory streams.

#include <ostream>
#include <string>
#include <vector>

#include "satlms/oracle.hpp"

namespace satlms::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2 };

/// `args` excludes the program name. `forms` replaces the closed-form moments
/// checked by `moments-check`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const oracle::ClosedForms& forms = oracle::ClosedForms::library());

}  // namespace satlms::cli
