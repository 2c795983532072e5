#pragma once

// Shared domain types for the clipped-output LMS model: system parameters,
// the (Q, r) order parameters, the clipping nonlinearity and the angle
// between the unknown system and the adaptive filter.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace satlms {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidParam : public Error {
public:
  InvalidParam(std::string field, const std::string& reason)
      : Error("invalid parameter '" + field + "': " + reason), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

/// Macroscopic parameters of the model.
///
/// `rho2` is the input power scale N*sigma^2 held fixed as N grows,
/// `sigma_g2` the per-tap variance of the unknown system, `sigma_xi2` the
/// background noise variance, `S` the saturation value and `mu` the step
/// size. `S` may be +infinity, which denotes the unclipped (linear) filter.
template <typename Scalar = double>
struct SystemParams {
  Scalar rho2{1};
  Scalar sigma_g2{1};
  Scalar sigma_xi2{0};
  Scalar S{1};
  Scalar mu{Scalar(0.5)};

  bool linear() const { return std::isinf(S); }
};

template <typename Scalar = double>
struct MacroState {
  Scalar Q{0};
  Scalar r{0};

  friend bool operator==(const MacroState&, const MacroState&) = default;
};

/// Slack allowed on |cos theta| for states produced by integrating the ODEs.
inline constexpr double kCosThetaSlack = 1e-9;

template <typename Scalar = double>
inline constexpr Scalar kInf = std::numeric_limits<Scalar>::infinity();

/// One recorded point of a theory trajectory.
template <typename Scalar = double>
struct TrajectoryPoint {
  Scalar t{0};
  MacroState<Scalar> state;
  Scalar mse{0};
  Scalar msd_norm{0};
  std::optional<Scalar> cos_theta;
};

template <typename Scalar = double>
struct MacroTrajectory {
  std::vector<TrajectoryPoint<Scalar>> points;
  /// Set when a negative round-off value of Q had to be clamped to zero.
  bool q_clamped = false;
};

/// Throws InvalidParam for the first violated bound.
template <typename Scalar>
void validate(const SystemParams<Scalar>& p) {
  using std::isfinite;
  using std::isnan;
  if (!isfinite(p.rho2) || !(p.rho2 > 0)) throw InvalidParam("rho2", "must be finite and > 0");
  if (!isfinite(p.sigma_g2) || !(p.sigma_g2 > 0))
    throw InvalidParam("sigma_g2", "must be finite and > 0");
  if (!isfinite(p.sigma_xi2) || !(p.sigma_xi2 >= 0))
    throw InvalidParam("sigma_xi2", "must be finite and >= 0");
  if (isnan(p.S) || !(p.S >= 0)) throw InvalidParam("S", "must be >= 0 (inf allowed)");
  if (!isfinite(p.mu) || !(p.mu > 0)) throw InvalidParam("mu", "must be finite and > 0");
}

/// Hard limiter f: S for x > S, -S for x < -S, identity otherwise.
template <typename Scalar>
constexpr Scalar clip(Scalar x, Scalar S) {
  if (x > S) return S;
  if (x < -S) return -S;
  return x;
}

/// r / (sigma_g sqrt(Q)); empty when Q = 0.
template <typename Scalar>
std::optional<Scalar> cos_theta(const MacroState<Scalar>& s, const SystemParams<Scalar>& p) {
  using std::sqrt;
  if (!(s.Q > 0)) return std::nullopt;
  return s.r / (sqrt(p.sigma_g2) * sqrt(s.Q));
}

}  // namespace satlms
