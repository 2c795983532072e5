#pragma once

// Fixed points of the (Q, r) dynamics, the critical saturation value and the
// large-time behaviour below it.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "satlms/core.hpp"
#include "satlms/dynamics.hpp"
#include "satlms/moments.hpp"

namespace satlms {

class StabilityError : public Error {
public:
  using Error::Error;
};

class SolverError : public Error {
public:
  using Error::Error;
};

enum class Regime { Converged, Divergent, Unstable, Failed };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::Converged: return "converged";
    case Regime::Divergent: return "divergent";
    case Regime::Unstable: return "unstable";
    case Regime::Failed: return "failed";
  }
  return "?";
}

/// Converged: Q, r, msd_norm are the fixed point and `mse` is its MSE.
/// Divergent: Q and the MSD grow without bound; `mse` is the asymptotic MSE
/// and `cos_theta` its limit 1. Unstable/Failed only appear in sweeps.
template <typename Scalar = double>
struct SteadyResult {
  Regime regime = Regime::Divergent;
  std::optional<Scalar> Q;
  std::optional<Scalar> r;
  std::optional<Scalar> msd_norm;
  Scalar mse{0};
  Scalar cos_theta{1};
  std::string note;
};

/// S_C = sigma_g rho sqrt(pi / 2).
template <typename Scalar>
Scalar critical_S(const SystemParams<Scalar>& p) {
  using std::sqrt;
  return sqrt(p.sigma_g2) * sqrt(p.rho2) * sqrt(std::numbers::pi_v<Scalar> / 2);
}

/// Limit of the MSE for S < S_C; a quadratic in S that does not involve mu.
template <typename Scalar>
Scalar asymptotic_mse(const SystemParams<Scalar>& p) {
  using std::sqrt;
  const Scalar sg_rho = sqrt(p.sigma_g2) * sqrt(p.rho2);
  return p.S * p.S - 2 * sg_rho * sqrt(2 / std::numbers::pi_v<Scalar>) * p.S +
         p.sigma_g2 * p.rho2 + p.sigma_xi2;
}

/// Limit of cos theta for S < S_C, whatever mu, rho2, sigma_g2, sigma_xi2.
template <typename Scalar = double>
constexpr Scalar asymptotic_cos_theta() {
  return Scalar(1);
}

struct SteadyConfig {
  double q_min = 1e-3;
  double q_max = 1e12;
  double scan_factor = 2.0;
  int max_bisections = 400;
};

namespace detail {

// dr/dt = 0 gives r(Q) = sigma_g2 / erf(S / sqrt(2 rho2 Q)).
template <typename Scalar>
MacroState<Scalar> on_r_nullcline(const SystemParams<Scalar>& p, Scalar Q) {
  return {Q, p.sigma_g2 / clip_terms(p, Q).erf};
}

template <typename Scalar>
Scalar steady_residual(const SystemParams<Scalar>& p, Scalar Q) {
  return dqdt(p, on_r_nullcline(p, Q));
}

// Q erf^2 - sigma_g2: the nullcline respects r^2 <= sigma_g2 Q exactly where
// this is >= 0. It increases in Q towards 2 S^2 / (pi rho2) - sigma_g2.
template <typename Scalar>
Scalar schwarz_margin(const SystemParams<Scalar>& p, Scalar Q) {
  const Scalar e = clip_terms(p, Q).erf;
  return Q * e * e - p.sigma_g2;
}

// Lower end of the bracket on the smallest Q with r^2 <= sigma_g2 Q (so a
// fixed point sitting on the boundary stays bracketed), or nullopt if none up
// to q_max.
template <typename Scalar>
std::optional<Scalar> physical_q_min(const SystemParams<Scalar>& p, Scalar q_max) {
  if (schwarz_margin(p, q_max) < 0) return std::nullopt;
  Scalar lo = 0, hi = q_max;
  for (int i = 0; i < 2000; ++i) {
    const Scalar mid = lo + (hi - lo) / 2;
    if (mid <= lo || mid >= hi) break;
    (schwarz_margin(p, mid) >= 0 ? hi : lo) = mid;
  }
  return lo;
}

}  // namespace detail

/// Solves dr/dt = dQ/dt = 0.
///
/// r is eliminated through the r-nullcline and the remaining residual in Q
/// is bracketed by a geometric scan then bisected. The scan starts where the
/// nullcline enters the region r^2 <= sigma_g2 Q (max with q_min) and stops
/// at q_max. That region is empty for S <= S_C, where the state diverges.
/// No sign change for S > S_C raises SolverError.
template <typename Scalar>
SteadyResult<Scalar> steady_state(const SystemParams<Scalar>& p, const SteadyConfig& cfg = {}) {
  validate(p);
  if (p.linear() && p.mu * p.rho2 >= 2)
    throw StabilityError("mu * rho2 >= 2: the unclipped filter is not mean-square stable");

  SteadyResult<Scalar> res;
  const Scalar S_c = critical_S(p);
  auto divergent = [&] {
    res.regime = Regime::Divergent;
    res.mse = asymptotic_mse(p);
    res.cos_theta = asymptotic_cos_theta<Scalar>();
    res.note = "Q and MSD diverge";
    return res;
  };
  if (p.S <= S_c) return divergent();
  const auto q_phys = detail::physical_q_min(p, static_cast<Scalar>(cfg.q_max));
  if (!q_phys) {
    if (p.S < S_c + Scalar(1e-9)) return divergent();
    throw SolverError("no admissible state in Q range although S > S_C");
  }

  using std::max;
  Scalar lo = max(*q_phys, static_cast<Scalar>(cfg.q_min));
  Scalar f_lo = detail::steady_residual(p, lo);
  bool bracketed = f_lo == 0;
  Scalar hi = lo, f_hi = f_lo;
  while (!bracketed && lo < static_cast<Scalar>(cfg.q_max)) {
    hi = lo * static_cast<Scalar>(cfg.scan_factor);
    f_hi = detail::steady_residual(p, hi);
    if ((f_lo > 0) != (f_hi > 0)) {
      bracketed = true;
      break;
    }
    lo = hi;
    f_lo = f_hi;
  }

  if (!bracketed) {
    if (p.S < S_c + Scalar(1e-9)) return divergent();
    throw SolverError("no steady state found in Q range although S > S_C");
  }

  for (int i = 0; i < cfg.max_bisections; ++i) {
    const Scalar mid = lo + (hi - lo) / 2;
    if (mid <= lo || mid >= hi) break;
    const Scalar f_mid = detail::steady_residual(p, mid);
    if (f_mid == 0) {
      lo = hi = mid;
      f_lo = f_hi = 0;
      break;
    }
    if ((f_mid > 0) == (f_lo > 0)) {
      lo = mid;
      f_lo = f_mid;
    } else {
      hi = mid;
      f_hi = f_mid;
    }
  }
  using std::abs;
  const Scalar Q = abs(f_lo) <= abs(f_hi) ? lo : hi;
  const auto s = detail::on_r_nullcline(p, Q);

  res.regime = Regime::Converged;
  res.Q = s.Q;
  res.r = s.r;
  res.mse = mse(p, s);
  res.msd_norm = msd_normalized(p, s);
  res.cos_theta = cos_theta(s, p).value_or(Scalar(1));
  return res;
}

template <typename Scalar = double>
struct SweepEntry {
  Scalar S{0};
  SteadyResult<Scalar> result;
};

template <typename Scalar>
SteadyResult<Scalar> failed_result(Regime regime, std::string note) {
  SteadyResult<Scalar> r;
  r.regime = regime;
  r.mse = std::numeric_limits<Scalar>::quiet_NaN();
  r.cos_theta = std::numeric_limits<Scalar>::quiet_NaN();
  r.note = std::move(note);
  return r;
}

/// steady_state for every S in a strictly increasing grid; per-point
/// failures are recorded in the entry instead of aborting the sweep.
template <typename Scalar>
std::vector<SweepEntry<Scalar>> sweep_S(const SystemParams<Scalar>& base,
                                        std::span<const Scalar> S_grid,
                                        const SteadyConfig& cfg = {}) {
  for (std::size_t i = 0; i < S_grid.size(); ++i) {
    if (!(S_grid[i] >= 0)) throw InvalidParam("S_grid", "values must be >= 0");
    if (i > 0 && !(S_grid[i] > S_grid[i - 1]))
      throw InvalidParam("S_grid", "must be strictly increasing");
  }
  std::vector<SweepEntry<Scalar>> out;
  out.reserve(S_grid.size());
  for (Scalar S : S_grid) {
    auto p = base;
    p.S = S;
    SweepEntry<Scalar> e{S, {}};
    try {
      e.result = steady_state(p, cfg);
    } catch (const StabilityError& err) {
      e.result = failed_result<Scalar>(Regime::Unstable, err.what());
    } catch (const SolverError& err) {
      e.result = failed_result<Scalar>(Regime::Failed, err.what());
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace satlms
