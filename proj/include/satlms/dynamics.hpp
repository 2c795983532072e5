#pragma once

// Deterministic macroscopic dynamics of (Q, r) in the large-N limit and a
// fixed-step classical Runge-Kutta integrator for them.

#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Core>

#include "satlms/core.hpp"
#include "satlms/moments.hpp"

namespace satlms {

struct IntegratorConfig {
  double dt = 0.01;
  double t_end = 50.0;
  std::size_t record_stride = 1;
};

inline void validate(const IntegratorConfig& cfg) {
  if (!std::isfinite(cfg.dt) || !(cfg.dt > 0)) throw InvalidParam("dt", "must be finite and > 0");
  if (!std::isfinite(cfg.t_end) || !(cfg.t_end > 0))
    throw InvalidParam("t_end", "must be finite and > 0");
  if (cfg.dt > cfg.t_end) throw InvalidParam("dt", "must not exceed t_end");
  if (cfg.record_stride < 1) throw InvalidParam("record_stride", "must be >= 1");
}

/// Raised when the integrated state stops being finite.
template <typename Scalar = double>
class NonFinite : public Error {
public:
  NonFinite(Scalar t, MacroState<Scalar> last)
      : Error("non-finite state after t = " + std::to_string(static_cast<double>(t))),
        t_(t), last_(last) {}

  Scalar t() const noexcept { return t_; }
  const MacroState<Scalar>& last_valid() const noexcept { return last_; }

private:
  Scalar t_;
  MacroState<Scalar> last_;
};

/// dr/dt = mu rho2 (sigma_g2 - r erf(S / sqrt(2 rho2 Q))).
template <typename Scalar>
Scalar drdt(const SystemParams<Scalar>& p, const MacroState<Scalar>& s) {
  const auto c = clip_terms(p, s.Q);
  return p.mu * p.rho2 * (p.sigma_g2 - s.r * c.erf);
}

/// dQ/dt = mu^2 (<d^2> - 2<d f> + <f^2> + sigma_xi2) + 2 mu (<d y> - <y f>),
/// written out in closed form.
template <typename Scalar>
Scalar dqdt(const SystemParams<Scalar>& p, const MacroState<Scalar>& s) {
  const auto c = clip_terms(p, s.Q);
  const Scalar mr = p.mu * p.rho2;
  if (c.saturated) {
    // S^2 terms cancel when erf = 1.
    return mr * (p.mu * (p.rho2 * s.Q - 2 * p.rho2 * s.r) - 2 * s.Q) +
           mr * (p.mu * (p.rho2 * p.sigma_g2 + p.sigma_xi2) + 2 * s.r);
  }
  const Scalar S2 = p.S * p.S;
  return mr * (p.mu * (p.rho2 * s.Q - 2 * p.rho2 * s.r - S2) - 2 * s.Q) * c.erf -
         p.mu * mr * c.tail +
         mr * (p.mu * (p.rho2 * p.sigma_g2 + S2 + p.sigma_xi2) + 2 * s.r);
}

namespace detail {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;

// Packed as (Q, r).
template <typename Scalar>
Vec2<Scalar> rhs(const SystemParams<Scalar>& p, const Vec2<Scalar>& y) {
  using std::max;
  const MacroState<Scalar> s{max(y(0), Scalar(0)), y(1)};
  return Vec2<Scalar>(dqdt(p, s), drdt(p, s));
}

template <typename Scalar>
Vec2<Scalar> rk4_step(const SystemParams<Scalar>& p, const Vec2<Scalar>& y, Scalar h) {
  const Vec2<Scalar> k1 = rhs(p, y);
  const Vec2<Scalar> k2 = rhs(p, Vec2<Scalar>(y + (h / 2) * k1));
  const Vec2<Scalar> k3 = rhs(p, Vec2<Scalar>(y + (h / 2) * k2));
  const Vec2<Scalar> k4 = rhs(p, Vec2<Scalar>(y + h * k3));
  return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
}

template <typename Scalar>
TrajectoryPoint<Scalar> make_point(const SystemParams<Scalar>& p, Scalar t,
                                   const MacroState<Scalar>& s) {
  return {t, s, mse(p, s), msd_normalized(p, s), cos_theta(s, p)};
}

}  // namespace detail

/// Integrates the (Q, r) system from t = 0 to cfg.t_end with fixed-step RK4.
///
/// Points are recorded at t = 0, every `record_stride` steps and at t_end.
/// Grid times are i * dt; if t_end is not a multiple of dt the final step is
/// shortened to land on t_end exactly.
template <typename Scalar>
MacroTrajectory<Scalar> integrate(const SystemParams<Scalar>& p, const MacroState<Scalar>& state0,
                                  const IntegratorConfig& cfg) {
  validate(p);
  validate(cfg);
  if (!(state0.Q >= 0)) throw InvalidParam("Q", "initial Q must be >= 0");

  const Scalar dt = static_cast<Scalar>(cfg.dt);
  const Scalar t_end = static_cast<Scalar>(cfg.t_end);
  auto full_steps = static_cast<std::size_t>(std::floor(cfg.t_end / cfg.dt));
  const double rem = cfg.t_end - static_cast<double>(full_steps) * cfg.dt;
  const bool partial = rem > 1e-9 * cfg.dt;
  if (!partial && full_steps == 0) full_steps = 1;
  const std::size_t steps = full_steps + (partial ? 1 : 0);

  MacroTrajectory<Scalar> traj;
  traj.points.reserve(steps / cfg.record_stride + 2);
  traj.points.push_back(detail::make_point(p, Scalar(0), state0));

  detail::Vec2<Scalar> y(state0.Q, state0.r);
  MacroState<Scalar> last = state0;
  for (std::size_t i = 1; i <= steps; ++i) {
    const bool last_step = i == steps;
    const Scalar t = last_step ? t_end : dt * static_cast<Scalar>(i);
    const Scalar h = (last_step && partial) ? t_end - dt * static_cast<Scalar>(full_steps) : dt;
    y = detail::rk4_step(p, y, h);
    if (!y.allFinite()) throw NonFinite<Scalar>(t, last);
    if (y(0) < 0) {
      y(0) = 0;
      traj.q_clamped = true;
    }
    last = {y(0), y(1)};
    if (last_step || i % cfg.record_stride == 0) traj.points.push_back(detail::make_point(p, t, last));
  }
  return traj;
}

}  // namespace satlms
