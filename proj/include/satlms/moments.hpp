#pragma once

// Closed-form Gaussian sample means of the clipped model. (d, y) is a
// zero-mean bivariate normal with covariance rho2 * [[sigma_g2, r], [r, Q]].

#include <cmath>
#include <numbers>

#include "satlms/core.hpp"

namespace satlms {

/// Arguments of S/sqrt(2 rho2 Q) beyond this are treated as the S -> inf limit.
inline constexpr double kErfSaturation = 40.0;

/// The two clipping-dependent terms shared by every moment:
/// erf(S / sqrt(2 rho2 Q)) and S sqrt(2 rho2 Q / pi) exp(-S^2 / (2 rho2 Q)).
template <typename Scalar>
struct ClipTerms {
  Scalar erf{1};
  Scalar erfc{0};
  Scalar tail{0};
  bool saturated = true;  // erf == 1 and tail == 0 exactly (linear regime)
};

template <typename Scalar>
ClipTerms<Scalar> clip_terms(const SystemParams<Scalar>& p, Scalar Q) {
  using std::exp;
  using std::sqrt;
  ClipTerms<Scalar> c;
  if (p.S == 0) {
    c.erf = 0;
    c.erfc = 1;
    c.tail = 0;
    c.saturated = false;
    return c;
  }
  if (std::isinf(p.S) || !(Q > 0)) return c;

  const Scalar scale = sqrt(2 * p.rho2 * Q);
  const Scalar x = p.S / scale;
  if (x > Scalar(kErfSaturation)) return c;

  c.erf = std::erf(x);
  c.erfc = std::erfc(x);
  c.tail = p.S * scale / sqrt(std::numbers::pi_v<Scalar>) * exp(-x * x);
  c.saturated = false;
  return c;
}

/// <d^2> = rho2 sigma_g2.
template <typename Scalar>
Scalar m_d2(const SystemParams<Scalar>& p) {
  return p.rho2 * p.sigma_g2;
}

/// <d y> = rho2 r.
template <typename Scalar>
Scalar m_dy(const SystemParams<Scalar>& p, Scalar r) {
  return p.rho2 * r;
}

/// <f(y)^2>.
template <typename Scalar>
Scalar m_fy2(const SystemParams<Scalar>& p, Scalar Q) {
  const auto c = clip_terms(p, Q);
  if (c.saturated) return p.rho2 * Q;
  // S^2 (1 - erf) written with erfc so the large-argument case keeps its digits.
  return p.S * p.S * c.erfc + p.rho2 * Q * c.erf - c.tail;
}

/// <d f(y)> = rho2 r erf(S / sqrt(2 rho2 Q)).
template <typename Scalar>
Scalar m_dfy(const SystemParams<Scalar>& p, const MacroState<Scalar>& s) {
  return p.rho2 * s.r * clip_terms(p, s.Q).erf;
}

/// <y f(y)> = rho2 Q erf(S / sqrt(2 rho2 Q)).
template <typename Scalar>
Scalar m_yfy(const SystemParams<Scalar>& p, Scalar Q) {
  return p.rho2 * Q * clip_terms(p, Q).erf;
}

/// Mean-square error <e^2> as a function of the order parameters.
template <typename Scalar>
Scalar mse(const SystemParams<Scalar>& p, const MacroState<Scalar>& s) {
  const auto c = clip_terms(p, s.Q);
  const Scalar base = p.rho2 * p.sigma_g2 + p.sigma_xi2;
  if (c.saturated) return base + p.rho2 * s.Q - 2 * p.rho2 * s.r;
  const Scalar S2 = p.S * p.S;
  return base + S2 + (p.rho2 * s.Q - 2 * p.rho2 * s.r - S2) * c.erf - c.tail;
}

/// ||g - w||^2 / N = sigma_g2 - 2 r + Q.
template <typename Scalar>
Scalar msd_normalized(const SystemParams<Scalar>& p, const MacroState<Scalar>& s) {
  return p.sigma_g2 - 2 * s.r + s.Q;
}

}  // namespace satlms
