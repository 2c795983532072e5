#pragma once

// Quadrature ground truth for the closed-form Gaussian moments. Nothing here
// calls erf: every expectation is integrated numerically against the normal
// density with covariance rho2 * [[sigma_g2, r], [r, Q]].

#include <array>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "satlms/core.hpp"

namespace satlms::oracle {

enum class MomentKind { d2, fy2, dfy, dy, yfy };

inline constexpr std::array<MomentKind, 5> kAllKinds{MomentKind::d2, MomentKind::fy2,
                                                     MomentKind::dfy, MomentKind::dy,
                                                     MomentKind::yfy};

std::string_view to_string(MomentKind k);

class CovarianceError : public Error {
public:
  using Error::Error;
};

struct QuadConfig {
  /// Gauss nodes per panel for one-dimensional integrals (and the
  /// Gauss-Hermite rule used for whole-line smooth integrands).
  int nodes = 200;
  /// Gauss-Legendre nodes per panel and axis for the full 2-D integral.
  int nodes_2d = 16;
  /// Integration range in standard deviations on each side of zero.
  double span = 12.0;
};

void validate(const QuadConfig& cfg);

/// Gauss-Legendre rule on [-1, 1] (Golub-Welsch), symmetrised. Cached.
const std::pair<Eigen::VectorXd, Eigen::VectorXd>& gauss_legendre(int n);

/// Gauss-Hermite rule for weight exp(-x^2) (Golub-Welsch). Cached.
const std::pair<Eigen::VectorXd, Eigen::VectorXd>& gauss_hermite(int n);

/// E[.] for the requested moment. fy2/yfy integrate the y marginal only;
/// dfy/dy use the conditional mean E[d | y] = (r / Q) y.
double quad_moment(MomentKind kind, const SystemParams<double>& p, const MacroState<double>& s,
                   const QuadConfig& cfg = {});

/// dfy or dy as a direct double integral over the joint density; rank-one
/// covariances are integrated along the support line d = (r / Q) y.
double quad_moment_2d(MomentKind kind, const SystemParams<double>& p,
                      const MacroState<double>& s, const QuadConfig& cfg = {});

/// <f(y)^2> as S^2 P(|y| > S) + E[y^2 1{|y| <= S}], two separate integrals.
double quad_fy2_split(const SystemParams<double>& p, double Q, const QuadConfig& cfg = {});

/// Closed forms under test; defaults to the moments module.
struct ClosedForms {
  std::function<double(const SystemParams<double>&)> d2;
  std::function<double(const SystemParams<double>&, double Q)> fy2;
  std::function<double(const SystemParams<double>&, const MacroState<double>&)> dfy;
  std::function<double(const SystemParams<double>&, double r)> dy;
  std::function<double(const SystemParams<double>&, double Q)> yfy;

  static ClosedForms library();
  double eval(MomentKind k, const SystemParams<double>& p, const MacroState<double>& s) const;
};

/// r values are given as fractions of the Cauchy-Schwarz bound sigma_g sqrt(Q).
struct Grid {
  std::vector<double> Q{0.1, 1.0, 10.0};
  std::vector<double> r_frac{-0.9, 0.0, 0.9};
  std::vector<double> S{0.0, 0.5, 1.0, 2.0, 5.0};
  std::vector<double> rho2{0.5, 1.0, 2.0};
  std::vector<double> sigma_g2{0.5, 1.0, 2.0};

  std::size_t size() const {
    return Q.size() * r_frac.size() * S.size() * rho2.size() * sigma_g2.size();
  }
};

struct KindReport {
  MomentKind kind{};
  double max_rel_err = 0;
  SystemParams<double> worst_params;
  MacroState<double> worst_state;
  bool pass = true;
};

struct CheckReport {
  std::size_t points = 0;
  double tolerance = 1e-8;
  std::vector<KindReport> kinds;
  /// Reduced (conditional-mean) vs full 2-D evaluation of dfy and dy.
  double max_reduction_gap = 0;
  /// Single-integral vs split evaluation of fy2.
  double max_split_gap = 0;
  bool pass = true;
};

struct CheckOptions {
  double tolerance = 1e-8;
  bool full_2d = true;
};

/// Relative error used throughout: |a - b| / max(|b|, 1e-6 * scale), where
/// scale is the natural magnitude of the moment (rho2 sigma_g2, rho2 Q or
/// rho2 sigma_g sqrt(Q)).
double relative_error(MomentKind k, double closed, double quad, const SystemParams<double>& p,
                      const MacroState<double>& s);

CheckReport check_all(const Grid& grid = {}, const QuadConfig& cfg = {},
                      const ClosedForms& forms = ClosedForms::library(),
                      const CheckOptions& opts = {});

}  // namespace satlms::oracle
