#include "satlms/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

#include <Eigen/Dense>

#include "satlms/moments.hpp"

namespace satlms::oracle {

namespace {

using Rule = std::pair<Eigen::VectorXd, Eigen::VectorXd>;

// Golub-Welsch: nodes are the eigenvalues of the symmetric Jacobi matrix with
// off-diagonal `beta`, weights are mu0 * (first eigenvector component)^2.
Rule golub_welsch(int n, double mu0, const std::function<double(int)>& beta) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = beta(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Eigen::VectorXd x = es.eigenvalues();
  Eigen::VectorXd w = mu0 * es.eigenvectors().row(0).transpose().array().square();
  // Both weight functions are even; enforce exact symmetry of the rule.
  for (int i = 0; i < n / 2; ++i) {
    const double xs = 0.5 * (x[n - 1 - i] - x[i]);
    const double ws = 0.5 * (w[n - 1 - i] + w[i]);
    x[i] = -xs;
    x[n - 1 - i] = xs;
    w[i] = w[n - 1 - i] = ws;
  }
  if (n % 2 == 1) x[n / 2] = 0.0;
  return {std::move(x), std::move(w)};
}

const Rule& cached_rule(std::map<int, Rule>& cache, std::mutex& mu, int n,
                        const std::function<Rule(int)>& make) {
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make(n)).first;
  return it->second;
}

// Composite Gauss-Legendre over [a, b] with panels no wider than `width`.
template <typename F>
double integrate(F&& f, double a, double b, double width, int nodes) {
  if (!(b > a)) return 0.0;
  const auto& [x, w] = gauss_legendre(nodes);
  const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / width - 1e-12)));
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double lo = a + k * h;
    const double half = 0.5 * h;
    const double mid = lo + half;
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) s += w[i] * f(mid + half * x[i]);
    total += half * s;
  }
  return total;
}

// Integration breakpoints for y: [-L, L] split where the clipping kinks are.
std::vector<double> y_breaks(double L, double S) {
  std::vector<double> b{-L};
  if (S < L) {
    if (S > 0) b.push_back(-S);
    b.push_back(S);
  }
  b.push_back(L);
  return b;
}

// E[h(y)] for y ~ N(0, v), integrating piecewise between the clip kinks.
template <typename H>
double expect_y(H&& h, double v, double S, const QuadConfig& cfg) {
  const double sd = std::sqrt(v);
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * v);
  auto integrand = [&](double y) { return h(y) * norm * std::exp(-0.5 * y * y / v); };
  const auto b = y_breaks(cfg.span * sd, S);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < b.size(); ++i)
    total += integrate(integrand, b[i], b[i + 1], 2.0 * sd, cfg.nodes);
  return total;
}

void check_covariance(const SystemParams<double>& p, const MacroState<double>& s) {
  if (!(s.Q >= 0)) throw CovarianceError("Q must be >= 0");
  const double bound = p.sigma_g2 * s.Q;
  if (s.r * s.r - bound > 1e-12 * std::max(1.0, bound))
    throw CovarianceError("covariance not positive semi-definite: r^2 > sigma_g2 Q");
}

double natural_scale(MomentKind k, const SystemParams<double>& p, const MacroState<double>& s) {
  switch (k) {
    case MomentKind::d2: return p.rho2 * p.sigma_g2;
    case MomentKind::fy2:
    case MomentKind::yfy: return p.rho2 * s.Q;
    case MomentKind::dfy:
    case MomentKind::dy: return p.rho2 * std::sqrt(p.sigma_g2 * s.Q);
  }
  return 1.0;
}

}  // namespace

std::string_view to_string(MomentKind k) {
  switch (k) {
    case MomentKind::d2: return "d2";
    case MomentKind::fy2: return "fy2";
    case MomentKind::dfy: return "dfy";
    case MomentKind::dy: return "dy";
    case MomentKind::yfy: return "yfy";
  }
  return "?";
}

void validate(const QuadConfig& cfg) {
  if (cfg.nodes < 2) throw InvalidParam("nodes", "must be >= 2");
  if (cfg.nodes_2d < 2) throw InvalidParam("nodes_2d", "must be >= 2");
  if (!(cfg.span > 0)) throw InvalidParam("span", "must be > 0");
}

const Rule& gauss_legendre(int n) {
  static std::map<int, Rule> cache;
  static std::mutex mu;
  return cached_rule(cache, mu, n, [](int m) {
    return golub_welsch(m, 2.0, [](int k) { return k / std::sqrt(4.0 * k * k - 1.0); });
  });
}

const Rule& gauss_hermite(int n) {
  static std::map<int, Rule> cache;
  static std::mutex mu;
  return cached_rule(cache, mu, n, [](int m) {
    return golub_welsch(m, std::sqrt(std::numbers::pi), [](int k) { return std::sqrt(k / 2.0); });
  });
}

double quad_moment(MomentKind kind, const SystemParams<double>& p, const MacroState<double>& s,
                   const QuadConfig& cfg) {
  validate(cfg);
  check_covariance(p, s);

  if (kind == MomentKind::d2) {
    // d ~ N(0, rho2 sigma_g2): substitute d = sqrt(2 v) x against exp(-x^2).
    const auto& [x, w] = gauss_hermite(cfg.nodes);
    const double v = p.rho2 * p.sigma_g2;
    return (w.array() * (2.0 * v) * x.array().square()).sum() / std::sqrt(std::numbers::pi);
  }

  if (!(s.Q > 0)) return 0.0;  // y == 0 almost surely, and r == 0 by Cauchy-Schwarz
  const double v = p.rho2 * s.Q;
  const double S = p.S;
  auto f = [S](double y) { return clip(y, S); };
  switch (kind) {
    case MomentKind::fy2:
      return expect_y([&](double y) { return f(y) * f(y); }, v, S, cfg);
    case MomentKind::yfy:
      return expect_y([&](double y) { return y * f(y); }, v, S, cfg);
    case MomentKind::dy:
      return s.r / s.Q * expect_y([](double y) { return y * y; }, v, S, cfg);
    case MomentKind::dfy:
      return s.r / s.Q * expect_y([&](double y) { return y * f(y); }, v, S, cfg);
    case MomentKind::d2: break;
  }
  return 0.0;
}

double quad_moment_2d(MomentKind kind, const SystemParams<double>& p,
                      const MacroState<double>& s, const QuadConfig& cfg) {
  validate(cfg);
  check_covariance(p, s);
  if (kind != MomentKind::dfy && kind != MomentKind::dy)
    throw InvalidParam("kind", "the 2-D evaluation covers dfy and dy only");
  if (!(s.Q > 0)) return 0.0;

  const double S = p.S;
  auto g = [&](double y) { return kind == MomentKind::dfy ? clip(y, S) : y; };

  Eigen::Matrix2d cov;
  cov << p.sigma_g2, s.r, s.r, s.Q;
  cov *= p.rho2;
  const double det = cov.determinant();
  const double vy = cov(1, 1);

  if (det <= 1e-14 * cov(0, 0) * cov(1, 1)) {
    // Rank one: d = (r / Q) y on the support line.
    return expect_y([&](double y) { return (s.r / s.Q) * y * g(y); }, vy, S, cfg);
  }

  const Eigen::Matrix2d prec = cov.inverse();
  const double norm = 1.0 / (2.0 * std::numbers::pi * std::sqrt(det));
  const double sd_d = std::sqrt(cov(0, 0));
  const double sd_y = std::sqrt(vy);
  // Conditional widths set the panel size so the ridge of a strongly
  // correlated density is resolved on both axes.
  const double cond_d = std::sqrt(det / vy);
  const double cond_y = std::sqrt(det / cov(0, 0));

  auto inner = [&](double y) {
    auto integrand = [&](double d) {
      const double q = prec(0, 0) * d * d + 2.0 * prec(0, 1) * d * y + prec(1, 1) * y * y;
      return d * norm * std::exp(-0.5 * q);
    };
    const double L = cfg.span * sd_d;
    return g(y) * integrate(integrand, -L, L, 2.0 * cond_d, cfg.nodes_2d);
  };
  const auto b = y_breaks(cfg.span * sd_y, S);
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < b.size(); ++i)
    total += integrate(inner, b[i], b[i + 1], 2.0 * cond_y, cfg.nodes_2d);
  return total;
}

double quad_fy2_split(const SystemParams<double>& p, double Q, const QuadConfig& cfg) {
  validate(cfg);
  if (!(Q > 0)) return 0.0;
  const double v = p.rho2 * Q;
  const double sd = std::sqrt(v);
  const double L = cfg.span * sd;
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * v);
  auto pdf = [&](double y) { return norm * std::exp(-0.5 * y * y / v); };
  const double inner_edge = std::min(p.S, L);
  double tail = 0.0;
  if (std::isfinite(p.S) && p.S > 0 && p.S < L)
    tail = 2.0 * integrate(pdf, p.S, L, 2.0 * sd, cfg.nodes);
  else if (p.S == 0)
    tail = 0.0;  // S^2 P(|y| > 0) = 0
  const double body =
      integrate([&](double y) { return y * y * pdf(y); }, -inner_edge, inner_edge, 2.0 * sd,
                cfg.nodes);
  return (std::isfinite(p.S) ? p.S * p.S * tail : 0.0) + body;
}

ClosedForms ClosedForms::library() {
  return {
      [](const SystemParams<double>& p) { return m_d2(p); },
      [](const SystemParams<double>& p, double Q) { return m_fy2(p, Q); },
      [](const SystemParams<double>& p, const MacroState<double>& s) { return m_dfy(p, s); },
      [](const SystemParams<double>& p, double r) { return m_dy(p, r); },
      [](const SystemParams<double>& p, double Q) { return m_yfy(p, Q); },
  };
}

double ClosedForms::eval(MomentKind k, const SystemParams<double>& p,
                         const MacroState<double>& s) const {
  switch (k) {
    case MomentKind::d2: return d2(p);
    case MomentKind::fy2: return fy2(p, s.Q);
    case MomentKind::dfy: return dfy(p, s);
    case MomentKind::dy: return dy(p, s.r);
    case MomentKind::yfy: return yfy(p, s.Q);
  }
  return 0.0;
}

double relative_error(MomentKind k, double closed, double quad, const SystemParams<double>& p,
                      const MacroState<double>& s) {
  const double floor = 1e-6 * natural_scale(k, p, s);
  const double denom = std::max(std::abs(quad), floor);
  const double diff = std::abs(closed - quad);
  if (diff == 0.0) return 0.0;
  return denom > 0 ? diff / denom : diff;
}

CheckReport check_all(const Grid& grid, const QuadConfig& cfg, const ClosedForms& forms,
                      const CheckOptions& opts) {
  validate(cfg);
  CheckReport rep;
  rep.tolerance = opts.tolerance;
  for (MomentKind k : kAllKinds) {
    KindReport kr;
    kr.kind = k;
    rep.kinds.push_back(kr);
  }

  for (double sg2 : grid.sigma_g2)
    for (double rho2 : grid.rho2)
      for (double S : grid.S)
        for (double Q : grid.Q)
          for (double frac : grid.r_frac) {
            SystemParams<double> p{rho2, sg2, 0.0, S, 0.5};
            const MacroState<double> s{Q, frac * std::sqrt(sg2 * Q)};
            ++rep.points;
            for (auto& kr : rep.kinds) {
              const double quad = quad_moment(kr.kind, p, s, cfg);
              const double closed = forms.eval(kr.kind, p, s);
              double err = relative_error(kr.kind, closed, quad, p, s);
              if (std::isnan(err)) err = std::numeric_limits<double>::infinity();
              if (err >= kr.max_rel_err) {
                kr.max_rel_err = err;
                kr.worst_params = p;
                kr.worst_state = s;
              }
            }
            if (opts.full_2d) {
              for (MomentKind k : {MomentKind::dfy, MomentKind::dy}) {
                const double reduced = quad_moment(k, p, s, cfg);
                const double full = quad_moment_2d(k, p, s, cfg);
                rep.max_reduction_gap =
                    std::max(rep.max_reduction_gap, relative_error(k, reduced, full, p, s));
              }
            }
            rep.max_split_gap = std::max(
                rep.max_split_gap,
                relative_error(MomentKind::fy2, quad_fy2_split(p, Q, cfg),
                               quad_moment(MomentKind::fy2, p, s, cfg), p, s));
          }

  for (auto& kr : rep.kinds) {
    kr.pass = kr.max_rel_err <= opts.tolerance;
    rep.pass = rep.pass && kr.pass;
  }
  return rep;
}

}  // namespace satlms::oracle
