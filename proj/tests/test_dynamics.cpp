#include <doctest.h>

#include <cmath>
#include <random>

#include "generators.hpp"
#include "satlms/dynamics.hpp"
#include "satlms/simulator.hpp"
#include "satlms/steadystate.hpp"

using namespace satlms;

namespace {

SystemParams<double> make(double S, double mu, double sigma_xi2 = 0.0) {
  return {1.0, 1.0, sigma_xi2, S, mu};
}

// Exact solution of the unclipped (erf = 1) system from Q(0) = Q0, r(0) = r0.
struct LinearSolution {
  SystemParams<double> p;
  double Q0, r0;

  MacroState<double> at(double t) const {
    const double a = p.mu * p.rho2;
    const double b = a * (a - 2.0);
    const double c = 2.0 * a * (1.0 - a);
    const double e0 = p.mu * a * (p.rho2 * p.sigma_g2 + p.sigma_xi2);
    const double sg2 = p.sigma_g2;
    const double r = sg2 + (r0 - sg2) * std::exp(-a * t);
    // Q' = b Q + c r + e0 with r = sg2 + (r0 - sg2) e^{-a t}.
    const double Qinf = -(c * sg2 + e0) / b;
    const double K = a == 1.0 ? 0.0 : c * (r0 - sg2) / (-a - b);
    const double C = Q0 - Qinf - K;
    return {Qinf + K * std::exp(-a * t) + C * std::exp(b * t), r};
  }
};

}  // namespace

TEST_CASE("drdt examples") {
  CHECK(drdt(make(1.0, 0.5), MacroState<double>{0.0, 0.0}) == 0.5);
  CHECK(drdt(make(kInf<double>, 0.5), MacroState<double>{0.7, 1.0}) == 0.0);
  // 0.1 (1 - 0.5 erf(1/sqrt 2)), from 30-digit evaluation
  CHECK(drdt(make(1.0, 0.1), MacroState<double>{1.0, 0.5}) ==
        doctest::Approx(0.0658655253931457051).epsilon(1e-14));
}

TEST_CASE("dqdt examples") {
  CHECK(dqdt(make(1.0, 0.5), MacroState<double>{0.0, 0.0}) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(dqdt(make(kInf<double>, 0.5), MacroState<double>{1.0, 1.0}) == 0.0);
  for (double xi : {0.0, 0.7}) {
    const auto p = SystemParams<double>{1.3, 0.8, xi, 0.0, 0.4};
    const double expected = p.mu * p.mu * p.rho2 * (p.rho2 * p.sigma_g2 + p.sigma_xi2);
    CHECK(dqdt(p, MacroState<double>{0.0, 0.0}) == doctest::Approx(expected).epsilon(1e-15));
    auto q = p;
    q.S = 2.0;  // S > 0, Q -> 0 limit gives the same value
    CHECK(dqdt(q, MacroState<double>{0.0, 0.0}) == doctest::Approx(expected).epsilon(1e-14));
  }
  // At w = 0 the cross term vanishes: dQ/dt = mu^2 MSE(0).
  const auto p = make(1.0, 0.5);
  CHECK(dqdt(p, MacroState<double>{0.0, 0.0}) ==
        doctest::Approx(p.mu * p.mu * mse(p, MacroState<double>{0.0, 0.0})));
}

TEST_CASE("integrate: trajectory structure") {
  IntegratorConfig cfg{0.01, 50.0, 1};
  const auto traj = integrate(make(3.0, 0.5), MacroState<double>{}, cfg);
  REQUIRE(traj.points.size() == 5001);
  CHECK(traj.points.front().t == 0.0);
  CHECK_FALSE(traj.points.front().cos_theta.has_value());
  CHECK(traj.points.back().t == 50.0);
  for (std::size_t i = 1; i < traj.points.size(); ++i)
    CHECK(traj.points[i].t > traj.points[i - 1].t);

  cfg.record_stride = 10;
  CHECK(integrate(make(3.0, 0.5), MacroState<double>{}, cfg).points.size() == 501);
  cfg = {0.3, 1.0, 1};  // 1.0 is not a multiple of 0.3
  const auto odd = integrate(make(3.0, 0.5), MacroState<double>{}, cfg);
  CHECK(odd.points.size() == 5);
  CHECK(odd.points.back().t == 1.0);
}

TEST_CASE("integrate rejects bad configuration") {
  CHECK_THROWS_AS(integrate(make(1.0, 0.5), MacroState<double>{}, IntegratorConfig{0.0, 1.0, 1}),
                  InvalidParam);
  CHECK_THROWS_AS(integrate(make(1.0, 0.5), MacroState<double>{}, IntegratorConfig{2.0, 1.0, 1}),
                  InvalidParam);
  CHECK_THROWS_AS(integrate(make(1.0, 0.5), MacroState<double>{}, IntegratorConfig{0.1, 1.0, 0}),
                  InvalidParam);
  CHECK_THROWS_AS(integrate(make(1.0, 0.5), MacroState<double>{-1.0, 0.0}, IntegratorConfig{}),
                  InvalidParam);
  CHECK_THROWS_AS(integrate(make(1.0, -0.5), MacroState<double>{}, IntegratorConfig{}),
                  InvalidParam);
}

TEST_CASE("integrate reports a blown-up state") {
  const auto p = make(kInf<double>, 1e3);
  try {
    integrate(p, MacroState<double>{}, IntegratorConfig{0.01, 10.0, 1});
    FAIL("expected NonFinite");
  } catch (const NonFinite<double>& e) {
    CHECK(e.t() > 0.0);
    CHECK(std::isfinite(e.last_valid().Q));
  }
}

TEST_CASE("unclipped trajectories match the analytic linear solution") {
  for (double mu : {0.3, 0.5, 1.0, 1.5})
    for (double xi : {0.0, 1.0}) {
      const auto p = make(kInf<double>, mu, xi);
      const LinearSolution exact{p, 0.0, 0.0};
      const double dt = 0.01;
      // One step from the exact state lands on the exact state.
      double worst_step = 0;
      for (int k = 0; k < 2000; ++k) {
        const double t = k * dt;
        const auto s = exact.at(t);
        const auto y = detail::rk4_step(p, detail::Vec2<double>(s.Q, s.r), dt);
        const auto s1 = exact.at(t + dt);
        worst_step = std::max({worst_step, std::abs(y(0) - s1.Q), std::abs(y(1) - s1.r)});
      }
      CHECK(worst_step <= 1e-10);

      const auto traj = integrate(p, MacroState<double>{}, IntegratorConfig{dt, 20.0, 100});
      for (const auto& pt : traj.points) {
        const auto s = exact.at(pt.t);
        CHECK(pt.state.Q == doctest::Approx(s.Q).epsilon(1e-8));
        CHECK(pt.state.r == doctest::Approx(s.r).epsilon(1e-8));
      }
    }
}

TEST_CASE("unclipped noiseless run identifies the system") {
  const auto traj = integrate(make(kInf<double>, 0.5), MacroState<double>{}, IntegratorConfig{0.01, 50.0, 100});
  const auto& end = traj.points.back();
  CHECK(std::abs(end.state.Q - 1.0) <= 1e-6);
  CHECK(std::abs(end.state.r - 1.0) <= 1e-6);
  CHECK(std::abs(end.mse) <= 1e-6);
}

TEST_CASE("S = 3 reaches the steady-state MSE by t = 50") {
  const auto p = make(3.0, 0.5);
  const auto traj = integrate(p, MacroState<double>{}, IntegratorConfig{0.01, 50.0, 100});
  const auto ss = steady_state(p);
  REQUIRE(ss.regime == Regime::Converged);
  CHECK(std::abs(traj.points.back().mse - ss.mse) <= 1e-4);
}

TEST_CASE("S = 1, mu = 1: MSD keeps growing while the MSE levels off") {
  const auto p = make(1.0, 1.0);
  const auto traj = integrate(p, MacroState<double>{}, IntegratorConfig{0.01, 50.0, 1});
  const auto& pts = traj.points;
  const auto& last = pts.back();
  const auto& prev = pts[pts.size() - 101];  // t = 49
  CHECK(last.msd_norm - prev.msd_norm > 0.0);
  const double mse_slope = last.mse - prev.mse;
  const double msd_slope = last.msd_norm - prev.msd_norm;
  CHECK(mse_slope < 1e-2 * msd_slope);
  CHECK(std::abs(last.mse - asymptotic_mse(p)) < 0.05);
}

TEST_CASE("RK4 step halving converges at fourth order") {
  for (double S : {0.8, 1.5, 3.0}) {
    const auto p = make(S, 0.5, 0.1);
    auto end_state = [&](double dt) {
      const auto traj = integrate(p, MacroState<double>{}, IntegratorConfig{dt, 10.0, 1000000});
      return traj.points.back().state;
    };
    const auto a = end_state(0.2), b = end_state(0.1), c = end_state(0.05);
    const double e1 = std::hypot(a.Q - b.Q, a.r - b.r);
    const double e2 = std::hypot(b.Q - c.Q, b.r - c.r);
    const double order = std::log2(e1 / e2);
    CAPTURE(S);
    CHECK(order >= 3.5);
  }
}

TEST_CASE("trajectories keep Q, r >= 0 and Cauchy-Schwarz") {
  testing::Gen gen(3);
  for (int i = 0; i < 60; ++i) {
    auto p = gen.params();
    p.mu = gen.uniform(0.05, 1.5 / p.rho2);
    const auto traj = integrate(p, MacroState<double>{}, IntegratorConfig{0.01, 20.0, 10});
    for (const auto& pt : traj.points) {
      CHECK(pt.state.Q >= 0.0);
      CHECK(pt.state.r >= 0.0);
      const double tol = 1e-6 * p.sigma_g2 * std::max(pt.state.Q, 1.0);
      CHECK(pt.state.r * pt.state.r <= p.sigma_g2 * pt.state.Q + tol);
      if (pt.cos_theta) CHECK(*pt.cos_theta <= 1.0 + kCosThetaSlack);
    }
  }
}

// One LMS step from a state with prescribed (Q, r). With Gaussian input the
// update can be sampled in the coordinates spanned by g and w: u = a g^ + b v^
// + rest, where the rest only enters through |u|^2.
TEST_CASE("ODE right-hand sides are the expected per-step increments") {
  struct Case {
    double S, mu, xi, Q, r;
  };
  const Case cases[] = {{1.0, 0.1, 0.0, 1.0, 0.5},  {1.0, 0.5, 0.0, 4.0, 1.8},
                        {3.0, 0.5, 0.3, 0.8, 0.6},  {0.5, 1.0, 0.0, 25.0, 4.5},
                        {kInf<double>, 0.5, 1.0, 1.2, 0.9}};
  const double N = 1e7;
  const std::size_t M = 1000000;
  std::mt19937_64 eng(20240611);
  std::normal_distribution<double> z;
  std::chi_squared_distribution<double> chi(N - 2);

  for (const auto& c : cases) {
    const SystemParams<double> p{1.0, 1.0, c.xi, c.S, c.mu};
    const double sigma = std::sqrt(p.rho2 / N);
    const double g_norm = std::sqrt(N * p.sigma_g2);
    const double alpha = c.r * std::sqrt(N) / std::sqrt(p.sigma_g2);
    const double beta = std::sqrt(N) * std::sqrt(c.Q - c.r * c.r / p.sigma_g2);

    double sr = 0, sr2 = 0, sq = 0, sq2 = 0;
    for (std::size_t k = 0; k < M; ++k) {
      const double a = sigma * z(eng);
      const double b = sigma * z(eng);
      const double uu = a * a + b * b + sigma * sigma * chi(eng);
      const double d = g_norm * a;
      const double y = alpha * a + beta * b;
      const double e = d - clip(y, p.S) + std::sqrt(p.sigma_xi2) * z(eng);
      const double dr = c.mu * e * d;                                // N * delta r
      const double dq = 2 * c.mu * e * y + c.mu * c.mu * e * e * uu;  // N * delta Q
      sr += dr;
      sr2 += dr * dr;
      sq += dq;
      sq2 += dq * dq;
    }
    const double n = static_cast<double>(M);
    const double mr = sr / n, mq = sq / n;
    const double se_r = std::sqrt((sr2 / n - mr * mr) / n);
    const double se_q = std::sqrt((sq2 / n - mq * mq) / n);
    const MacroState<double> s{c.Q, c.r};
    CAPTURE(c.S);
    CAPTURE(c.Q);
    CHECK(std::abs(mr - drdt(p, s)) <= 3 * se_r);
    CHECK(std::abs(mq - dqdt(p, s)) <= 3 * se_q);
  }
}

TEST_CASE("simulator update reproduces dr/dt at finite N") {
  // <e d> is exact at any N for Gaussian input, so the microscopic update can
  // be checked directly.
  const std::size_t N = 50;
  const SystemParams<double> p{1.0, 1.0, 0.0, 1.0, 0.5};
  std::mt19937_64 eng(77);
  std::normal_distribution<double> z;
  Eigen::VectorXd g(N), v(N);
  for (auto& x : g) x = z(eng);
  g *= std::sqrt(N * p.sigma_g2) / g.norm();
  for (auto& x : v) x = z(eng);
  v -= v.dot(g) / g.squaredNorm() * g;
  v.normalize();
  const double Q = 2.0, r = 1.1;
  const Eigen::VectorXd w = (r * N / g.squaredNorm()) * g +
                            std::sqrt(N * Q - std::pow(r * N / g.norm(), 2)) * v;
  MicroState m(g, w, Eigen::VectorXd::Zero(N));
  REQUIRE(extract_macro(m).Q == doctest::Approx(Q));
  REQUIRE(extract_macro(m).r == doctest::Approx(r));

  const double sigma = std::sqrt(p.rho2 / N);
  const std::size_t M = 200000;
  double s = 0, s2 = 0;
  for (std::size_t k = 0; k < M; ++k) {
    for (std::size_t i = 0; i < N; ++i) m.push_input(sigma * z(eng));
    const Eigen::VectorXd before = m.w();
    lms_update(m, p, error_signal(m, p, 0.0));
    const double inc = g.dot(m.w() - before);  // N * delta r
    m.w() = before;
    s += inc;
    s2 += inc * inc;
  }
  const double mean = s / M;
  const double se = std::sqrt((s2 / M - mean * mean) / M);
  CHECK(std::abs(mean - drdt(p, MacroState<double>{Q, r})) <= 3 * se);
}
