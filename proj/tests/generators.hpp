#pragma once

// Small random generators for property tests.

#include <cmath>
#include <random>

#include "satlms/core.hpp"

namespace satlms::testing {

class Gen {
public:
  explicit Gen(std::uint64_t seed = 12345) : eng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(eng_); }

  SystemParams<double> params() {
    SystemParams<double> p;
    p.rho2 = log_uniform(0.1, 10.0);
    p.sigma_g2 = log_uniform(0.1, 10.0);
    p.sigma_xi2 = coin(0.3) ? 0.0 : log_uniform(1e-3, 2.0);
    p.S = coin(0.1) ? 0.0 : (coin(0.1) ? kInf<double> : log_uniform(1e-2, 20.0));
    p.mu = log_uniform(1e-2, 1.5);
    return p;
  }

  /// State obeying r^2 <= sigma_g2 Q.
  MacroState<double> state(const SystemParams<double>& p) {
    if (coin(0.05)) return {0.0, 0.0};
    const double Q = log_uniform(1e-4, 1e4);
    const double r = uniform(-1.0, 1.0) * std::sqrt(p.sigma_g2 * Q);
    return {Q, r};
  }

  std::mt19937_64& engine() { return eng_; }

private:
  std::mt19937_64 eng_;
};

}  // namespace satlms::testing
