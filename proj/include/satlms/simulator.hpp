#pragma once

// Finite-N Monte Carlo simulation of the clipped-output LMS system
// identification loop, and ensemble statistics over independent trials.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "satlms/core.hpp"

namespace satlms {

enum class Dist { Gaussian, Uniform, Binary };
enum class StatMode { Mean, MedianStd, Both };

Dist parse_dist(std::string_view name);
std::string_view to_string(Dist d);
StatMode parse_stat_mode(std::string_view name);
std::string_view to_string(StatMode m);

struct SimConfig {
  std::size_t N = 200;
  std::size_t trials = 500;
  double t_end = 50.0;
  /// Spacing of recorded points in units of t; rounded to whole steps.
  double record_dt = 1.0;
  std::uint64_t master_seed = 42;
  Dist g_dist = Dist::Gaussian;
  Dist u_dist = Dist::Gaussian;
  Dist noise_dist = Dist::Gaussian;
  StatMode stat_mode = StatMode::Mean;
  /// Worker threads for trials; 0 picks the hardware concurrency.
  unsigned threads = 0;

  std::size_t steps() const;
  std::size_t record_stride() const;
};

void validate(const SimConfig& cfg);

/// Per-trial random source. The engine of trial i is mt19937_64 seeded
/// through seed_seq{lo(seed), hi(seed), lo(i), hi(i)}.
class TrialRng {
public:
  TrialRng(std::uint64_t master_seed, std::uint64_t trial_index);

  /// Zero-mean draw from `d` scaled to the given variance.
  double sample(Dist d, double variance);

private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{-1.0, 1.0};
  std::bernoulli_distribution coin_{0.5};
};

/// One trial's microscopic state: the unknown system g, the adaptive filter
/// w and the tap-input window u(n) = [u(n), u(n-1), ..., u(n-N+1)].
class MicroState {
public:
  MicroState(Eigen::VectorXd g, Eigen::VectorXd w, const Eigen::VectorXd& window);

  std::size_t N() const { return static_cast<std::size_t>(g_.size()); }
  const Eigen::VectorXd& g() const { return g_; }
  const Eigen::VectorXd& w() const { return w_; }
  Eigen::VectorXd& w() { return w_; }
  auto input() const { return buf_.segment(head_, g_.size()); }
  std::size_t n() const { return n_; }

  /// Shifts `x` in as the newest sample u(n).
  void push_input(double x);
  void advance() { ++n_; }

private:
  Eigen::VectorXd g_;
  Eigen::VectorXd w_;
  // Doubled ring buffer: every sample is stored at i and i + N so the window
  // is always the contiguous segment starting at head_.
  Eigen::VectorXd buf_;
  Eigen::Index head_ = 0;
  std::size_t n_ = 0;
};

MicroState init_trial(const SimConfig& cfg, const SystemParams<double>& p, TrialRng& rng);
MicroState init_trial(const SimConfig& cfg, const SystemParams<double>& p,
                      std::uint64_t trial_index);

/// e = d - clip(y, S) + xi for the current window.
double error_signal(const MicroState& m, const SystemParams<double>& p, double xi);

/// w <- w + mu e u, then n <- n + 1.
void lms_update(MicroState& m, const SystemParams<double>& p, double e);

/// One full step: new input sample, noise draw, error, LMS update. Returns e.
double step(MicroState& m, const SystemParams<double>& p, const SimConfig& cfg, TrialRng& rng);

/// Q = w'w / N, r = g'w / N.
MacroState<double> extract_macro(const MicroState& m);

/// Recorded series of a single trial (rows are recorded times).
struct TrialRecord {
  Eigen::VectorXd e2;
  Eigen::VectorXd msd;
  Eigen::VectorXd Q;
  Eigen::VectorXd r;
  Eigen::VectorXd cos_theta;  // NaN where Q = 0
  double g_norm2 = 0;         // g'g / N
};

TrialRecord run_trial(const SimConfig& cfg, const SystemParams<double>& p,
                      std::uint64_t trial_index);

struct SeriesStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd median;
  Eigen::VectorXd stddev;  // sample standard deviation; 0 for one trial

  Eigen::VectorXd std_error(std::size_t trials) const;
};

struct EnsembleStats {
  std::vector<double> t;
  std::size_t trials = 0;
  SeriesStats mse;
  SeriesStats msd;
  SeriesStats Q;
  SeriesStats r;
  SeriesStats cos_theta;
};

/// Runs cfg.trials independent trials and reduces them in trial order, so
/// the result depends on the seed only, not on the thread count.
EnsembleStats run_ensemble(const SimConfig& cfg, const SystemParams<double>& p);

/// Mean / median / sample std across the columns of `samples` (one row per
/// recorded time, one column per trial). Any NaN in a row poisons that row.
SeriesStats reduce_rows(const Eigen::MatrixXd& samples);

}  // namespace satlms
