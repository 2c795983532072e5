#include "satlms/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

namespace satlms {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint64_t trial) {
  return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
}

}  // namespace

Dist parse_dist(std::string_view name) {
  if (name == "gaussian") return Dist::Gaussian;
  if (name == "uniform") return Dist::Uniform;
  if (name == "binary") return Dist::Binary;
  throw InvalidParam("dist", "unknown distribution '" + std::string(name) + "'");
}

std::string_view to_string(Dist d) {
  switch (d) {
    case Dist::Gaussian: return "gaussian";
    case Dist::Uniform: return "uniform";
    case Dist::Binary: return "binary";
  }
  return "?";
}

StatMode parse_stat_mode(std::string_view name) {
  if (name == "mean") return StatMode::Mean;
  if (name == "median_std") return StatMode::MedianStd;
  if (name == "both") return StatMode::Both;
  throw InvalidParam("stat", "unknown statistic mode '" + std::string(name) + "'");
}

std::string_view to_string(StatMode m) {
  switch (m) {
    case StatMode::Mean: return "mean";
    case StatMode::MedianStd: return "median_std";
    case StatMode::Both: return "both";
  }
  return "?";
}

std::size_t SimConfig::steps() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(N) * t_end));
}

std::size_t SimConfig::record_stride() const {
  const auto k = std::llround(static_cast<double>(N) * record_dt);
  return static_cast<std::size_t>(std::max<long long>(1, k));
}

void validate(const SimConfig& cfg) {
  if (cfg.N < 1) throw InvalidParam("N", "must be >= 1");
  if (cfg.trials < 1) throw InvalidParam("trials", "must be >= 1");
  if (!std::isfinite(cfg.t_end) || !(cfg.t_end >= 0)) throw InvalidParam("t_end", "must be >= 0");
  if (!std::isfinite(cfg.record_dt) || !(cfg.record_dt > 0))
    throw InvalidParam("record_dt", "must be > 0");
}

TrialRng::TrialRng(std::uint64_t master_seed, std::uint64_t trial_index) {
  auto seq = make_seed_seq(master_seed, trial_index);
  engine_.seed(seq);
}

double TrialRng::sample(Dist d, double variance) {
  const double sd = std::sqrt(variance);
  switch (d) {
    case Dist::Gaussian: return sd * normal_(engine_);
    case Dist::Uniform: return sd * std::sqrt(3.0) * uniform_(engine_);
    case Dist::Binary: return coin_(engine_) ? sd : -sd;
  }
  return 0.0;
}

MicroState::MicroState(Eigen::VectorXd g, Eigen::VectorXd w, const Eigen::VectorXd& window)
    : g_(std::move(g)), w_(std::move(w)) {
  const Eigen::Index n = g_.size();
  if (n < 1 || w_.size() != n || window.size() != n)
    throw InvalidParam("N", "g, w and the input window must have the same length >= 1");
  buf_.resize(2 * n);
  buf_.head(n) = window;
  buf_.tail(n) = window;
}

void MicroState::push_input(double x) {
  const Eigen::Index n = g_.size();
  head_ = head_ == 0 ? n - 1 : head_ - 1;
  buf_[head_] = x;
  buf_[head_ + n] = x;
}

MicroState init_trial(const SimConfig& cfg, const SystemParams<double>& p, TrialRng& rng) {
  const auto n = static_cast<Eigen::Index>(cfg.N);
  const double sigma2 = p.rho2 / static_cast<double>(cfg.N);
  Eigen::VectorXd g(n);
  for (Eigen::Index i = 0; i < n; ++i) g[i] = rng.sample(cfg.g_dist, p.sigma_g2);
  Eigen::VectorXd window(n);
  for (Eigen::Index i = 0; i < n; ++i) window[i] = rng.sample(cfg.u_dist, sigma2);
  return MicroState(std::move(g), Eigen::VectorXd::Zero(n), window);
}

MicroState init_trial(const SimConfig& cfg, const SystemParams<double>& p,
                      std::uint64_t trial_index) {
  TrialRng rng(cfg.master_seed, trial_index);
  return init_trial(cfg, p, rng);
}

double error_signal(const MicroState& m, const SystemParams<double>& p, double xi) {
  const auto u = m.input();
  const double d = m.g().dot(u);
  const double y = m.w().dot(u);
  return d - clip(y, p.S) + xi;
}

void lms_update(MicroState& m, const SystemParams<double>& p, double e) {
  m.w() += (p.mu * e) * m.input();
  m.advance();
}

double step(MicroState& m, const SystemParams<double>& p, const SimConfig& cfg, TrialRng& rng) {
  m.push_input(rng.sample(cfg.u_dist, p.rho2 / static_cast<double>(cfg.N)));
  const double xi = p.sigma_xi2 > 0 ? rng.sample(cfg.noise_dist, p.sigma_xi2) : 0.0;
  const double e = error_signal(m, p, xi);
  lms_update(m, p, e);
  return e;
}

MacroState<double> extract_macro(const MicroState& m) {
  const double n = static_cast<double>(m.N());
  return {m.w().squaredNorm() / n, m.g().dot(m.w()) / n};
}

TrialRecord run_trial(const SimConfig& cfg, const SystemParams<double>& p,
                      std::uint64_t trial_index) {
  const std::size_t steps = cfg.steps();
  const std::size_t stride = cfg.record_stride();
  const auto records = static_cast<Eigen::Index>(steps / stride + 1);

  TrialRng rng(cfg.master_seed, trial_index);
  MicroState m = init_trial(cfg, p, rng);

  TrialRecord rec;
  rec.e2.resize(records);
  rec.msd.resize(records);
  rec.Q.resize(records);
  rec.r.resize(records);
  rec.cos_theta.resize(records);
  rec.g_norm2 = m.g().squaredNorm() / static_cast<double>(cfg.N);
  const double g_norm = std::sqrt(rec.g_norm2);

  // Each recorded point pairs w(n) with the error e(n) it produces.
  Eigen::Index k = 0;
  for (std::size_t n = 0; n <= steps; ++n) {
    const bool record = n % stride == 0;
    MacroState<double> s;
    if (record) s = extract_macro(m);
    const double e = step(m, p, cfg, rng);
    if (!record) continue;
    rec.e2[k] = e * e;
    rec.msd[k] = rec.g_norm2 - 2 * s.r + s.Q;
    rec.Q[k] = s.Q;
    rec.r[k] = s.r;
    rec.cos_theta[k] = s.Q > 0 ? s.r / (g_norm * std::sqrt(s.Q)) : kNaN;
    ++k;
  }
  return rec;
}

Eigen::VectorXd SeriesStats::std_error(std::size_t trials) const {
  return stddev / std::sqrt(static_cast<double>(trials));
}

SeriesStats reduce_rows(const Eigen::MatrixXd& samples) {
  const Eigen::Index rows = samples.rows();
  const Eigen::Index cols = samples.cols();
  SeriesStats s;
  s.mean = samples.rowwise().mean();
  s.median.resize(rows);
  s.stddev.resize(rows);
  std::vector<double> buf(static_cast<std::size_t>(cols));
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (samples.row(i).hasNaN()) {
      s.mean[i] = s.median[i] = s.stddev[i] = kNaN;
      continue;
    }
    const double var = cols > 1 ? (samples.row(i).array() - s.mean[i]).square().sum() /
                                      static_cast<double>(cols - 1)
                                : 0.0;
    s.stddev[i] = std::sqrt(var);
    Eigen::Map<Eigen::RowVectorXd>(buf.data(), cols) = samples.row(i);
    const auto mid = buf.begin() + cols / 2;
    std::nth_element(buf.begin(), mid, buf.end());
    double med = *mid;
    if (cols % 2 == 0) med = 0.5 * (med + *std::max_element(buf.begin(), mid));
    s.median[i] = med;
  }
  return s;
}

EnsembleStats run_ensemble(const SimConfig& cfg, const SystemParams<double>& p) {
  validate(cfg);
  validate(p);
  const std::size_t steps = cfg.steps();
  const std::size_t stride = cfg.record_stride();
  const auto records = static_cast<Eigen::Index>(steps / stride + 1);
  const auto trials = static_cast<Eigen::Index>(cfg.trials);

  Eigen::MatrixXd e2(records, trials), msd(records, trials), Q(records, trials),
      r(records, trials), cs(records, trials);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cfg.trials;) {
      const TrialRecord rec = run_trial(cfg, p, i);
      const auto c = static_cast<Eigen::Index>(i);
      e2.col(c) = rec.e2;
      msd.col(c) = rec.msd;
      Q.col(c) = rec.Q;
      r.col(c) = rec.r;
      cs.col(c) = rec.cos_theta;
    }
  };
  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, cfg.trials));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
  }

  EnsembleStats out;
  out.trials = cfg.trials;
  out.t.reserve(static_cast<std::size_t>(records));
  for (Eigen::Index k = 0; k < records; ++k)
    out.t.push_back(static_cast<double>(static_cast<std::size_t>(k) * stride) /
                    static_cast<double>(cfg.N));
  out.mse = reduce_rows(e2);
  out.msd = reduce_rows(msd);
  out.Q = reduce_rows(Q);
  out.r = reduce_rows(r);
  out.cos_theta = reduce_rows(cs);
  return out;
}

}  // namespace satlms
