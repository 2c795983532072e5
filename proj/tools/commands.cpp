#include "commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "satlms/csv.hpp"
#include "satlms/dynamics.hpp"
#include "satlms/simulator.hpp"
#include "satlms/steadystate.hpp"

namespace satlms::cli {

namespace {

using json = nlohmann::json;
using Params = SystemParams<double>;

struct Options {
  // model
  double rho2 = 1.0;
  double sigma_g2 = 1.0;
  double sigma_xi2 = 0.0;
  std::string S = "1";
  double mu = 0.5;
  // theory
  double dt = 0.01;
  double t_end = 50.0;
  std::size_t stride = 1;
  double Q0 = 0.0;
  double r0 = 0.0;
  // simulation
  std::size_t N = 200;
  std::size_t trials = 500;
  double record_dt = 1.0;
  std::uint64_t seed = 42;
  std::string g_dist = "gaussian";
  std::string u_dist = "gaussian";
  std::string noise_dist = "gaussian";
  std::string stat = "mean";
  // sweep
  double S_from = 0.1;
  double S_to = 5.0;
  double S_step = 0.01;
  // moments-check
  int nodes = 200;
  int nodes_2d = 16;
  // output
  std::string out;
  std::string manifest;
  std::string summary;
};

json num(double x) {
  if (std::isfinite(x)) return x;
  return csv::format(x);
}

json to_json(const Params& p) {
  return {{"rho2", num(p.rho2)}, {"sigma_g2", num(p.sigma_g2)}, {"sigma_xi2", num(p.sigma_xi2)},
          {"S", num(p.S)},       {"mu", num(p.mu)}};
}

json to_json(const IntegratorConfig& c) {
  return {{"dt", c.dt}, {"t_end", c.t_end}, {"record_stride", c.record_stride}};
}

json to_json(const SimConfig& c) {
  return {{"N", c.N},
          {"trials", c.trials},
          {"t_end", c.t_end},
          {"record_dt", c.record_dt},
          {"seed", c.master_seed},
          {"g_dist", std::string(to_string(c.g_dist))},
          {"u_dist", std::string(to_string(c.u_dist))},
          {"noise_dist", std::string(to_string(c.noise_dist))},
          {"stat", std::string(to_string(c.stat_mode))}};
}

Params params_from(const Options& o) {
  Params p{o.rho2, o.sigma_g2, o.sigma_xi2, 0.0, o.mu};
  try {
    p.S = csv::parse(o.S);
  } catch (const std::invalid_argument&) {
    throw InvalidParam("S", "expected a number or 'inf'");
  }
  validate(p);
  return p;
}

IntegratorConfig integrator_from(const Options& o) {
  IntegratorConfig c{o.dt, o.t_end, o.stride};
  validate(c);
  return c;
}

unsigned threads_from_env() {
  const char* v = std::getenv("SATLMS_THREADS");
  if (!v || !*v) return 0;
  try {
    return static_cast<unsigned>(std::stoul(v));
  } catch (const std::exception&) {
    throw InvalidParam("SATLMS_THREADS", "must be a non-negative integer");
  }
}

SimConfig sim_from(const Options& o) {
  SimConfig c;
  c.N = o.N;
  c.trials = o.trials;
  c.t_end = o.t_end;
  c.record_dt = o.record_dt;
  c.master_seed = o.seed;
  c.g_dist = parse_dist(o.g_dist);
  c.u_dist = parse_dist(o.u_dist);
  c.noise_dist = parse_dist(o.noise_dist);
  c.stat_mode = parse_stat_mode(o.stat);
  c.threads = threads_from_env();
  validate(c);
  return c;
}

// Output goes to --out when given, otherwise to the caller's stream.
class Sink {
public:
  Sink(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw InvalidParam("out", "cannot open '" + path + "' for writing");
      os_ = file_.get();
    }
  }
  std::ostream& operator*() { return *os_; }

private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_;
};

void write_json_file(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw InvalidParam("out", "cannot open '" + path + "' for writing");
  f << j.dump(2) << '\n';
}

// The manifest sits next to --out (or at --manifest) and records everything
// needed to replay the run.
void emit_manifest(const Options& o, const std::string& command, json config,
                   std::chrono::steady_clock::time_point started) {
  std::string path = o.manifest;
  if (path.empty() && !o.out.empty()) path = o.out + ".manifest.json";
  if (path.empty()) return;
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  json m{{"command", command},
         {"tool_version", kVersion},
         {"config", std::move(config)},
         {"wall_clock_seconds", secs}};
  write_json_file(path, m);
}

// ---- theory ---------------------------------------------------------------

void write_theory_csv(std::ostream& os, const MacroTrajectory<double>& traj) {
  csv::write_row(os, {"t", "Q", "r", "mse", "msd_norm", "cos_theta"});
  for (const auto& pt : traj.points)
    csv::write_row(os, {csv::format(pt.t), csv::format(pt.state.Q), csv::format(pt.state.r),
                        csv::format(pt.mse), csv::format(pt.msd_norm),
                        csv::format(pt.cos_theta)});
}

int cmd_theory(const Options& o, std::ostream& out) {
  const auto started = std::chrono::steady_clock::now();
  const Params p = params_from(o);
  const IntegratorConfig cfg = integrator_from(o);
  const auto traj = integrate(p, MacroState<double>{o.Q0, o.r0}, cfg);
  Sink sink(o.out, out);
  write_theory_csv(*sink, traj);
  emit_manifest(o, "theory",
                {{"params", to_json(p)},
                 {"integrator", to_json(cfg)},
                 {"Q0", o.Q0},
                 {"r0", o.r0},
                 {"q_clamped", traj.q_clamped}},
                started);
  return kOk;
}

// ---- simulate -------------------------------------------------------------

void write_sim_csv(std::ostream& os, const EnsembleStats& st, StatMode mode) {
  // Means are always written; the other modes add median and std.
  const bool medians = mode != StatMode::Mean;
  std::vector<std::string> header{"t"};
  for (const char* q : {"mse", "msd"}) {
    header.push_back(std::string(q) + "_mean");
    if (medians) {
      header.push_back(std::string(q) + "_median");
      header.push_back(std::string(q) + "_std");
    }
  }
  header.insert(header.end(), {"Q_mean", "r_mean"});
  csv::write_row(os, header);
  for (std::size_t i = 0; i < st.t.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    std::vector<std::string> row{csv::format(st.t[i])};
    for (const SeriesStats* s : {&st.mse, &st.msd}) {
      row.push_back(csv::format(s->mean[k]));
      if (medians) {
        row.push_back(csv::format(s->median[k]));
        row.push_back(csv::format(s->stddev[k]));
      }
    }
    row.push_back(csv::format(st.Q.mean[k]));
    row.push_back(csv::format(st.r.mean[k]));
    csv::write_row(os, row);
  }
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const auto started = std::chrono::steady_clock::now();
  const Params p = params_from(o);
  const SimConfig cfg = sim_from(o);
  const auto stats = run_ensemble(cfg, p);
  Sink sink(o.out, out);
  write_sim_csv(*sink, stats, cfg.stat_mode);
  emit_manifest(o, "simulate", {{"params", to_json(p)}, {"sim", to_json(cfg)}}, started);
  return kOk;
}

// ---- compare --------------------------------------------------------------

inline constexpr double kEnvelopeSE = 3.0;
inline constexpr std::size_t kUnderpoweredTrials = 10;

int cmd_compare(const Options& o, std::ostream& out, std::ostream& err) {
  const auto started = std::chrono::steady_clock::now();
  const Params p = params_from(o);
  const SimConfig sim = sim_from(o);

  IntegratorConfig icfg{o.dt, o.t_end, 1};
  const double ratio = sim.record_dt / o.dt;
  icfg.record_stride = static_cast<std::size_t>(std::llround(ratio));
  if (icfg.record_stride < 1 || std::abs(ratio - static_cast<double>(icfg.record_stride)) > 1e-6)
    throw InvalidParam("record_dt", "must be a whole multiple of dt");
  validate(icfg);

  const auto traj = integrate(p, MacroState<double>{}, icfg);
  const auto stats = run_ensemble(sim, p);
  const std::size_t n = std::min(traj.points.size(), stats.t.size());

  const Eigen::VectorXd se_mse = stats.mse.std_error(stats.trials);
  const Eigen::VectorXd se_msd = stats.msd.std_error(stats.trials);
  const bool underpowered = stats.trials < kUnderpoweredTrials;

  Sink sink(o.out, out);
  csv::write_row(*sink, {"t", "mse_theory", "mse_sim", "mse_se", "abs_dmse", "msd_theory",
                         "msd_sim", "msd_se", "abs_dmsd"});
  double max_dmse = 0, max_dmsd = 0, sum_dmse = 0, sum_dmsd = 0, max_z_mse = 0, max_z_msd = 0;
  bool inside = true;
  auto z_of = [](double diff, double se) {
    if (diff == 0) return 0.0;
    return se > 0 ? diff / se : std::numeric_limits<double>::infinity();
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const auto& pt = traj.points[i];
    if (std::abs(pt.t - stats.t[i]) > 1e-9 * std::max(1.0, pt.t))
      throw Error("theory and simulation time grids disagree");
    const double dmse = std::abs(pt.mse - stats.mse.mean[k]);
    const double dmsd = std::abs(pt.msd_norm - stats.msd.mean[k]);
    csv::write_row(*sink, {csv::format(pt.t), csv::format(pt.mse), csv::format(stats.mse.mean[k]),
                           csv::format(se_mse[k]), csv::format(dmse), csv::format(pt.msd_norm),
                           csv::format(stats.msd.mean[k]), csv::format(se_msd[k]),
                           csv::format(dmsd)});
    max_dmse = std::max(max_dmse, dmse);
    max_dmsd = std::max(max_dmsd, dmsd);
    sum_dmse += dmse;
    sum_dmsd += dmsd;
    const double zm = z_of(dmse, se_mse[k]);
    const double zd = z_of(dmsd, se_msd[k]);
    max_z_mse = std::max(max_z_mse, zm);
    max_z_msd = std::max(max_z_msd, zd);
    inside = inside && zm <= kEnvelopeSE && zd <= kEnvelopeSE;
  }

  const double count = static_cast<double>(std::max<std::size_t>(n, 1));
  json summary{{"points", n},
               {"trials", stats.trials},
               {"envelope_se", kEnvelopeSE},
               {"max_abs_dmse", max_dmse},
               {"mean_abs_dmse", sum_dmse / count},
               {"max_abs_dmsd", max_dmsd},
               {"mean_abs_dmsd", sum_dmsd / count},
               {"max_z_mse", num(max_z_mse)},
               {"max_z_msd", num(max_z_msd)},
               {"verdict", inside ? "PASS" : "FAIL"},
               {"underpowered", underpowered}};
  std::string path = o.summary;
  if (path.empty() && !o.out.empty()) path = o.out + ".summary.json";
  if (path.empty())
    err << summary.dump(2) << '\n';
  else
    write_json_file(path, summary);

  emit_manifest(o, "compare",
                {{"params", to_json(p)}, {"sim", to_json(sim)}, {"integrator", to_json(icfg)}},
                started);
  return kOk;
}

// ---- steady / critical / sweep -------------------------------------------

json steady_json(const SteadyResult<double>& r) {
  json j{{"regime", to_string(r.regime)}};
  switch (r.regime) {
    case Regime::Converged:
      j["Q"] = num(*r.Q);
      j["r"] = num(*r.r);
      j["mse"] = num(r.mse);
      j["msd_norm"] = num(*r.msd_norm);
      j["cos_theta"] = num(r.cos_theta);
      break;
    case Regime::Divergent:
      j["mse_asymptotic"] = num(r.mse);
      j["cos_theta"] = num(r.cos_theta);
      j["note"] = r.note;
      break;
    case Regime::Unstable:
    case Regime::Failed: j["note"] = r.note; break;
  }
  return j;
}

int cmd_steady(const Options& o, std::ostream& out) {
  const Params p = params_from(o);
  SteadyResult<double> res;
  try {
    res = steady_state(p);
  } catch (const StabilityError& e) {
    res = failed_result<double>(Regime::Unstable, e.what());
  }
  json j = steady_json(res);
  j["S_C"] = critical_S(p);
  Sink sink(o.out, out);
  *sink << j.dump(2) << '\n';
  return kOk;
}

int cmd_critical(const Options& o, std::ostream& out) {
  Params p{o.rho2, o.sigma_g2, o.sigma_xi2, 1.0, o.mu};
  validate(p);
  Sink sink(o.out, out);
  *sink << json{{"S_C", critical_S(p)}}.dump(2) << '\n';
  return kOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const auto started = std::chrono::steady_clock::now();
  Params base{o.rho2, o.sigma_g2, o.sigma_xi2, 1.0, o.mu};
  validate(base);
  if (!(o.S_step > 0)) throw InvalidParam("S-step", "must be > 0");
  if (!(o.S_from >= 0) || !(o.S_to >= o.S_from)) throw InvalidParam("S-to", "need 0 <= from <= to");
  std::vector<double> grid;
  const auto count = static_cast<std::size_t>(std::floor((o.S_to - o.S_from) / o.S_step + 1e-9));
  for (std::size_t i = 0; i <= count; ++i) grid.push_back(o.S_from + static_cast<double>(i) * o.S_step);

  const auto rows = sweep_S<double>(base, grid);
  Sink sink(o.out, out);
  csv::write_row(*sink, {"S", "regime", "Q_star", "r_star", "cos_theta", "mse", "msd_norm"});
  for (const auto& e : rows) {
    const auto& r = e.result;
    const bool ok = r.regime == Regime::Converged || r.regime == Regime::Divergent;
    csv::write_row(*sink, {csv::format(e.S), to_string(r.regime), csv::format(r.Q),
                           csv::format(r.r), ok ? csv::format(r.cos_theta) : "",
                           ok ? csv::format(r.mse) : "", csv::format(r.msd_norm)});
  }
  emit_manifest(o, "sweep",
                {{"params", to_json(base)},
                 {"S_from", o.S_from},
                 {"S_to", o.S_to},
                 {"S_step", o.S_step}},
                started);
  return kOk;
}

// ---- moments-check --------------------------------------------------------

int cmd_moments_check(const Options& o, std::ostream& out, const oracle::ClosedForms& forms) {
  oracle::QuadConfig q;
  q.nodes = o.nodes;
  q.nodes_2d = o.nodes_2d;
  oracle::validate(q);
  const auto rep = oracle::check_all(oracle::Grid{}, q, forms);
  json kinds = json::object();
  for (const auto& k : rep.kinds)
    kinds[std::string(oracle::to_string(k.kind))] = {{"max_rel_err", num(k.max_rel_err)},
                                                     {"pass", k.pass}};
  json j{{"points", rep.points},
         {"tolerance", rep.tolerance},
         {"nodes", q.nodes},
         {"kinds", kinds},
         {"max_reduction_gap", num(rep.max_reduction_gap)},
         {"max_split_gap", num(rep.max_split_gap)},
         {"pass", rep.pass}};
  Sink sink(o.out, out);
  *sink << j.dump(2) << '\n';
  return rep.pass ? kOk : kCheckFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const oracle::ClosedForms& forms) {
  Options o;
  CLI::App app{"Clipped-output LMS: theory, simulation and steady-state analysis", "satlms"};
  app.set_config("--config", "", "Flat 'key = value' file; keys are long flag names");
  app.set_version_flag("--version", kVersion);

  app.add_option("--rho2", o.rho2, "Input power scale N*sigma^2");
  app.add_option("--sigma-g2", o.sigma_g2, "Variance of the unknown system taps");
  app.add_option("--sigma-xi2", o.sigma_xi2, "Background noise variance");
  app.add_option("--S", o.S, "Saturation value (number or 'inf')");
  app.add_option("--mu", o.mu, "Step size");
  app.add_option("--dt", o.dt, "RK4 step in t");
  app.add_option("--t-end", o.t_end, "Final time t = n/N");
  app.add_option("--stride", o.stride, "Record every k-th RK4 step");
  app.add_option("--Q0", o.Q0, "Initial Q");
  app.add_option("--r0", o.r0, "Initial r");
  app.add_option("--N", o.N, "Number of taps");
  app.add_option("--trials", o.trials, "Ensemble size");
  app.add_option("--record-dt", o.record_dt, "Spacing of recorded simulation points in t");
  app.add_option("--seed", o.seed, "Master seed");
  app.add_option("--g-dist", o.g_dist, "gaussian|uniform|binary");
  app.add_option("--u-dist", o.u_dist, "gaussian|uniform|binary");
  app.add_option("--noise-dist", o.noise_dist, "gaussian|uniform|binary");
  app.add_option("--stat", o.stat, "mean|median_std|both");
  app.add_option("--S-from", o.S_from, "Sweep start");
  app.add_option("--S-to", o.S_to, "Sweep end (inclusive)");
  app.add_option("--S-step", o.S_step, "Sweep spacing");
  app.add_option("--nodes", o.nodes, "Quadrature nodes per panel");
  app.add_option("--nodes-2d", o.nodes_2d, "Quadrature nodes per panel for 2-D integrals");
  app.add_option("--out", o.out, "Output file (default stdout)");
  app.add_option("--manifest", o.manifest, "Manifest path (default <out>.manifest.json)");
  app.add_option("--summary", o.summary, "compare: JSON summary path");

  std::string command;
  for (const char* name :
       {"theory", "simulate", "compare", "steady", "critical", "sweep", "moments-check"}) {
    app.add_subcommand(name)->fallthrough()->callback([&command, name] { command = name; });
  }
  app.require_subcommand(1);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (command == "theory") return cmd_theory(o, out);
    if (command == "simulate") return cmd_simulate(o, out);
    if (command == "compare") return cmd_compare(o, out, err);
    if (command == "steady") return cmd_steady(o, out);
    if (command == "critical") return cmd_critical(o, out);
    if (command == "sweep") return cmd_sweep(o, out);
    if (command == "moments-check") return cmd_moments_check(o, out, forms);
  } catch (const InvalidParam& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kCheckFailed;
  }
  err << "error: no command\n";
  return kUsage;
}

}  // namespace satlms::cli
