#pragma once

// Experiment configuration and the command implementations behind the CLI.
//
// Configuration is a flat list of `section.key = value` lines. Presets are
// the same key-value text; a config file and `--set` overrides are merged on
// top of a preset in that order.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rcdiff/core.hpp"
#include "rcdiff/error.hpp"
#include "rcdiff/integrate.hpp"
#include "rcdiff/io.hpp"
#include "rcdiff/metrics.hpp"
#include "rcdiff/reference.hpp"
#include "rcdiff/signals.hpp"
#include "rcdiff/stream.hpp"

namespace rcdiff {

/// Process exit codes of the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitValidation = 2,
  kExitNumerical = 3,
};

// ---------------------------------------------------------------------------
// Key-value configuration

class KeyValues {
 public:
  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "differentiator.variant", "differentiator.a10", "differentiator.a11", "differentiator.a20",
        "differentiator.a21", "differentiator.alpha", "differentiator.alpha1", "differentiator.alpha2",
        "differentiator.realization", "gain.mode", "gain.value", "gain.epsilon", "gain.mu", "gain.t_max",
        "signal.kind", "signal.amplitude", "signal.omega", "signal.phase", "signal.offset", "signal.period",
        "signal.coefficients", "signal.path", "noise.amplitude", "noise.seed", "integrator.method",
        "integrator.h", "run.t0", "run.horizon", "run.hold", "init.x1", "init.x2", "output.decimate",
        "metrics.band", "metrics.steady_window", "metrics.peak_window", "metrics.deadband"};
    return keys;
  }

  /// Parses `key = value` lines; '#' starts a comment.
  static KeyValues parse(std::istream& in, const std::string& source = "config") {
    KeyValues kv;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string body = trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos) {
        throw ValidationError(source + ":" + std::to_string(number) + ": expected 'key = value'");
      }
      try {
        kv.set(trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
      } catch (const ValidationError& e) {
        throw ValidationError(source + ":" + std::to_string(number) + ": " + e.what());
      }
    }
    return kv;
  }

  static KeyValues parse(const std::string& text, const std::string& source = "config") {
    std::istringstream in(text);
    return parse(in, source);
  }

  static KeyValues load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path.string());
    return parse(in, path.string());
  }

  /// Applies one `key=value` override.
  void set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    detail::require(eq != std::string::npos, "override '" + assignment + "' is not key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  void set(const std::string& key, const std::string& value) {
    detail::require(known_keys().count(key) == 1, "unknown configuration key '" + key + "'");
    // the gain can be given either directly or as epsilon
    if (key == "gain.value") values_.erase("gain.epsilon");
    if (key == "gain.epsilon") values_.erase("gain.value");
    values_[key] = value;
  }

  void merge(const KeyValues& other) {
    for (const auto& [k, v] : other.values_) set(k, v);
  }

  bool has(const std::string& key) const { return values_.count(key) == 1; }

  std::string text(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double real(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return to_real(key, it->second);
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(text(key, ""));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_real(key, trim(item)));
    return out;
  }

  const std::map<std::string, std::string>& entries() const noexcept { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static double to_real(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (value.empty() || used != value.size() || !std::isfinite(x)) {
      throw ValidationError("key '" + key + "': '" + value + "' is not a finite number");
    }
    return x;
  }

  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Presets

inline const std::map<std::string, std::string>& preset_texts() {
  static const std::map<std::string, std::string> presets = {
      {"linear-300",
       "differentiator.variant = linear\n"
       "differentiator.a10 = 5\n"
       "differentiator.a20 = 2\n"
       "gain.value = 300\n"},
      {"linear-300-wform",
       "differentiator.variant = linear\n"
       "differentiator.a10 = 5\n"
       "differentiator.a20 = 2\n"
       "differentiator.realization = wform\n"
       "gain.value = 300\n"},
      // x2' = -300^2 (5 sig(e)^0.5 + 2 sig(x2/300)^0.5)
      {"nonlinear-300",
       "differentiator.variant = nonlinear-alt\n"
       "differentiator.a11 = 5\n"
       "differentiator.a21 = 2\n"
       "differentiator.alpha1 = 0.5\n"
       "differentiator.alpha2 = 0.5\n"
       "gain.value = 300\n"},
      // x2' = -300^2 (5 e + 0.5 sig(e)^0.5 + 2 x2/300 + 0.5 sig(x2/300)^0.5)
      {"hybrid-300",
       "differentiator.variant = hybrid-alt\n"
       "differentiator.a10 = 5\n"
       "differentiator.a11 = 0.5\n"
       "differentiator.a20 = 2\n"
       "differentiator.a21 = 0.5\n"
       "differentiator.alpha1 = 0.5\n"
       "differentiator.alpha2 = 0.5\n"
       "gain.value = 300\n"},
  };
  return presets;
}

inline KeyValues preset(const std::string& name) {
  const auto& all = preset_texts();
  auto it = all.find(name);
  if (it == all.end()) throw ValidationError("unknown preset '" + name + "'");
  return KeyValues::parse(it->second, "preset " + name);
}

// ---------------------------------------------------------------------------
// Experiment configuration

enum class Realization { Standard, WForm };

struct ExperimentConfig {
  DifferentiatorConfig differentiator;
  Realization realization = Realization::Standard;
  TestSignal signal;
  IntegratorSpec integrator;
  double t0 = 0.0;
  double horizon = 5.0;
  DiffState init{};
  SimulationOptions simulation{};
  MetricsOptions metrics{};
  std::optional<Noise> noise;
};

inline Gains gains_from(const KeyValues& kv) {
  Gains g;
  g.a10 = kv.real("differentiator.a10", g.a10);
  g.a11 = kv.real("differentiator.a11", g.a11);
  g.a20 = kv.real("differentiator.a20", g.a20);
  g.a21 = kv.real("differentiator.a21", g.a21);
  g.alpha = kv.real("differentiator.alpha", g.alpha);
  g.alpha1 = kv.real("differentiator.alpha1", g.alpha1);
  g.alpha2 = kv.real("differentiator.alpha2", g.alpha2);
  return g;
}

inline GainSchedule schedule_from(const KeyValues& kv) {
  const std::string mode = kv.text("gain.mode", "fixed");
  if (mode == "fixed") {
    if (kv.has("gain.epsilon")) return GainSchedule::from_epsilon(kv.real("gain.epsilon", 0.0));
    return GainSchedule::fixed(kv.real("gain.value", 300.0));
  }
  if (mode == "ramp") return GainSchedule::ramp(kv.real("gain.mu", 0.0), kv.real("gain.t_max", 0.0));
  throw ValidationError("gain.mode must be 'fixed' or 'ramp', got '" + mode + "'");
}

inline TestSignal signal_from(const KeyValues& kv) {
  const std::string kind = kv.text("signal.kind", "sine");
  TestSignal signal = [&] {
    if (kind == "sine") {
      return TestSignal::sine(kv.real("signal.amplitude", 1.0), kv.real("signal.omega", 1.0),
                              kv.real("signal.phase", 0.0), kv.real("signal.offset", 0.0));
    }
    if (kind == "triangular") {
      return TestSignal::triangular(kv.real("signal.amplitude", 1.0),
                                    kv.real("signal.period", 2.0 * std::numbers::pi));
    }
    if (kind == "polynomial") return TestSignal::polynomial(kv.reals("signal.coefficients"));
    if (kind == "samples") {
      const std::string path = kv.text("signal.path", "");
      detail::require(!path.empty(), "signal.kind = samples needs signal.path");
      std::ifstream in(path);
      if (!in) throw ValidationError("cannot open sample file " + path);
      try {
        return read_samples_csv(in);
      } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
      }
    }
    throw ValidationError("unknown signal.kind '" + kind + "'");
  }();
  return signal;
}

inline std::optional<Noise> noise_from(const KeyValues& kv) {
  const double amplitude = kv.real("noise.amplitude", 0.0);
  detail::require(amplitude >= 0.0, "noise.amplitude must be non-negative");
  if (amplitude == 0.0) return std::nullopt;
  const double seed = kv.real("noise.seed", 0.0);
  detail::require(seed >= 0.0 && seed == std::floor(seed), "noise.seed must be a non-negative integer");
  return Noise{amplitude, static_cast<std::uint64_t>(seed)};
}

/// Builds and validates a complete experiment from key-value settings.
inline ExperimentConfig build_experiment(const KeyValues& kv) {
  const Variant variant = parse_variant(kv.text("differentiator.variant", "hybrid-alt"));
  DifferentiatorConfig diff(variant, gains_from(kv), schedule_from(kv));

  const std::string realization = kv.text("differentiator.realization", "standard");
  detail::require(realization == "standard" || realization == "wform",
                  "differentiator.realization must be 'standard' or 'wform'");

  IntegratorSpec integrator;
  const std::string method = kv.text("integrator.method", "rk4");
  detail::require(method == "rk4" || method == "euler", "integrator.method must be 'rk4' or 'euler'");
  integrator.method = method == "rk4" ? Method::RK4 : Method::Euler;
  integrator.h = kv.real("integrator.h", 1e-6);
  check_step_guard(integrator, diff.schedule());

  const std::string hold = kv.text("run.hold", "continuous");
  detail::require(hold == "continuous" || hold == "zoh", "run.hold must be 'continuous' or 'zoh'");

  const double decimate = kv.real("output.decimate", 0.0);
  detail::require(decimate >= 0.0 && decimate == std::floor(decimate), "output.decimate must be a non-negative integer");

  std::optional<Noise> noise = noise_from(kv);
  TestSignal signal = signal_from(kv);
  if (noise) signal = signal.with_noise(*noise);

  ExperimentConfig cfg{.differentiator = diff,
                       .realization = realization == "wform" ? Realization::WForm : Realization::Standard,
                       .signal = std::move(signal),
                       .integrator = integrator,
                       .t0 = kv.real("run.t0", 0.0),
                       .horizon = kv.real("run.horizon", 5.0),
                       .init = {kv.real("init.x1", 0.0), kv.real("init.x2", 0.0)},
                       .simulation = {},
                       .metrics = {},
                       .noise = noise};
  detail::require(cfg.t0 >= 0.0, "run.t0 must be non-negative");
  detail::require(cfg.horizon > 0.0, "run.horizon must be positive");
  cfg.simulation.sampling.stride = static_cast<std::size_t>(decimate);
  cfg.simulation.hold = hold == "zoh" ? InputHold::ZeroOrderHold : InputHold::Continuous;
  cfg.metrics.band_fraction = kv.real("metrics.band", kDefaultBandFraction);
  cfg.metrics.steady_window_fraction = kv.real("metrics.steady_window", kDefaultSteadyWindowFraction);
  cfg.metrics.peak_window = kv.real("metrics.peak_window", kDefaultPeakWindow);
  cfg.metrics.deadband = kv.real("metrics.deadband", kDefaultDeadband);
  if (cfg.realization == Realization::WForm) {
    detail::require(variant == Variant::Linear, "wform realization requires the linear variant");
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// run

struct RunResult {
  Trajectory trajectory;
  MetricsReport report;
};

inline RunResult run_experiment(const ExperimentConfig& cfg) {
  const double t1 = cfg.t0 + cfg.horizon;
  Trajectory traj =
      cfg.realization == Realization::WForm
          ? simulate_wform(cfg.differentiator, cfg.signal, cfg.t0, t1, cfg.integrator, cfg.init, cfg.simulation)
          : simulate(cfg.differentiator, cfg.signal, cfg.t0, t1, cfg.integrator, cfg.init, cfg.simulation);
  MetricsReport report = evaluate(traj, cfg.differentiator.schedule(), cfg.metrics);
  return {std::move(traj), std::move(report)};
}

inline constexpr const char* kTrajectoryCsvHeader = "t,v,vdot,x1,x2,e1,e2";

inline void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  CsvWriter csv(out);
  csv.header(kTrajectoryCsvHeader);
  for (const auto& s : traj.samples) csv.row(s.t, s.v, s.vdot, s.x1, s.x2, s.e1, s.e2);
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

}  // namespace detail

/// Writes trajectory.csv and report.txt under `out_dir`.
inline RunResult cmd_run(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log) {
  RunResult result = run_experiment(cfg);
  {
    auto out = detail::open_output(out_dir / "trajectory.csv");
    write_trajectory_csv(result.trajectory, out);
  }
  {
    auto out = detail::open_output(out_dir / "report.txt");
    out << "variant = " << to_string(cfg.differentiator.variant()) << '\n' << to_key_value(result.report);
  }
  log << to_key_value(result.report);
  return result;
}

// ---------------------------------------------------------------------------
// compare

struct NamedExperiment {
  std::string name;
  ExperimentConfig config;
};

/// One metrics row per experiment, written to comparison.csv.
inline std::vector<MetricsReport> cmd_compare(const std::vector<NamedExperiment>& experiments,
                                              const std::filesystem::path& out_dir, std::ostream& log) {
  detail::require(experiments.size() >= 2, "compare needs at least two presets");
  std::vector<std::future<MetricsReport>> jobs;
  for (const auto& e : experiments) {
    jobs.push_back(std::async(std::launch::async, [&e] { return run_experiment(e.config).report; }));
  }
  std::vector<MetricsReport> reports;
  for (auto& j : jobs) reports.push_back(j.get());
  auto out = detail::open_output(out_dir / "comparison.csv");
  CsvWriter csv(out);
  csv.header(std::string("preset,") + kMetricsCsvHeader);
  for (std::size_t i = 0; i < experiments.size(); ++i) {
    csv.row(experiments[i].name, to_csv_row(reports[i]));
    log << experiments[i].name << ": " << to_csv_row(reports[i]) << '\n';
  }
  return reports;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepRow {
  double epsilon = 0.0;
  double h = 0.0;
  double steady_state_error = 0.0;
  std::optional<double> convergence_time;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  EpsilonOrderFit fit;
};

/// Re-runs `base` with fixed gain 1/eps for each eps. With `h_explicit`, a
/// step violating the stiffness guard is an error; otherwise h is tightened.
inline SweepResult run_sweep(const ExperimentConfig& base, const std::vector<double>& epsilons, bool h_explicit) {
  detail::require(epsilons.size() >= 3, "sweep needs at least three epsilon values");
  std::vector<ExperimentConfig> configs;
  for (double eps : epsilons) {
    ExperimentConfig cfg = base;
    cfg.differentiator = base.differentiator.with_schedule(GainSchedule::from_epsilon(eps));
    const double limit = max_stable_step(cfg.differentiator.schedule());
    if (cfg.integrator.h > limit) {
      if (h_explicit) check_step_guard(cfg.integrator, cfg.differentiator.schedule());
      cfg.integrator.h = limit;
    }
    configs.push_back(std::move(cfg));
  }
  std::vector<std::future<MetricsReport>> jobs;
  for (const auto& cfg : configs) {
    jobs.push_back(std::async(std::launch::async, [&cfg] { return run_experiment(cfg).report; }));
  }
  SweepResult result;
  std::vector<ErrorPoint> points;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const MetricsReport r = jobs[i].get();
    result.rows.push_back({epsilons[i], configs[i].integrator.h, r.steady_state_error, r.convergence_time});
    points.push_back({epsilons[i], r.steady_state_error});
  }
  result.fit = epsilon_order(points);
  return result;
}

inline SweepResult cmd_sweep(const ExperimentConfig& base, const std::vector<double>& epsilons, bool h_explicit,
                             const std::filesystem::path& out_dir, std::ostream& log) {
  SweepResult result = run_sweep(base, epsilons, h_explicit);
  auto out = detail::open_output(out_dir / "sweep.csv");
  CsvWriter csv(out);
  csv.header("epsilon,gain,h,steady_state_error,convergence_time");
  for (const auto& r : result.rows) {
    csv.row(r.epsilon, 1.0 / r.epsilon, r.h, r.steady_state_error,
            r.convergence_time ? format_real(*r.convergence_time) : std::string("nan"));
  }
  auto summary = detail::open_output(out_dir / "sweep_summary.txt");
  summary << "epsilon_order = " << format_real(result.fit.slope) << '\n';
  for (const auto& n : result.fit.notes) summary << "note = " << n << '\n';
  log << "epsilon_order = " << format_real(result.fit.slope) << '\n';
  return result;
}

// ---------------------------------------------------------------------------
// lemma

struct LemmaOptions {
  Variant system = Variant::Nonlinear;
  Gains gains{};
  std::vector<Vec<2>> inits;
  double horizon = 20.0;
  double h = 1e-3;
  double tolerance = 1e-3;
  double homogeneity_degree = -1.0;
  std::size_t homogeneity_points = 100;
  std::uint64_t seed = 1;
  bool write_trajectories = true;
};

inline constexpr double kDissipationTolerance = 1e-4;
inline constexpr double kHomogeneityTolerance = 1e-9;
inline constexpr double kDecayMinRSquared = 0.99;

struct LemmaInitResult {
  Vec<2> init{};
  std::optional<double> settling_time;
  bool settled_ok = true;  // finite-time systems must settle within the horizon
  bool positive_definite = true;
  bool rate_nonpositive = true;
  double max_dissipation_residual = 0.0;  // |fd - rate| / (1 + |rate|)
  bool dissipation_ok = true;
  std::optional<LineFit> decay_fit;  // linear system only
  bool decay_ok = true;

  bool ok() const { return settled_ok && positive_definite && rate_nonpositive && dissipation_ok && decay_ok; }
};

struct LemmaReport {
  std::vector<LemmaInitResult> runs;
  std::optional<double> max_homogeneity_residual;
  bool ok() const {
    const bool homog = !max_homogeneity_residual || *max_homogeneity_residual <= kHomogeneityTolerance;
    return homog && std::all_of(runs.begin(), runs.end(), [](const auto& r) { return r.ok(); });
  }
};

/// Uniform points in [-5, 5]^2.
inline std::vector<Vec<2>> random_inits(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-5.0, 5.0);
  std::vector<Vec<2>> out(count);
  for (auto& p : out) {
    p[0] = dist(rng);
    p[1] = dist(rng);
  }
  return out;
}

/// Settling, Lyapunov and decay checks along one trajectory.
inline LemmaInitResult check_lemma_run(const TimeScaleSystem& sys, const RawTrajectory<2>& traj,
                                       const LemmaOptions& opt) {
  LemmaInitResult r;
  r.init = traj.x.front();
  r.settling_time = settling_time(traj, opt.tolerance);
  const bool finite_time = sys.variant() != Variant::Linear;
  r.settled_ok = !finite_time || r.settling_time.has_value();

  std::vector<double> v(traj.t.size());
  for (std::size_t i = 0; i < traj.t.size(); ++i) {
    const auto& z = traj.x[i];
    v[i] = lyapunov(sys, z[0], z[1]);
    const bool origin = z[0] == 0.0 && z[1] == 0.0;
    if (origin ? v[i] != 0.0 : !(v[i] > 0.0)) r.positive_definite = false;
    if (lyapunov_rate(sys, z[0], z[1]) > 0.0) r.rate_nonpositive = false;
  }
  // V is differenced over short local flows from each sample rather than
  // across grid neighbours: RK4 loses its order where z1 crosses zero, and
  // that grid error would otherwise swamp the comparison. The stencil is
  // kept tiny because V has unbounded curvature on the z1 = 0 axis.
  const double delta = 1e-6 * opt.h;
  const auto forward = [&](double, const Vec<2>& z) { return rhs_timescale(sys, z[0], z[1]); };
  const auto backward = [&](double, const Vec<2>& z) {
    const Vec<2> f = rhs_timescale(sys, z[0], z[1]);
    return Vec<2>{-f[0], -f[1]};
  };
  for (std::size_t i = 0; i < traj.t.size(); ++i) {
    const Vec<2> ahead = step(forward, traj.x[i], 0.0, delta);
    const Vec<2> behind = step(backward, traj.x[i], 0.0, delta);
    const double fd = (lyapunov(sys, ahead[0], ahead[1]) - lyapunov(sys, behind[0], behind[1])) / (2.0 * delta);
    const double rate = lyapunov_rate(sys, traj.x[i][0], traj.x[i][1]);
    r.max_dissipation_residual = std::max(r.max_dissipation_residual, std::abs(fd - rate) / (1.0 + std::abs(rate)));
  }
  r.dissipation_ok = r.max_dissipation_residual <= kDissipationTolerance;

  if (!finite_time) {
    // log-linear fit over the segment still above the numerical floor
    std::vector<double> ts, logs;
    for (std::size_t i = 0; i < traj.t.size(); ++i) {
      const double n = std::hypot(traj.x[i][0], traj.x[i][1]);
      if (n < 1e-10) break;
      ts.push_back(traj.t[i]);
      logs.push_back(std::log(n));
    }
    if (ts.size() >= 2) {
      r.decay_fit = fit_line(ts, logs);
      r.decay_ok = r.decay_fit->slope < 0.0 && r.decay_fit->r_squared >= kDecayMinRSquared;
    }
  }
  return r;
}

inline double max_homogeneity_residual(const TimeScaleSystem& sys, double k, std::size_t points, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-5.0, 5.0);
  double worst = 0.0;
  for (std::size_t i = 0; i < points; ++i) {
    const double z1 = dist(rng);
    const double z2 = dist(rng);
    for (double lambda : {0.5, 2.0, 10.0}) {
      worst = std::max(worst, homogeneity_residual(sys, k, lambda, z1, z2));
    }
  }
  return worst;
}

inline LemmaReport run_lemma(const LemmaOptions& opt, const std::filesystem::path* traj_dir = nullptr) {
  detail::require(!opt.inits.empty(), "lemma needs at least one initial condition");
  detail::require(opt.horizon > 0.0, "lemma horizon must be positive");
  const TimeScaleSystem sys(opt.system, opt.gains);
  LemmaReport report;
  for (std::size_t i = 0; i < opt.inits.size(); ++i) {
    const RawTrajectory<2> traj =
        simulate_timescale(sys, opt.inits[i], opt.horizon, {Method::RK4, opt.h}, SampleOptions::full_rate());
    report.runs.push_back(check_lemma_run(sys, traj, opt));
    if (traj_dir) {
      auto out = detail::open_output(*traj_dir / ("lemma_traj_" + std::to_string(i) + ".csv"));
      CsvWriter csv(out);
      csv.header("tau,z1,z2,V,Vdot");
      const std::size_t stride = SampleOptions{}.resolve(traj.t.size() - 1);
      for (std::size_t j = 0; j < traj.t.size(); j += stride) {
        const auto& z = traj.x[j];
        csv.row(traj.t[j], z[0], z[1], lyapunov(sys, z[0], z[1]), lyapunov_rate(sys, z[0], z[1]));
      }
    }
  }
  if (opt.system == Variant::Nonlinear) {
    report.max_homogeneity_residual =
        max_homogeneity_residual(sys, opt.homogeneity_degree, opt.homogeneity_points, opt.seed);
  }
  return report;
}

inline LemmaReport cmd_lemma(const LemmaOptions& opt, const std::filesystem::path& out_dir, std::ostream& log) {
  LemmaReport report = run_lemma(opt, opt.write_trajectories ? &out_dir : nullptr);
  auto out = detail::open_output(out_dir / "lemma.csv");
  CsvWriter csv(out);
  csv.header(
      "z1_0,z2_0,settling_time,positive_definite,rate_nonpositive,max_dissipation_residual,decay_slope,decay_r2,ok");
  auto flag = [](bool b) { return std::string(b ? "1" : "0"); };
  for (const auto& r : report.runs) {
    csv.row(r.init[0], r.init[1], r.settling_time ? format_real(*r.settling_time) : std::string("nan"),
            flag(r.positive_definite), flag(r.rate_nonpositive), r.max_dissipation_residual,
            r.decay_fit ? format_real(r.decay_fit->slope) : std::string("nan"),
            r.decay_fit ? format_real(r.decay_fit->r_squared) : std::string("nan"), flag(r.ok()));
    log << "init (" << format_real(r.init[0]) << ", " << format_real(r.init[1]) << "): settling "
        << (r.settling_time ? format_real(*r.settling_time) : std::string("not settled")) << ", "
        << (r.ok() ? "ok" : "FAILED") << '\n';
  }
  if (report.max_homogeneity_residual) {
    log << "homogeneity residual = " << format_real(*report.max_homogeneity_residual) << '\n';
  }
  log << (report.ok() ? "all checks passed" : "some checks FAILED") << '\n';
  return report;
}

// ---------------------------------------------------------------------------
// freq

struct FreqRow {
  double omega = 0.0;
  FrequencyPoint analytic;
  FrequencyPoint simulated;
  double magnitude_rel_dev = 0.0;
  double phase_dev = 0.0;
};

/// Wraps an angle difference into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a;
}

/// Steady-state response of the linear differentiator to sin(omega t),
/// measured by a least-squares sinusoid fit over two periods after the
/// transient has decayed.
inline FrequencyPoint simulate_freq_response(double a10, double a20, double epsilon, double omega, double h) {
  detail::require(a10 > 0.0 && a20 > 0.0 && epsilon > 0.0, "a10, a20 and epsilon must be positive");
  detail::require(omega >= 0.0, "omega must be non-negative");
  if (omega == 0.0) return {0.0, 0.0};
  const DifferentiatorConfig cfg(Variant::Linear, Gains{.a10 = a10, .a20 = a20},
                                 GainSchedule::from_epsilon(epsilon));
  const IntegratorSpec spec{Method::RK4, std::min(h, max_stable_step(cfg.schedule()))};
  // slowest decay rate of eps^2 s^2 + a20 eps s + a10
  const double disc = a20 * a20 - 4.0 * a10;
  const double decay = disc < 0.0 ? a20 / (2.0 * epsilon) : (a20 - std::sqrt(disc)) / (2.0 * epsilon);
  const double settle = 30.0 / decay;
  const double period = 2.0 * std::numbers::pi / omega;
  const double t1 = settle + 2.0 * period;
  const Trajectory traj = simulate(cfg, TestSignal::sine(1.0, omega), 0.0, t1, spec);
  std::vector<double> ts, ys;
  for (const auto& s : traj.samples) {
    if (s.t < settle) continue;
    ts.push_back(s.t);
    ys.push_back(s.x2);
  }
  const SineFit fit = fit_sinusoid(ts, ys, omega);
  return {fit.amplitude, fit.phase};
}

inline std::vector<FreqRow> cmd_freq(double a10, double a20, double epsilon, const std::vector<double>& omegas,
                                     double h, const std::filesystem::path& out_dir, std::ostream& log) {
  detail::require(!omegas.empty(), "freq needs at least one omega");
  std::vector<FreqRow> rows;
  for (double w : omegas) {
    FreqRow r;
    r.omega = w;
    r.analytic = linear_freq_response(a10, a20, epsilon, w);
    r.simulated = simulate_freq_response(a10, a20, epsilon, w, h);
    r.magnitude_rel_dev =
        r.analytic.magnitude > 0.0 ? std::abs(r.simulated.magnitude - r.analytic.magnitude) / r.analytic.magnitude
                                   : std::abs(r.simulated.magnitude);
    r.phase_dev = w > 0.0 ? std::abs(wrap_angle(r.simulated.phase - r.analytic.phase)) : 0.0;
    rows.push_back(r);
  }
  auto out = detail::open_output(out_dir / "freq.csv");
  CsvWriter csv(out);
  csv.header("omega,magnitude,phase,sim_magnitude,sim_phase,magnitude_rel_dev,phase_dev");
  for (const auto& r : rows) {
    csv.row(r.omega, r.analytic.magnitude, r.analytic.phase, r.simulated.magnitude, r.simulated.phase,
            r.magnitude_rel_dev, r.phase_dev);
    log << "omega " << format_real(r.omega) << ": |H| " << format_real(r.analytic.magnitude) << " sim "
        << format_real(r.simulated.magnitude) << '\n';
  }
  return rows;
}

// ---------------------------------------------------------------------------
// stream

/// Online processing of a sample CSV with the experiment's differentiator.
inline std::size_t cmd_stream(const ExperimentConfig& cfg, std::istream& in, std::ostream& out,
                              std::optional<double> sample_rate) {
  StreamOptions opt;
  opt.max_step = std::min(cfg.integrator.h, max_stable_step(cfg.differentiator.schedule()));
  opt.sample_rate = sample_rate;
  opt.noise = cfg.noise;
  opt.init = cfg.init;
  return run_stream(cfg.differentiator, in, out, opt);
}

}  // namespace rcdiff
