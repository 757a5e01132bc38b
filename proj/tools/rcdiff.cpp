// rcdiff: run differentiator experiments and write CSV reports.
//
//   rcdiff run     --preset hybrid-300 --out results/
//   rcdiff compare linear-300 nonlinear-300 hybrid-300 --out results/
//   rcdiff sweep   --preset linear-300 --eps 0.01,0.005,0.0025,0.00125
//   rcdiff lemma   --system nonlinear --init 1,1 --random 10
//   rcdiff freq    --a10 5 --a20 2 --eps 0.0033333333333333335 --omega 0.5,1,5
//   rcdiff stream  --preset hybrid-300 --input samples.csv --rate 10000

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rcdiff/experiment.hpp"

namespace {

using namespace rcdiff;

struct CommonFlags {
  std::string config;
  std::string preset;
  std::string out = ".";
  std::optional<double> h;
  std::optional<double> horizon;
  std::optional<std::size_t> decimate;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;

  void attach(CLI::App* cmd, bool with_preset = true) {
    cmd->add_option("--config", config, "key-value config file")->check(CLI::ExistingFile);
    if (with_preset) cmd->add_option("--preset", preset, "named preset (linear-300, nonlinear-300, hybrid-300)");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--h", h, "integration step");
    cmd->add_option("--horizon", horizon, "simulated time span");
    cmd->add_option("--decimate", decimate, "keep every N-th step (0: automatic, 1: full rate)");
    cmd->add_option("--seed", seed, "noise seed");
    cmd->add_option("--set", overrides, "override a config key: section.key=value");
  }

  KeyValues settings(const std::string& preset_name) const {
    KeyValues kv = preset_name.empty() ? KeyValues{} : rcdiff::preset(preset_name);
    if (!config.empty()) kv.merge(KeyValues::load(config));
    if (h) kv.set("integrator.h", format_real(*h));
    if (horizon) kv.set("run.horizon", format_real(*horizon));
    if (decimate) kv.set("output.decimate", std::to_string(*decimate));
    if (seed) kv.set("noise.seed", std::to_string(*seed));
    for (const auto& o : overrides) kv.set_assignment(o);
    return kv;
  }
};

std::vector<Vec<2>> parse_inits(const std::vector<std::string>& items) {
  std::vector<Vec<2>> out;
  for (const auto& item : items) {
    const auto comma = item.find(',');
    if (comma == std::string::npos) throw ValidationError("initial condition '" + item + "' is not z1,z2");
    KeyValues kv;
    kv.set("init.x1", item.substr(0, comma));
    kv.set("init.x2", item.substr(comma + 1));
    out.push_back({kv.real("init.x1", 0.0), kv.real("init.x2", 0.0)});
  }
  return out;
}

int report_error(const std::exception& e, int code) {
  std::cerr << "rcdiff: " << e.what() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rapid-convergent differentiator experiments"};
  app.set_help_flag("--help", "print this help and exit");
  app.require_subcommand(1);

  CommonFlags run_flags;
  auto* run = app.add_subcommand("run", "simulate one configuration; writes trajectory.csv and report.txt");
  run_flags.attach(run);

  CommonFlags compare_flags;
  std::vector<std::string> compare_presets;
  auto* compare = app.add_subcommand("compare", "run several presets; writes comparison.csv");
  compare->add_option("presets", compare_presets, "preset names")->required();
  compare_flags.attach(compare, false);

  CommonFlags sweep_flags;
  std::vector<double> sweep_eps;
  auto* sweep = app.add_subcommand("sweep", "steady-state error versus epsilon; writes sweep.csv");
  sweep_flags.attach(sweep);
  sweep->add_option("--eps", sweep_eps, "epsilon values")->delimiter(',')->required();

  std::string lemma_system = "nonlinear";
  std::vector<std::string> lemma_init_text;
  std::size_t lemma_random = 0;
  std::uint64_t lemma_seed = 1;
  double lemma_horizon = 20.0;
  double lemma_h = 1e-3;
  double lemma_tol = 1e-3;
  std::string lemma_out = ".";
  std::vector<std::string> lemma_overrides;
  auto* lemma = app.add_subcommand("lemma", "convergence and Lyapunov checks of a time-scale system");
  lemma->add_option("--system", lemma_system, "linear | nonlinear | nonlinear-alt | hybrid | hybrid-alt");
  lemma->add_option("--init", lemma_init_text, "initial condition z1,z2 (repeatable)");
  lemma->add_option("--random", lemma_random, "add N random initial conditions in [-5,5]^2");
  lemma->add_option("--seed", lemma_seed, "seed for random initial conditions and sample points");
  lemma->add_option("--horizon", lemma_horizon, "horizon in tau units");
  lemma->add_option("--h", lemma_h, "integration step in tau units");
  lemma->add_option("--tolerance", lemma_tol, "settling band on max(|z1|, |z2|)");
  lemma->add_option("--out", lemma_out, "output directory");
  lemma->add_option("--set", lemma_overrides, "gain override: differentiator.KEY=value");

  double freq_a10 = 5.0, freq_a20 = 2.0, freq_eps = 1.0 / 300.0, freq_h = 1e-6;
  std::vector<double> freq_omegas;
  std::string freq_out = ".";
  auto* freq = app.add_subcommand("freq", "analytic and simulated frequency response of the linear variant");
  freq->add_option("--a10", freq_a10);
  freq->add_option("--a20", freq_a20);
  freq->add_option("--eps", freq_eps);
  freq->add_option("--omega", freq_omegas, "angular frequencies")->delimiter(',')->required();
  freq->add_option("--h", freq_h, "integration step");
  freq->add_option("--out", freq_out, "output directory");

  CommonFlags stream_flags;
  std::string stream_input = "-";
  std::string stream_output;
  std::optional<double> stream_rate;
  auto* stream = app.add_subcommand("stream", "online differentiation of a (t, v) sample CSV");
  stream_flags.attach(stream);
  stream->add_option("--input", stream_input, "input CSV ('-' for stdin)");
  stream->add_option("--output", stream_output, "output CSV ('-' for stdout; default OUT/stream.csv)");
  stream->add_option("--rate", stream_rate, "expected sample rate in Hz");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    const auto started = std::chrono::steady_clock::now();
    auto wall = [&] {
      const std::chrono::duration<double> d = std::chrono::steady_clock::now() - started;
      std::cerr << "wall_clock_s = " << d.count() << '\n';
    };

    if (*run) {
      const ExperimentConfig cfg = build_experiment(run_flags.settings(run_flags.preset));
      cmd_run(cfg, run_flags.out, std::cout);
      wall();
      return kExitOk;
    }
    if (*compare) {
      std::vector<NamedExperiment> experiments;
      for (const auto& name : compare_presets) {
        experiments.push_back({name, build_experiment(compare_flags.settings(name))});
      }
      cmd_compare(experiments, compare_flags.out, std::cout);
      wall();
      return kExitOk;
    }
    if (*sweep) {
      const ExperimentConfig cfg = build_experiment(sweep_flags.settings(sweep_flags.preset));
      const bool h_explicit = sweep_flags.h.has_value() || sweep_flags.settings("").has("integrator.h");
      cmd_sweep(cfg, sweep_eps, h_explicit, sweep_flags.out, std::cout);
      wall();
      return kExitOk;
    }
    if (*lemma) {
      LemmaOptions opt;
      opt.system = parse_variant(lemma_system);
      KeyValues kv;
      for (const auto& o : lemma_overrides) kv.set_assignment(o);
      opt.gains = gains_from(kv);
      opt.inits = parse_inits(lemma_init_text);
      const auto extra = random_inits(lemma_random, lemma_seed);
      opt.inits.insert(opt.inits.end(), extra.begin(), extra.end());
      opt.horizon = lemma_horizon;
      opt.h = lemma_h;
      opt.tolerance = lemma_tol;
      opt.seed = lemma_seed;
      const LemmaReport report = cmd_lemma(opt, lemma_out, std::cout);
      return report.ok() ? kExitOk : kExitCheckFailed;
    }
    if (*freq) {
      cmd_freq(freq_a10, freq_a20, freq_eps, freq_omegas, freq_h, freq_out, std::cout);
      return kExitOk;
    }
    if (*stream) {
      const ExperimentConfig cfg = build_experiment(stream_flags.settings(stream_flags.preset));
      std::ifstream file_in;
      std::istream* in = &std::cin;
      if (stream_input != "-") {
        file_in.open(stream_input);
        if (!file_in) throw ValidationError("cannot open input " + stream_input);
        in = &file_in;
      }
      std::ofstream file_out;
      std::ostream* out = &std::cout;
      if (stream_output != "-") {
        const std::filesystem::path path =
            stream_output.empty() ? std::filesystem::path(stream_flags.out) / "stream.csv" : std::filesystem::path(stream_output);
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        file_out.open(path, std::ios::binary);
        if (!file_out) throw ValidationError("cannot write " + path.string());
        out = &file_out;
      }
      const std::size_t n = cmd_stream(cfg, *in, *out, stream_rate);
      std::cerr << "samples = " << n << '\n';
      return kExitOk;
    }
  } catch (const ValidationError& e) {
    return report_error(e, kExitValidation);
  } catch (const NumericalError& e) {
    return report_error(e, kExitNumerical);
  } catch (const std::filesystem::filesystem_error& e) {
    return report_error(e, kExitValidation);
  }
  return kExitValidation;
}
