#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "rcdiff/experiment.hpp"

using namespace rcdiff;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rcdiff_test_experiment_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Preset shortened for unit-test run times.
ExperimentConfig quick(const std::string& name, double horizon = 0.5) {
  KeyValues kv = preset(name);
  kv.set("integrator.h", "1e-5");
  kv.set("run.horizon", format_real(horizon));
  return build_experiment(kv);
}

}  // namespace

TEST_CASE("key-value parsing", "[experiment][config]") {
  const auto kv = KeyValues::parse("# comment\ndifferentiator.a10 = 4.5  # trailing\n\nsignal.kind=triangular\n");
  CHECK(kv.real("differentiator.a10", 0) == 4.5);
  CHECK(kv.text("signal.kind", "") == "triangular");
  CHECK(kv.real("differentiator.a20", 7) == 7);

  CHECK_THROWS_WITH(KeyValues::parse("a.b = 1\n", "f.cfg"), ContainsSubstring("f.cfg:1") && ContainsSubstring("a.b"));
  CHECK_THROWS_WITH(KeyValues::parse("gain.value = 3\nnonsense\n", "f.cfg"), ContainsSubstring("f.cfg:2"));
  CHECK_THROWS_AS(KeyValues::parse("gain.value = abc\n").real("gain.value", 0), ValidationError);

  KeyValues g = KeyValues::parse("gain.value = 300\n");
  g.set("gain.epsilon", "0.01");
  CHECK_FALSE(g.has("gain.value"));
  CHECK(schedule_from(g).max_gain() == Approx(100.0));
}

TEST_CASE("presets", "[experiment][config]") {
  for (const auto& [name, text] : preset_texts()) {
    INFO(name);
    const ExperimentConfig cfg = build_experiment(preset(name));
    CHECK(cfg.differentiator.schedule().max_gain() == 300.0);
    CHECK(cfg.integrator.h == 1e-6);
    CHECK(cfg.horizon == 5.0);
  }
  const auto hybrid = build_experiment(preset("hybrid-300"));
  CHECK(hybrid.differentiator.variant() == Variant::HybridAlt);
  CHECK(hybrid.differentiator.gains().a11 == 0.5);
  CHECK(build_experiment(preset("linear-300-wform")).realization == Realization::WForm);
  CHECK_THROWS_AS(preset("quadratic-sec9"), ValidationError);
}

TEST_CASE("experiment validation", "[experiment][config]") {
  auto build = [](const std::string& text) { return build_experiment(KeyValues::parse(text)); };
  CHECK_THROWS_WITH(build("integrator.h = 1e-3\n"), ContainsSubstring("require h <="));
  CHECK_THROWS_AS(build("differentiator.variant = sliding\n"), ValidationError);
  CHECK_THROWS_AS(build("differentiator.variant = nonlinear\ndifferentiator.alpha = 1\n"), ValidationError);
  CHECK_THROWS_AS(build("gain.mode = ramp\ngain.mu = 0\ngain.t_max = 1\n"), ValidationError);
  CHECK_THROWS_AS(build("run.horizon = -1\n"), ValidationError);
  CHECK_THROWS_AS(build("signal.kind = samples\nsignal.path = /nonexistent/file.csv\n"), ValidationError);
  CHECK_THROWS_AS(build("differentiator.variant = hybrid\ndifferentiator.realization = wform\n"),
                  ValidationError);
  CHECK_THROWS_AS(build("noise.amplitude = 0.1\nnoise.seed = 1.5\n"), ValidationError);
  CHECK_NOTHROW(build("gain.mode = ramp\ngain.mu = 6000\ngain.t_max = 0.05\n"));
}

TEST_CASE("run writes a trajectory and a report", "[experiment][run]") {
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  std::ostringstream log;
  const RunResult r = cmd_run(quick("hybrid-300"), a, log);
  cmd_run(quick("hybrid-300"), b, log);
  CHECK(r.report.convergence_time);
  const std::string csv = slurp(a / "trajectory.csv");
  CHECK(csv.rfind(std::string(kTrajectoryCsvHeader) + "\n", 0) == 0);
  CHECK(csv == slurp(b / "trajectory.csv"));
  CHECK(slurp(a / "report.txt").find("variant = hybrid-alt") != std::string::npos);
  CHECK(log.str().find("steady_state_error = ") != std::string::npos);
}

TEST_CASE("samples file as the input signal", "[experiment][run]") {
  const fs::path dir = scratch("samples");
  {
    std::ofstream f(dir / "ramp.csv");
    f << "t,v\n0,0\n1,2\n";
  }
  KeyValues kv = preset("linear-300");
  kv.set("signal.kind", "samples");
  kv.set("signal.path", (dir / "ramp.csv").string());
  kv.set("integrator.h", "1e-5");
  kv.set("run.horizon", "1");
  const RunResult r = run_experiment(build_experiment(kv));
  CHECK(r.trajectory.samples.back().x2 == Approx(2.0).margin(1e-6));

  {
    std::ofstream f(dir / "broken.csv");
    f << "t,v\n0,0\n0.5,oops\n";
  }
  kv.set("signal.path", (dir / "broken.csv").string());
  CHECK_THROWS_WITH(build_experiment(kv), ContainsSubstring("broken.csv") && ContainsSubstring("line 3"));
}

TEST_CASE("compare", "[experiment][compare]") {
  const fs::path dir = scratch("compare");
  std::ostringstream log;
  const auto reports =
      cmd_compare({{"hybrid-300", quick("hybrid-300")}, {"hybrid-300", quick("hybrid-300")}}, dir, log);
  CHECK(to_csv_row(reports[0]) == to_csv_row(reports[1]));
  std::istringstream csv(slurp(dir / "comparison.csv"));
  std::string header, row1, row2;
  std::getline(csv, header);
  std::getline(csv, row1);
  std::getline(csv, row2);
  CHECK(header == std::string("preset,") + kMetricsCsvHeader);
  CHECK(row1 == row2);
  CHECK_THROWS_AS(cmd_compare({{"x", quick("linear-300")}}, dir, log), ValidationError);
}

TEST_CASE("w-form preset matches the linear preset", "[experiment][compare]") {
  const RunResult a = run_experiment(quick("linear-300", 1.0));
  const RunResult b = run_experiment(quick("linear-300-wform", 1.0));
  CHECK(b.report.steady_state_error == Approx(a.report.steady_state_error).epsilon(1e-4));
  REQUIRE(a.report.convergence_time);
  REQUIRE(b.report.convergence_time);
  CHECK(*b.report.convergence_time == Approx(*a.report.convergence_time).margin(1e-4));
}

TEST_CASE("sweep", "[experiment][sweep]") {
  ExperimentConfig base = quick("linear-300", 5.0);
  base.integrator.h = 2e-4;
  const fs::path dir = scratch("sweep");
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_sweep(base, {0.01}, false, dir, log), ValidationError);
  CHECK_THROWS_WITH(cmd_sweep(base, {0.01, 0.005, 0.0005}, true, dir, log), ContainsSubstring("require h"));

  const SweepResult r = cmd_sweep(base, {0.01, 0.005, 0.0025}, false, dir, log);
  CHECK(r.fit.slope == Approx(1.0).margin(0.15));
  CHECK(r.rows.size() == 3);
  CHECK(r.rows[2].h == Approx(0.0025 / 20));
  CHECK(slurp(dir / "sweep_summary.txt").find("epsilon_order = ") == 0);
}

TEST_CASE("lemma checks", "[experiment][lemma]") {
  const fs::path dir = scratch("lemma");
  std::ostringstream log;

  LemmaOptions lin;
  lin.system = Variant::Linear;
  lin.inits = {{1, 1}};
  const LemmaReport lr = cmd_lemma(lin, dir, log);
  CHECK(lr.ok());
  REQUIRE(lr.runs[0].decay_fit);
  CHECK(lr.runs[0].decay_fit->slope < 0.0);
  CHECK(fs::exists(dir / "lemma_traj_0.csv"));

  LemmaOptions nl;
  nl.inits = {{1, 1}, {0, 0}};
  const auto extra = random_inits(5, 3);
  nl.inits.insert(nl.inits.end(), extra.begin(), extra.end());
  nl.write_trajectories = false;
  const LemmaReport nr = run_lemma(nl);
  CHECK(nr.ok());
  REQUIRE(nr.runs[0].settling_time);
  CHECK(*nr.runs[0].settling_time < 20.0);
  CHECK(nr.runs[1].settling_time == 0.0);
  REQUIRE(nr.max_homogeneity_residual);
  CHECK(*nr.max_homogeneity_residual < kHomogeneityTolerance);

  nl.horizon = 0.5;  // too short to settle
  CHECK_FALSE(run_lemma(nl).ok());
  CHECK(random_inits(4, 9) == random_inits(4, 9));
}

TEST_CASE("frequency response table", "[experiment][freq]") {
  const fs::path dir = scratch("freq");
  std::ostringstream log;
  const double eps = 1.0 / 300;
  const auto rows = cmd_freq(5, 2, eps, {0.0, 1.0, 10.0 / eps}, 1e-5, dir, log);
  CHECK(rows[0].analytic.magnitude == 0.0);
  CHECK(rows[1].analytic.magnitude == Approx(1.0).margin(2e-3));
  CHECK(rows[2].analytic.magnitude < 10.0 / eps);
  for (const auto& r : rows) {
    CHECK(r.magnitude_rel_dev < 1e-3);
    CHECK(r.phase_dev < 1e-3);
  }
  CHECK(wrap_angle(2 * std::numbers::pi + 0.1) == Approx(0.1));
}

TEST_CASE("stream command", "[experiment][stream]") {
  std::ostringstream samples;
  samples << "t,v\n";
  for (int i = 0; i <= 1000; ++i) samples << format_real(i * 1e-4) << ',' << format_real(3.0) << '\n';
  std::istringstream in(samples.str());
  std::ostringstream out;
  CHECK(cmd_stream(quick("hybrid-300"), in, out, 1e4) == 1001);
  const std::string text = out.str();
  const auto last = text.substr(text.rfind('\n', text.size() - 2) + 1);
  const double x2 = std::stod(last.substr(last.find(',') + 1));
  CHECK(std::abs(x2) < 1e-3);
}

TEST_CASE("chattering regression baseline", "[experiment][slow]") {
  // Pinned from the first full-length run at deadband 1e-4 and default sampling.
  const RunResult hybrid = run_experiment(build_experiment(preset("hybrid-300")));
  REQUIRE(hybrid.report.chattering_index);
  CHECK(*hybrid.report.chattering_index == 0.0);
  const RunResult linear = run_experiment(build_experiment(preset("linear-300")));
  REQUIRE(linear.report.chattering_index);
  CHECK(*linear.report.chattering_index == Approx(0.20052610027668594).epsilon(1e-6));
}
