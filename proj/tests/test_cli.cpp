#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "rcdiff_test_cli";

int rcdiff(const std::string& args) {
  const std::string cmd = std::string("\"") + RCDIFF_CLI_PATH + "\" " + args + " > \"" +
                          (kWork / "stdout.txt").string() + "\" 2> \"" + (kWork / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Fresh {
  Fresh() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
};

const std::string kQuick = " --h 1e-5 --horizon 0.3";

}  // namespace

TEST_CASE_METHOD(Fresh, "help and usage errors", "[cli]") {
  CHECK(rcdiff("--help") == 0);
  CHECK(rcdiff("") == 2);
  CHECK(rcdiff("transmogrify") == 2);
  CHECK(rcdiff("run --bogus-flag") == 2);
}

TEST_CASE_METHOD(Fresh, "run", "[cli]") {
  const fs::path a = kWork / "a", b = kWork / "b";
  REQUIRE(rcdiff("run --preset hybrid-300 --out " + a.string() + kQuick) == 0);
  REQUIRE(rcdiff("run --preset hybrid-300 --out " + b.string() + kQuick) == 0);
  CHECK(slurp(a / "trajectory.csv") == slurp(b / "trajectory.csv"));
  CHECK(slurp(a / "report.txt").find("convergence_time = ") != std::string::npos);
  CHECK(slurp(kWork / "stderr.txt").find("wall_clock_s") != std::string::npos);
  CHECK(slurp(a / "trajectory.csv").find("wall_clock") == std::string::npos);
}

TEST_CASE_METHOD(Fresh, "validation failures exit with 2", "[cli]") {
  CHECK(rcdiff("run --preset nope --out " + kWork.string()) == 2);
  CHECK(rcdiff("run --preset linear-300 --h 1e-3 --out " + kWork.string()) == 2);
  CHECK(slurp(kWork / "stderr.txt").find("require h <=") != std::string::npos);
  CHECK(rcdiff("run --set no.such.key=1 --out " + kWork.string()) == 2);
  CHECK(rcdiff("sweep --preset linear-300 --eps 0.01 --out " + kWork.string()) == 2);
  {
    std::ofstream cfg(kWork / "bad.cfg");
    cfg << "differentiator.variant = linear\ndifferentiator.a10 = -1\n";
  }
  CHECK(rcdiff("run --config " + (kWork / "bad.cfg").string() + " --out " + kWork.string()) == 2);
}

TEST_CASE_METHOD(Fresh, "divergence exits with 3", "[cli]") {
  CHECK(rcdiff("run --preset linear-300 --set signal.kind=polynomial --set signal.coefficients=0,0,0,0,0,0,1e12"
               " --h 1e-5 --horizon 2 --out " + kWork.string()) == 3);
  CHECK(slurp(kWork / "stderr.txt").find("diverged") != std::string::npos);
}

TEST_CASE_METHOD(Fresh, "lemma", "[cli]") {
  CHECK(rcdiff("lemma --system linear --init 1,1 --out " + kWork.string()) == 0);
  CHECK(fs::exists(kWork / "lemma.csv"));
  CHECK(rcdiff("lemma --system nonlinear --init 1,1 --random 3 --out " + kWork.string()) == 0);
  CHECK(rcdiff("lemma --system nonlinear --init 1,1 --horizon 0.5 --out " + kWork.string()) == 1);
  CHECK(rcdiff("lemma --system nonlinear --init 1 --out " + kWork.string()) == 2);
}

TEST_CASE_METHOD(Fresh, "freq", "[cli]") {
  REQUIRE(rcdiff("freq --omega 0,1,10 --h 1e-5 --out " + kWork.string()) == 0);
  const std::string csv = slurp(kWork / "freq.csv");
  CHECK(csv.rfind("omega,magnitude,phase,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE_METHOD(Fresh, "compare", "[cli]") {
  REQUIRE(rcdiff("compare linear-300 hybrid-300 --out " + kWork.string() + kQuick) == 0);
  const std::string csv = slurp(kWork / "comparison.csv");
  CHECK(csv.find("\nlinear-300,") != std::string::npos);
  CHECK(csv.find("\nhybrid-300,") != std::string::npos);
}

TEST_CASE_METHOD(Fresh, "stream", "[cli]") {
  {
    std::ofstream in(kWork / "in.csv");
    in << "t,v\n";
    for (int i = 0; i <= 100; ++i) in << i * 1e-4 << ",1\n";
  }
  REQUIRE(rcdiff("stream --preset hybrid-300 --h 1e-5 --input " + (kWork / "in.csv").string() + " --out " +
                 kWork.string()) == 0);
  const std::string csv = slurp(kWork / "stream.csv");
  CHECK(csv.rfind("t,x2\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 102);

  {
    std::ofstream in(kWork / "bad.csv");
    in << "t,v\n0,1\n0.2,1\n0.1,1\n";
  }
  CHECK(rcdiff("stream --preset hybrid-300 --input " + (kWork / "bad.csv").string() + " --output -") == 2);
  CHECK(slurp(kWork / "stderr.txt").find("line 4") != std::string::npos);
}
