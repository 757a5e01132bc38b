#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "rcdiff/signals.hpp"

using namespace rcdiff;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

// sin(x) by its Taylor series, summed until terms vanish.
double series_sin(double x) {
  double term = x, sum = x;
  for (int k = 1; k < 40; ++k) {
    term *= -x * x / ((2.0 * k) * (2.0 * k + 1.0));
    sum += term;
  }
  return sum;
}

double central_difference(const TestSignal& s, double t, double d = 1e-6) {
  return (s.clean_value(t + d) - s.clean_value(t - d)) / (2 * d);
}

}  // namespace

TEST_CASE("signal values", "[signals]") {
  const auto sine = TestSignal::sine(1, 1, 0);
  CHECK(sine.value(0.0) == 0.0);
  CHECK(sine.value(0.5) == Approx(series_sin(0.5)).epsilon(1e-15));
  CHECK(sine.value(0.5) == Approx(0.4794255386).epsilon(1e-10));

  const auto tri = TestSignal::triangular(1, 4);
  CHECK(tri.value(1.0) == Approx(1.0).epsilon(1e-15));
  CHECK(tri.value(0.0) == 0.0);
  CHECK(tri.value(3.0) == Approx(-1.0).epsilon(1e-15));
  CHECK(tri.value(2.0) == Approx(0.0).margin(1e-15));
  CHECK(tri.value(0.5) == Approx(0.5));

  const auto poly = TestSignal::polynomial({1.0, -2.0, 3.0});
  CHECK(poly.value(2.0) == Approx(1 - 4 + 12));
  CHECK(poly.derivative(2.0) == Approx(-2 + 12));
}

TEST_CASE("signal derivatives", "[signals]") {
  CHECK(TestSignal::sine(1, 1, 0).derivative(0.0) == 1.0);
  const auto tri = TestSignal::triangular(1, 4);
  CHECK(tri.derivative(0.5) == 1.0);
  CHECK(tri.derivative(2.0) == -1.0);
  CHECK(tri.derivative(3.5) == 1.0);

  SECTION("corner instants refuse a two-sided derivative") {
    CHECK_THROWS_AS(tri.derivative(1.0), ValidationError);
    CHECK_THROWS_WITH(tri.derivative(3.0), ContainsSubstring("corner"));
    const auto c = tri.corner_at(1.0);
    REQUIRE(c);
    CHECK(c->left == 1.0);
    CHECK(c->right == -1.0);
    const auto trough = tri.corner_at(3.0);
    REQUIRE(trough);
    CHECK(trough->left == -1.0);
    CHECK(trough->right == 1.0);
    CHECK(tri.slope(1.0) == -1.0);
  }

  SECTION("corner enumeration") {
    const auto cs = tri.corners(0.0, 10.0);
    REQUIRE(cs.size() == 5);
    for (std::size_t i = 0; i < cs.size(); ++i) CHECK(cs[i].t == Approx(1.0 + 2.0 * i));
    CHECK(TestSignal::sine(1, 1).corners(0, 100).empty());
  }
}

TEST_CASE("analytic derivative agrees with finite differences", "[signals][property]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> t(0.0, 20.0);
  const TestSignal signals[] = {TestSignal::sine(1.3, 2.1, 0.4, -0.2), TestSignal::triangular(2.0, 3.0),
                                TestSignal::polynomial({0.5, 1.0, -0.25, 0.01})};
  for (const auto& s : signals) {
    for (int i = 0; i < 300; ++i) {
      const double ti = t(rng);
      const auto near = s.corners(ti - 1e-5, ti + 1e-5);
      if (!near.empty()) continue;
      REQUIRE(s.derivative(ti) == Approx(central_difference(s, ti)).epsilon(1e-6).margin(1e-6));
    }
  }
}

TEST_CASE("ingested samples", "[signals][samples]") {
  const std::vector<double> t01{0, 1}, v01{0, 1};
  const auto ramp = ingest_samples(t01, v01);
  CHECK(ramp.value(0.5) == 0.5);
  CHECK(ramp.derivative(0.5) == 1.0);

  const std::vector<double> t3{0, 1, 2}, v3{0, 1, 0};
  const auto hat = ingest_samples(t3, v3);
  const auto c = hat.corner_at(1.0);
  REQUIRE(c);
  CHECK(c->left == 1.0);
  CHECK(c->right == -1.0);
  CHECK_THROWS_AS(hat.derivative(1.0), ValidationError);
  CHECK(hat.corners(0, 2).size() == 1);

  const std::vector<double> flat_v{3, 3};
  const auto flat = ingest_samples(t01, flat_v);
  for (double t : {0.0, 0.3, 1.0}) CHECK(flat.derivative(t) == 0.0);

  SECTION("domain") {
    CHECK_THROWS_AS(hat.value(2.5), ValidationError);
    CHECK_THROWS_AS(hat.value(-0.1), ValidationError);
    CHECK(hat.value(2.0) == 0.0);
  }

  SECTION("malformed input") {
    const std::vector<double> bad_t{0, 0}, one{1};
    CHECK_THROWS_AS(ingest_samples(bad_t, v01), ValidationError);
    CHECK_THROWS_AS(ingest_samples(one, one), ValidationError);
    CHECK_THROWS_AS(ingest_samples(t3, v01), ValidationError);
  }
}

TEST_CASE("sample CSV reading", "[signals][samples]") {
  std::istringstream good("t,v\n0,1\n0.5,2\n1,0\n");
  const auto s = read_samples_csv(good);
  CHECK(s.value(0.25) == Approx(1.5));

  auto error_of = [](const std::string& text) {
    std::istringstream in(text);
    try {
      read_samples_csv(in);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK_THAT(error_of("t,v\n0,1\n1,x\n"), ContainsSubstring("line 3"));
  CHECK_THAT(error_of("t,v\n0,1\n0,2\n"), ContainsSubstring("line 3"));
  CHECK_THAT(error_of("t,v\n0,1\n1,2,3\n"), ContainsSubstring("line 3"));
  CHECK_THAT(error_of("t,v\n0,nan\n1,2\n"), ContainsSubstring("line 2"));
  CHECK_THAT(error_of("t\n0\n"), ContainsSubstring("line 1"));
  CHECK_THAT(error_of(""), ContainsSubstring("line 1"));
}

TEST_CASE("noise is reproducible and bounded", "[signals][noise]") {
  const Noise n{.amplitude = 0.01, .seed = 9};
  const Noise other{.amplitude = 0.01, .seed = 10};
  bool differs = false;
  double lo = 1, hi = -1;
  for (std::uint64_t k = 0; k < 10000; ++k) {
    REQUIRE(n.sample(k) == n.sample(k));
    REQUIRE(std::abs(n.sample(k)) <= 0.01);
    differs = differs || n.sample(k) != other.sample(k);
    lo = std::min(lo, n.sample(k));
    hi = std::max(hi, n.sample(k));
  }
  CHECK(differs);
  CHECK(lo < -0.009);
  CHECK(hi > 0.009);

  const auto noisy = TestSignal::sine(1, 1).with_noise(n);
  CHECK(noisy.value(0.3) == noisy.value(0.3));
  CHECK(noisy.value(0.3) != noisy.clean_value(0.3));
  CHECK(std::abs(noisy.value(0.3) - noisy.clean_value(0.3)) <= 0.01);
  CHECK_THROWS_AS(TestSignal::sine(1, 1).with_noise({.amplitude = -1}), ValidationError);
}

TEST_CASE("signal parameter validation", "[signals]") {
  CHECK_THROWS_AS(TestSignal::triangular(1, 0), ValidationError);
  CHECK_THROWS_AS(TestSignal::sine(NAN, 1), ValidationError);
  CHECK_THROWS_AS(TestSignal::polynomial({}), ValidationError);
  CHECK_THROWS_AS(TestSignal::sine(1, 1).value(INFINITY), ValidationError);
}
