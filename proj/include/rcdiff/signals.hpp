#pragma once

// Test signals with analytic derivatives and corner (generalized derivative)
// metadata.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rcdiff/error.hpp"

namespace rcdiff {

/// amplitude * sin(angular_frequency * t + phase) + offset
struct Sine {
  double amplitude = 1.0;
  double angular_frequency = 1.0;
  double phase = 0.0;
  double offset = 0.0;
};

/// Zero at t = 0, rising with slope 4A/T to +A at T/4, falling to -A at 3T/4.
struct Triangular {
  double amplitude = 1.0;
  double period = 2.0 * std::numbers::pi;
};

/// c0 + c1 t + c2 t^2 + ...
struct Polynomial {
  std::vector<double> coefficients;
};

enum class Interpolation { Linear };

struct Sampled {
  std::vector<double> times;
  std::vector<double> values;
  Interpolation interpolation = Interpolation::Linear;
};

/// A point where the derivative jumps: left and right one-sided derivatives.
struct Corner {
  double t = 0.0;
  double left = 0.0;
  double right = 0.0;
};

/// Uniform additive noise on [-amplitude, amplitude], a pure function of
/// (seed, key). Keys are sample indices or the bit pattern of a time value.
struct Noise {
  double amplitude = 0.0;
  std::uint64_t seed = 0;

  double sample(std::uint64_t key) const noexcept {
    // splitmix64 finalizer over the combined key
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (key + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    const double u = static_cast<double>(z >> 11) * 0x1.0p-53;  // [0, 1)
    return amplitude * (2.0 * u - 1.0);
  }

  double at(double t) const noexcept { return sample(std::bit_cast<std::uint64_t>(t)); }
};

class TestSignal {
 public:
  using Kind = std::variant<Sine, Triangular, Polynomial, Sampled>;

  static TestSignal sine(double amplitude, double angular_frequency, double phase = 0.0,
                         double offset = 0.0) {
    detail::require(std::isfinite(amplitude) && std::isfinite(angular_frequency) &&
                        std::isfinite(phase) && std::isfinite(offset),
                    "sine parameters must be finite");
    return TestSignal(Sine{amplitude, angular_frequency, phase, offset});
  }

  static TestSignal triangular(double amplitude, double period) {
    detail::require(std::isfinite(amplitude), "triangular amplitude must be finite");
    detail::require(period > 0.0 && std::isfinite(period), "triangular period must be positive");
    return TestSignal(Triangular{amplitude, period});
  }

  static TestSignal polynomial(std::vector<double> coefficients) {
    detail::require(!coefficients.empty(), "polynomial needs at least one coefficient");
    for (double c : coefficients) detail::require(std::isfinite(c), "polynomial coefficients must be finite");
    return TestSignal(Polynomial{std::move(coefficients)});
  }

  static TestSignal sampled(std::vector<double> times, std::vector<double> values,
                            Interpolation interpolation = Interpolation::Linear) {
    detail::require(times.size() == values.size(), "sample times and values differ in length");
    detail::require(times.size() >= 2, "sampled signal needs at least two samples");
    for (std::size_t i = 0; i < times.size(); ++i) {
      detail::require(std::isfinite(times[i]) && std::isfinite(values[i]),
                      "sample " + std::to_string(i) + " is not finite");
      if (i > 0) {
        detail::require(times[i] > times[i - 1],
                        "sample times must be strictly increasing (index " + std::to_string(i) + ")");
      }
    }
    return TestSignal(Sampled{std::move(times), std::move(values), interpolation});
  }

  TestSignal with_noise(Noise noise) const {
    detail::require(noise.amplitude >= 0.0 && std::isfinite(noise.amplitude),
                    "noise amplitude must be non-negative");
    TestSignal copy = *this;
    copy.noise_ = noise;
    return copy;
  }

  const Kind& kind() const noexcept { return kind_; }
  const std::optional<Noise>& noise() const noexcept { return noise_; }

  /// Time interval on which the signal is defined.
  std::pair<double, double> domain() const {
    if (const auto* s = std::get_if<Sampled>(&kind_)) return {s->times.front(), s->times.back()};
    return {-INFINITY, INFINITY};
  }

  /// Signal value including noise, if any.
  double value(double t) const {
    double v = clean_value(t);
    if (noise_ && noise_->amplitude > 0.0) v += noise_->at(t);
    return v;
  }

  double clean_value(double t) const {
    detail::require(std::isfinite(t), "signal evaluated at non-finite time");
    return std::visit([&](const auto& k) { return eval(k, t); }, kind_);
  }

  /// Analytic derivative. Throws at corner instants; use corner_at() there.
  double derivative(double t) const {
    if (auto c = corner_at(t)) {
      throw ValidationError("derivative requested at corner t = " + std::to_string(c->t) +
                            "; use the corner's left/right derivatives");
    }
    return slope(t);
  }

  /// Derivative that never throws: the right derivative at corners.
  double slope(double t) const {
    detail::require(std::isfinite(t), "signal evaluated at non-finite time");
    return std::visit([&](const auto& k) { return slope_of(k, t); }, kind_);
  }

  /// Corners with t0 <= t <= t1, in increasing order.
  std::vector<Corner> corners(double t0, double t1) const {
    std::vector<Corner> out;
    if (const auto* tri = std::get_if<Triangular>(&kind_)) {
      const double s = 4.0 * tri->amplitude / tri->period;
      const double half = tri->period / 2.0;
      // corners at T/4 + j T/2; even j are peaks, odd j troughs
      auto j = static_cast<long long>(std::ceil((t0 - tri->period / 4.0) / half));
      for (;; ++j) {
        const double tc = tri->period / 4.0 + static_cast<double>(j) * half;
        if (tc < t0) continue;
        if (tc > t1) break;
        const bool peak = (j % 2 == 0);
        out.push_back({tc, peak ? s : -s, peak ? -s : s});
      }
    } else if (const auto* smp = std::get_if<Sampled>(&kind_)) {
      for (std::size_t i = 1; i + 1 < smp->times.size(); ++i) {
        const double tc = smp->times[i];
        if (tc < t0 || tc > t1) continue;
        out.push_back({tc, segment_slope(*smp, i - 1), segment_slope(*smp, i)});
      }
    }
    return out;
  }

  /// The corner at t, if t coincides with one to within a few ulps.
  std::optional<Corner> corner_at(double t) const {
    const double tol = 1e-12 * std::max(1.0, std::abs(t));
    auto found = corners(t - tol, t + tol);
    if (found.empty()) return std::nullopt;
    return found.front();
  }

 private:
  explicit TestSignal(Kind kind) : kind_(std::move(kind)) {}

  static double eval(const Sine& s, double t) {
    return s.amplitude * std::sin(s.angular_frequency * t + s.phase) + s.offset;
  }

  static double phase_fraction(const Triangular& w, double t) {
    double p = std::fmod(t, w.period) / w.period;
    if (p < 0.0) p += 1.0;
    return p;
  }

  static double eval(const Triangular& w, double t) {
    const double p = phase_fraction(w, t);
    const double a = w.amplitude;
    if (p < 0.25) return 4.0 * a * p;
    if (p < 0.75) return 2.0 * a - 4.0 * a * p;
    return 4.0 * a * p - 4.0 * a;
  }

  static double eval(const Polynomial& poly, double t) {
    double acc = 0.0;
    for (auto it = poly.coefficients.rbegin(); it != poly.coefficients.rend(); ++it) acc = acc * t + *it;
    return acc;
  }

  // Index of the segment [times[i], times[i+1]) containing t; the last
  // segment is closed on the right.
  static std::size_t segment_of(const Sampled& s, double t) {
    const double lo = s.times.front();
    const double hi = s.times.back();
    const double tol = 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)});
    if (t < lo - tol || t > hi + tol) {
      throw ValidationError("time " + std::to_string(t) + " outside sampled domain [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    auto it = std::upper_bound(s.times.begin(), s.times.end(), t);
    std::size_t i = it == s.times.begin() ? 0 : static_cast<std::size_t>(it - s.times.begin()) - 1;
    return std::min(i, s.times.size() - 2);
  }

  static double segment_slope(const Sampled& s, std::size_t i) {
    return (s.values[i + 1] - s.values[i]) / (s.times[i + 1] - s.times[i]);
  }

  static double eval(const Sampled& s, double t) {
    const std::size_t i = segment_of(s, t);
    const double tc = std::clamp(t, s.times.front(), s.times.back());
    return s.values[i] + segment_slope(s, i) * (tc - s.times[i]);
  }

  static double slope_of(const Sine& s, double t) {
    return s.amplitude * s.angular_frequency * std::cos(s.angular_frequency * t + s.phase);
  }

  static double slope_of(const Triangular& w, double t) {
    const double p = phase_fraction(w, t);
    const double s = 4.0 * w.amplitude / w.period;
    return (p < 0.25 || p >= 0.75) ? s : -s;
  }

  static double slope_of(const Polynomial& poly, double t) {
    double acc = 0.0;
    const auto& c = poly.coefficients;
    for (std::size_t k = c.size(); k-- > 1;) acc = acc * t + static_cast<double>(k) * c[k];
    return acc;
  }

  static double slope_of(const Sampled& s, double t) { return segment_slope(s, segment_of(s, t)); }

  Kind kind_;
  std::optional<Noise> noise_;
};

inline TestSignal ingest_samples(std::span<const double> times, std::span<const double> values,
                                 Interpolation interpolation = Interpolation::Linear) {
  return TestSignal::sampled({times.begin(), times.end()}, {values.begin(), values.end()},
                             interpolation);
}

// ---------------------------------------------------------------------------
// Two-column (t, v) CSV with a header row.

namespace detail {

inline double parse_number(std::string_view field, std::size_t line) {
  auto trim = [](std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
  };
  const std::string text(trim(field));
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (text.empty() || used != text.size() || !std::isfinite(value)) {
    throw ValidationError("line " + std::to_string(line) + ": '" + text + "' is not a finite number");
  }
  return value;
}

}  // namespace detail

/// Incremental reader for (t, v) sample streams; holds one line at a time.
class SampleCsvReader {
 public:
  explicit SampleCsvReader(std::istream& in) : in_(in) {
    std::string header;
    if (!std::getline(in_, header)) throw ValidationError("line 1: missing CSV header");
    line_ = 1;
    if (std::count(header.begin(), header.end(), ',') != 1) {
      throw ValidationError("line 1: header must have exactly two columns");
    }
  }

  /// Next sample, or nullopt at end of input. Blank lines are rejected.
  std::optional<std::pair<double, double>> next() {
    std::string row;
    if (!std::getline(in_, row)) return std::nullopt;
    ++line_;
    if (!row.empty() && row.back() == '\r') row.pop_back();
    const auto comma = row.find(',');
    if (comma == std::string::npos || row.find(',', comma + 1) != std::string::npos) {
      throw ValidationError("line " + std::to_string(line_) + ": expected two comma-separated columns");
    }
    const double t = detail::parse_number(std::string_view(row).substr(0, comma), line_);
    const double v = detail::parse_number(std::string_view(row).substr(comma + 1), line_);
    if (has_last_ && !(t > last_t_)) {
      throw ValidationError("line " + std::to_string(line_) + ": timestamps must be strictly increasing");
    }
    has_last_ = true;
    last_t_ = t;
    return std::make_pair(t, v);
  }

  std::size_t line() const noexcept { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
  bool has_last_ = false;
  double last_t_ = 0.0;
};

inline TestSignal read_samples_csv(std::istream& in) {
  SampleCsvReader reader(in);
  std::vector<double> times, values;
  while (auto row = reader.next()) {
    times.push_back(row->first);
    values.push_back(row->second);
  }
  return TestSignal::sampled(std::move(times), std::move(values));
}

}  // namespace rcdiff
