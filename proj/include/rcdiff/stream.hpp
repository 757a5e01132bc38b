#pragma once

// Online, sample-by-sample execution of a differentiator.

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>

#include "rcdiff/core.hpp"
#include "rcdiff/integrate.hpp"
#include "rcdiff/io.hpp"
#include "rcdiff/signals.hpp"

namespace rcdiff {

/// Holds each incoming sample over the interval that follows it (zero-order
/// hold) and advances with explicit sub-steps no longer than `max_step`.
/// When samples arrive on the simulate() grid with one sub-step per
/// interval, the result matches simulate() with InputHold::ZeroOrderHold bit
/// for bit.
class OnlineDifferentiator {
 public:
  OnlineDifferentiator(DifferentiatorConfig config, double max_step, DiffState init = {},
                       Method method = Method::RK4)
      : config_(std::move(config)), max_step_(max_step), method_(method), x_{init.x1, init.x2} {
    check_step_guard({method, max_step}, config_.schedule());
  }

  /// Feeds one sample and returns the state at its timestamp.
  DiffState push(double t, double v) {
    detail::require(std::isfinite(t) && std::isfinite(v), "stream sample must be finite");
    if (!started_) {
      started_ = true;
    } else {
      detail::require(t > t_, "stream timestamps must be strictly increasing");
      advance_to(t);
    }
    t_ = t;
    held_ = v;
    return state();
  }

  DiffState state() const noexcept { return {x_[0], x_[1]}; }
  double time() const noexcept { return t_; }
  bool started() const noexcept { return started_; }

 private:
  void advance_to(double t_next) {
    const double span = t_next - t_;
    const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(span / max_step_ * (1.0 - 1e-12))));
    const double h = span / static_cast<double>(n);
    auto field = [this](double s, const Vec<2>& y) {
      return detail::differentiator_field(config_, s, y, held_);
    };
    double t = t_;
    for (std::size_t i = 0; i < n; ++i) {
      const double t_end = (i + 1 == n) ? t_next : t_ + static_cast<double>(i + 1) * h;
      x_ = step(field, x_, t, t_end - t, method_);
      detail::check_bounded(x_, t_end);
      t = t_end;
    }
  }

  DifferentiatorConfig config_;
  double max_step_;
  Method method_;
  Vec<2> x_;
  double t_ = 0.0;
  double held_ = 0.0;
  bool started_ = false;
};

struct StreamOptions {
  double max_step = 1e-6;
  std::optional<double> sample_rate;  // when set, sample spacing must equal 1/rate
  std::optional<Noise> noise;         // added to sample k as noise.sample(k)
  DiffState init{};
};

/// Reads a (t, v) CSV and writes "t,x2" per sample in one pass. Returns the
/// number of samples processed.
inline std::size_t run_stream(const DifferentiatorConfig& config, std::istream& in, std::ostream& out,
                              const StreamOptions& options) {
  if (options.sample_rate) detail::require(*options.sample_rate > 0.0, "sample rate must be positive");
  SampleCsvReader reader(in);
  OnlineDifferentiator diff(config, options.max_step, options.init);
  CsvWriter csv(out);
  csv.header("t,x2");
  std::uint64_t k = 0;
  double t_prev = 0.0;
  while (auto row = reader.next()) {
    const auto [t, v_raw] = *row;
    if (options.sample_rate && k > 0) {
      const double expected = 1.0 / *options.sample_rate;
      if (std::abs((t - t_prev) - expected) > 1e-6 * expected) {
        throw ValidationError("line " + std::to_string(reader.line()) + ": sample spacing " +
                              format_real(t - t_prev) + " does not match rate " +
                              format_real(*options.sample_rate));
      }
    }
    const double v = options.noise ? v_raw + options.noise->sample(k) : v_raw;
    const DiffState s = diff.push(t, v);
    csv.row(t, s.x2);
    t_prev = t;
    ++k;
  }
  return static_cast<std::size_t>(k);
}

}  // namespace rcdiff
