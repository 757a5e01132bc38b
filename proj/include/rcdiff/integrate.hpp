#pragma once

// Fixed-step explicit integration of differentiators and reference systems.

#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include "rcdiff/core.hpp"
#include "rcdiff/error.hpp"
#include "rcdiff/signals.hpp"

namespace rcdiff {

enum class Method { RK4, Euler };

struct IntegratorSpec {
  Method method = Method::RK4;
  double h = 1e-6;
};

/// The fast boundary-layer dynamics evolve on the 1/g time scale; a step
/// must be at most (1/g_max) / kStiffnessFactor.
inline constexpr double kStiffnessFactor = 20.0;
inline constexpr double kDivergenceLimit = 1e9;
inline constexpr std::size_t kDefaultMaxSamples = 100'000;

inline double max_stable_step(const GainSchedule& schedule) {
  return 1.0 / (schedule.max_gain() * kStiffnessFactor);
}

inline void check_step_guard(const IntegratorSpec& spec, const GainSchedule& schedule) {
  detail::require(spec.h > 0.0 && std::isfinite(spec.h), "integration step must be positive");
  const double limit = max_stable_step(schedule);
  if (spec.h > limit) {
    std::ostringstream msg;
    msg.precision(6);
    msg << "step h = " << spec.h << " too large for gain " << schedule.max_gain()
        << "; require h <= " << limit;
    throw ValidationError(msg.str());
  }
}

template <std::size_t N>
using Vec = std::array<double, N>;

namespace detail {

template <std::size_t N>
Vec<N> axpy(const Vec<N>& x, double a, const Vec<N>& y) {
  Vec<N> out;
  for (std::size_t i = 0; i < N; ++i) out[i] = x[i] + a * y[i];
  return out;
}

template <std::size_t N>
void check_finite(const Vec<N>& x, double t, const char* what) {
  for (double v : x) {
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << what << " became non-finite at t = " << t;
      throw NumericalError(msg.str());
    }
  }
}

template <std::size_t N>
void check_bounded(const Vec<N>& x, double t) {
  for (double v : x) {
    if (!(std::abs(v) <= kDivergenceLimit)) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "state diverged (|x| > " << kDivergenceLimit << ") at t = " << t;
      throw NumericalError(msg.str());
    }
  }
}

}  // namespace detail

/// One explicit step of x' = f(t, x). `f` maps (double, const Vec<N>&) to Vec<N>.
template <std::size_t N, class F>
Vec<N> step(F&& f, const Vec<N>& x, double t, double h, Method method = Method::RK4) {
  detail::require(h > 0.0, "integration step must be positive");
  detail::check_finite(x, t, "state");
  if (method == Method::Euler) {
    const Vec<N> k1 = f(t, x);
    detail::check_finite(k1, t, "stage 1");
    return detail::axpy(x, h, k1);
  }
  const Vec<N> k1 = f(t, x);
  detail::check_finite(k1, t, "stage 1");
  const Vec<N> k2 = f(t + 0.5 * h, detail::axpy(x, 0.5 * h, k1));
  detail::check_finite(k2, t, "stage 2");
  const Vec<N> k3 = f(t + 0.5 * h, detail::axpy(x, 0.5 * h, k2));
  detail::check_finite(k3, t, "stage 3");
  const Vec<N> k4 = f(t + h, detail::axpy(x, h, k3));
  detail::check_finite(k4, t, "stage 4");
  Vec<N> out;
  for (std::size_t i = 0; i < N; ++i) {
    out[i] = x[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

/// Which integration steps are kept in the output.
struct SampleOptions {
  std::size_t stride = 0;  // 0: choose the smallest stride keeping <= max_samples
  std::size_t max_samples = kDefaultMaxSamples;

  std::size_t resolve(std::size_t steps) const {
    if (stride > 0) return stride;
    const std::size_t cap = max_samples > 1 ? max_samples - 1 : 1;
    return steps <= cap ? 1 : (steps + cap - 1) / cap;
  }

  static SampleOptions full_rate() { return {1, 0}; }
};

/// Uniform time grid t_i = t0 + i h, i = 0..steps.
struct TimeGrid {
  double t0 = 0.0;
  double h = 0.0;
  std::size_t steps = 0;

  static TimeGrid over(double t0, double t1, double h) {
    detail::require(std::isfinite(t0) && std::isfinite(t1) && t1 > t0, "time span must satisfy t1 > t0");
    detail::require(h > 0.0 && std::isfinite(h), "integration step must be positive");
    const double n = std::floor((t1 - t0) / h + 1e-9);
    detail::require(n >= 1.0, "time span shorter than one step");
    return {t0, h, static_cast<std::size_t>(n)};
  }

  double at(std::size_t i) const { return t0 + static_cast<double>(i) * h; }
};

template <std::size_t N>
struct RawTrajectory {
  std::vector<double> t;
  std::vector<Vec<N>> x;
};

/// Integrates x' = f(t, x) from init over [t0, t1] on a uniform grid.
template <std::size_t N, class F>
RawTrajectory<N> simulate_raw(F&& f, const Vec<N>& init, double t0, double t1, const IntegratorSpec& spec,
                              SampleOptions sampling = {}) {
  const TimeGrid grid = TimeGrid::over(t0, t1, spec.h);
  const std::size_t stride = sampling.resolve(grid.steps);
  RawTrajectory<N> out;
  out.t.reserve(grid.steps / stride + 1);
  out.x.reserve(grid.steps / stride + 1);
  Vec<N> x = init;
  detail::check_finite(x, t0, "initial state");
  out.t.push_back(t0);
  out.x.push_back(x);
  for (std::size_t i = 0; i < grid.steps; ++i) {
    const double t = grid.at(i);
    const double t_next = grid.at(i + 1);
    x = step(f, x, t, t_next - t, spec.method);
    detail::check_bounded(x, t_next);
    if ((i + 1) % stride == 0) {
      out.t.push_back(t_next);
      out.x.push_back(x);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Differentiator simulation

struct TrajectorySample {
  double t = 0.0;
  double x1 = 0.0;
  double x2 = 0.0;
  double v = 0.0;     // noise-free signal value
  double vdot = 0.0;  // analytic derivative (right derivative at corners)
  double e1 = 0.0;    // x1 - v
  double e2 = 0.0;    // x2 - vdot
};

struct Trajectory {
  double t0 = 0.0;
  double h = 0.0;          // spacing of retained samples
  double step = 0.0;       // integration step
  std::vector<TrajectorySample> samples;

  double t_end() const { return samples.empty() ? t0 : samples.back().t; }
};

/// How the input enters the right-hand side within one step.
enum class InputHold {
  Continuous,     // v evaluated at every stage time
  ZeroOrderHold,  // v sampled at the step start and held for all stages
};

struct SimulationOptions {
  SampleOptions sampling{};
  InputHold hold = InputHold::Continuous;
};

namespace detail {

inline TrajectorySample record(const TestSignal& signal, double t, const Vec<2>& x) {
  TrajectorySample s;
  s.t = t;
  s.x1 = x[0];
  s.x2 = x[1];
  s.v = signal.clean_value(t);
  s.vdot = signal.slope(t);
  s.e1 = s.x1 - s.v;
  s.e2 = s.x2 - s.vdot;
  return s;
}

// Advances a two-state field over the grid; `field(t, x, v)` receives the
// input according to `hold`, `to_x` maps the integrated state to (x1, x2).
template <class Field, class ToX>
Trajectory run_grid(Field&& field, ToX&& to_x, const Vec<2>& init, const TestSignal& signal,
                    const TimeGrid& grid, const IntegratorSpec& spec, const SimulationOptions& options) {
  const std::size_t stride = options.sampling.resolve(grid.steps);
  Trajectory out;
  out.t0 = grid.t0;
  out.h = grid.h * static_cast<double>(stride);
  out.step = grid.h;
  out.samples.reserve(grid.steps / stride + 1);
  Vec<2> z = init;
  check_finite(z, grid.t0, "initial state");
  out.samples.push_back(record(signal, grid.t0, to_x(z)));
  for (std::size_t i = 0; i < grid.steps; ++i) {
    const double t = grid.at(i);
    const double t_next = grid.at(i + 1);
    if (options.hold == InputHold::ZeroOrderHold) {
      const double held = signal.value(t);
      z = step([&](double s, const Vec<2>& y) { return field(s, y, held); }, z, t, t_next - t, spec.method);
    } else {
      z = step([&](double s, const Vec<2>& y) { return field(s, y, signal.value(s)); }, z, t, t_next - t,
               spec.method);
    }
    check_bounded(z, t_next);
    if ((i + 1) % stride == 0) out.samples.push_back(record(signal, t_next, to_x(z)));
  }
  return out;
}

inline Vec<2> differentiator_field(const DifferentiatorConfig& config, double t, const Vec<2>& x, double v) {
  const StateRate r = rhs(config, DiffState{x[0], x[1]}, v, t);
  return {r.dx1, r.dx2};
}

inline void check_signal_covers(const TestSignal& signal, double t0, double t1) {
  const auto [lo, hi] = signal.domain();
  const double tol = 1e-9 * std::max({1.0, std::abs(t0), std::abs(t1)});
  detail::require(t0 >= lo - tol && t1 <= hi + tol, "time span exceeds the signal's domain");
}

}  // namespace detail

/// Simulates a differentiator driven by `signal` over [t0, t1].
inline Trajectory simulate(const DifferentiatorConfig& config, const TestSignal& signal, double t0, double t1,
                           const IntegratorSpec& spec, DiffState init = {}, SimulationOptions options = {}) {
  check_step_guard(spec, config.schedule());
  detail::require(t0 >= 0.0, "differentiator simulations start at t >= 0");
  detail::check_signal_covers(signal, t0, t1);
  const TimeGrid grid = TimeGrid::over(t0, t1, spec.h);
  return detail::run_grid(
      [&](double t, const Vec<2>& x, double v) { return detail::differentiator_field(config, t, x, v); },
      [](const Vec<2>& x) { return x; }, Vec<2>{init.x1, init.x2}, signal, grid, spec, options);
}

/// Simulates the linear differentiator in its high-gain observer realization
///   w1' = w2 - a20 g (w1 - v),  w2' = -a10 g^2 (w1 - v)
/// and maps back through x1 = w1 - a20 w2 / (a10 g), x2 = w2.
inline Trajectory simulate_wform(const DifferentiatorConfig& config, const TestSignal& signal, double t0,
                                 double t1, const IntegratorSpec& spec, DiffState init = {},
                                 SimulationOptions options = {}) {
  detail::require(config.variant() == Variant::Linear, "w-form realization exists only for the linear variant");
  detail::require(config.schedule().mode() == GainSchedule::Mode::Fixed,
                  "w-form realization requires a fixed gain");
  check_step_guard(spec, config.schedule());
  detail::check_signal_covers(signal, t0, t1);
  const double g = config.schedule().max_gain();
  const double a10 = config.gains().a10;
  const double a20 = config.gains().a20;
  const TimeGrid grid = TimeGrid::over(t0, t1, spec.h);
  const Vec<2> w0{init.x1 + a20 * init.x2 / (a10 * g), init.x2};
  return detail::run_grid(
      [&](double, const Vec<2>& w, double v) {
        const double e = w[0] - v;
        return Vec<2>{w[1] - a20 * g * e, -a10 * g * g * e};
      },
      [&](const Vec<2>& w) { return Vec<2>{w[0] - a20 * w[1] / (a10 * g), w[1]}; }, w0, signal, grid, spec,
      options);
}

}  // namespace rcdiff
