#pragma once

// Tracking-performance measures over differentiator trajectories.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rcdiff/core.hpp"
#include "rcdiff/error.hpp"
#include "rcdiff/integrate.hpp"
#include "rcdiff/io.hpp"

namespace rcdiff {

inline constexpr double kDefaultBandFraction = 0.01;
inline constexpr double kDefaultSteadyWindowFraction = 0.2;
inline constexpr double kDefaultPeakWindow = 0.1;
inline constexpr double kDefaultDeadband = 1e-4;

/// First t* with |e2(t)| <= band_fraction * max|vdot| for every retained
/// sample t >= t*; nullopt when the last sample is outside the band.
inline std::optional<double> convergence_time(const Trajectory& traj, double band_fraction = kDefaultBandFraction) {
  detail::require(band_fraction > 0.0 && band_fraction < 1.0, "band fraction must lie in (0, 1)");
  detail::require(!traj.samples.empty(), "convergence_time: empty trajectory");
  double vmax = 0.0;
  for (const auto& s : traj.samples) vmax = std::max(vmax, std::abs(s.vdot));
  const double band = band_fraction * vmax;
  std::optional<double> t_star;
  for (std::size_t i = traj.samples.size(); i-- > 0;) {
    if (std::abs(traj.samples[i].e2) > band) break;
    t_star = traj.samples[i].t;
  }
  return t_star;
}

namespace detail {

inline std::size_t window_start(const Trajectory& traj, double window_fraction) {
  detail::require(window_fraction > 0.0 && window_fraction <= 1.0, "window fraction must lie in (0, 1]");
  detail::require(!traj.samples.empty(), "empty trajectory");
  const double t_from = traj.t_end() - window_fraction * (traj.t_end() - traj.t0);
  auto it = std::lower_bound(traj.samples.begin(), traj.samples.end(), t_from,
                             [](const TrajectorySample& s, double t) { return s.t < t; });
  return static_cast<std::size_t>(it - traj.samples.begin());
}

}  // namespace detail

/// sup |e2| over the final `window_fraction` of the horizon.
inline double steady_state_error(const Trajectory& traj, double window_fraction = kDefaultSteadyWindowFraction) {
  double worst = 0.0;
  for (std::size_t i = detail::window_start(traj, window_fraction); i < traj.samples.size(); ++i) {
    worst = std::max(worst, std::abs(traj.samples[i].e2));
  }
  return worst;
}

/// max |x2| over [t0, t0 + window].
inline double peak_transient(const Trajectory& traj, double window = kDefaultPeakWindow) {
  detail::require(window >= 0.0, "peak window must be non-negative");
  detail::require(traj.t0 + window <= traj.t_end() + 1e-12 * std::max(1.0, traj.t_end()),
                  "peak window exceeds the trajectory horizon");
  double peak = 0.0;
  for (const auto& s : traj.samples) {
    if (s.t > traj.t0 + window) break;
    peak = std::max(peak, std::abs(s.x2));
  }
  return peak;
}

/// Sign reversals per second of successive e2 increments larger than
/// `deadband`, counted after convergence. Throws if never converged.
inline double chattering_index(const Trajectory& traj, double deadband = kDefaultDeadband,
                               double band_fraction = kDefaultBandFraction) {
  detail::require(deadband >= 0.0, "deadband must be non-negative");
  const auto t_conv = convergence_time(traj, band_fraction);
  if (!t_conv) throw ValidationError("chattering_index: trajectory never converged");
  const double span = traj.t_end() - *t_conv;
  if (span <= 0.0) return 0.0;
  int last_sign = 0;
  std::size_t reversals = 0;
  const TrajectorySample* prev = nullptr;
  for (const auto& s : traj.samples) {
    if (s.t < *t_conv) continue;
    if (prev) {
      const double d = s.e2 - prev->e2;
      if (std::abs(d) > deadband) {
        const int sign = d > 0 ? 1 : -1;
        if (last_sign != 0 && sign != last_sign) ++reversals;
        last_sign = sign;
      }
    }
    prev = &s;
  }
  return static_cast<double>(reversals) / span;
}

// ---------------------------------------------------------------------------
// Regression

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  detail::require(x.size() == y.size() && x.size() >= 2, "line fit needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  detail::require(sxx > 0.0, "line fit needs distinct x values");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

struct ErrorPoint {
  double epsilon = 0.0;
  double error = 0.0;
};

struct EpsilonOrderFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t used = 0;
  std::vector<std::string> notes;
};

/// Least-squares slope of log(error) against log(epsilon). Points with a
/// non-positive error are dropped with a note.
inline EpsilonOrderFit epsilon_order(std::span<const ErrorPoint> points) {
  EpsilonOrderFit out;
  std::vector<double> lx, ly;
  for (const auto& p : points) {
    detail::require(p.epsilon > 0.0 && std::isfinite(p.epsilon), "epsilon values must be positive");
    if (!(p.error > 0.0) || !std::isfinite(p.error)) {
      out.notes.push_back("excluded epsilon " + format_real(p.epsilon) + ": error " + format_real(p.error) +
                          " at or below noise floor");
      continue;
    }
    lx.push_back(std::log(p.epsilon));
    ly.push_back(std::log(p.error));
  }
  detail::require(lx.size() >= 2, "epsilon_order needs at least two positive error points");
  const LineFit fit = fit_line(lx, ly);
  out.slope = fit.slope;
  out.intercept = fit.intercept;
  out.used = lx.size();
  return out;
}

// ---------------------------------------------------------------------------
// Frequency response of the linear differentiator

struct FrequencyPoint {
  double magnitude = 0.0;
  double phase = 0.0;  // radians
};

/// H(jw) = jw / (1 + (eps^2 (jw)^2 + a20 eps (jw)) / a10).
inline FrequencyPoint linear_freq_response(double a10, double a20, double epsilon, double omega) {
  detail::require(a10 > 0.0 && a20 > 0.0, "a10 and a20 must be positive");
  detail::require(epsilon > 0.0, "epsilon must be positive");
  detail::require(omega >= 0.0, "omega must be non-negative");
  if (omega == 0.0) return {0.0, 0.0};
  const std::complex<double> s(0.0, omega);
  const std::complex<double> h = s / (1.0 + (epsilon * epsilon * s * s + a20 * epsilon * s) / a10);
  return {std::abs(h), std::arg(h)};
}

struct SineFit {
  double amplitude = 0.0;
  double phase = 0.0;  // y ~ amplitude * sin(omega t + phase) + offset
  double offset = 0.0;
};

/// Least-squares fit of a sinusoid with known angular frequency.
inline SineFit fit_sinusoid(std::span<const double> t, std::span<const double> y, double omega) {
  detail::require(t.size() == y.size() && t.size() >= 3, "sinusoid fit needs at least three samples");
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(t.size()), 3);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    basis(r, 0) = std::sin(omega * t[i]);
    basis(r, 1) = std::cos(omega * t[i]);
    basis(r, 2) = 1.0;
    rhs(r) = y[i];
  }
  const Eigen::Vector3d c = basis.colPivHouseholderQr().solve(rhs);
  return {std::hypot(c(0), c(1)), std::atan2(c(1), c(0)), c(2)};
}

// ---------------------------------------------------------------------------
// Report

struct MetricsOptions {
  double band_fraction = kDefaultBandFraction;
  double steady_window_fraction = kDefaultSteadyWindowFraction;
  double peak_window = kDefaultPeakWindow;
  double deadband = kDefaultDeadband;
};

struct MetricsReport {
  std::optional<double> convergence_time;
  double steady_state_error = 0.0;
  double peak_transient = 0.0;
  std::optional<double> chattering_index;  // reversals per second; empty if not converged
  std::optional<double> epsilon_order;
  std::vector<std::string> notes;
};

inline MetricsReport evaluate(const Trajectory& traj, const GainSchedule& schedule, const MetricsOptions& opt = {}) {
  MetricsReport r;
  r.convergence_time = convergence_time(traj, opt.band_fraction);
  r.steady_state_error = steady_state_error(traj, opt.steady_window_fraction);
  const double window = std::min(opt.peak_window, traj.t_end() - traj.t0);
  r.peak_transient = peak_transient(traj, window);
  if (r.convergence_time) {
    r.chattering_index = chattering_index(traj, opt.deadband, opt.band_fraction);
  } else {
    r.notes.push_back("not converged: chattering index unavailable");
  }
  const double fast = 1.0 / schedule.max_gain();
  if (traj.t_end() - traj.t0 < 10.0 * fast) {
    r.notes.push_back("horizon shorter than 10x the fast time constant " + format_real(fast));
  }
  return r;
}

/// Flat key = value block.
inline std::string to_key_value(const MetricsReport& r) {
  std::ostringstream out;
  auto opt = [](const std::optional<double>& v, const char* missing) {
    return v ? format_real(*v) : std::string(missing);
  };
  out << "convergence_time = " << opt(r.convergence_time, "not converged") << '\n';
  out << "steady_state_error = " << format_real(r.steady_state_error) << '\n';
  out << "peak_transient = " << format_real(r.peak_transient) << '\n';
  out << "chattering_index = " << opt(r.chattering_index, "n/a") << '\n';
  if (r.epsilon_order) out << "epsilon_order = " << format_real(*r.epsilon_order) << '\n';
  for (const auto& note : r.notes) out << "note = " << note << '\n';
  return out.str();
}

/// Column order of the one-row CSV form; missing values are written as nan.
inline constexpr const char* kMetricsCsvHeader =
    "convergence_time,steady_state_error,peak_transient,chattering_index";

inline std::string to_csv_row(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string("nan"); };
  return opt(r.convergence_time) + ',' + format_real(r.steady_state_error) + ',' + format_real(r.peak_transient) +
         ',' + opt(r.chattering_index);
}

}  // namespace rcdiff
