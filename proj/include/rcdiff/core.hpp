#pragma once

// Second-order differentiators in singular-perturbation form.
//
// Every variant shares the chain  x1' = x2  and differs only in the
// acceleration law for x2. The laws are evaluated in gain form, with
// g = 1/eps, so a gain that ramps up from zero is well defined:
//
//   e = x1 - v(t)
//   linear         x2' = -g^2 a10 e                      - g a20 x2
//   nonlinear      x2' = -g^2 a11 sig(e)^(a/(2-a))       - g^2 a21 sig(x2/g)^a
//   nonlinear-alt  x2' = -g^2 a11 sig(e)^a1              - g^2 a21 sig(x2/g)^a2
//   hybrid         x2' = -g^2 (a10 e + a11 sig(e)^(a/(2-a))) - g a20 x2 - g^2 a21 sig(x2/g)^a
//   hybrid-alt     x2' = -g^2 (a10 e + a11 sig(e)^a1)       - g a20 x2 - g^2 a21 sig(x2/g)^a2

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "rcdiff/error.hpp"

namespace rcdiff {

/// Power exponent restricted to (0, 1].
class Exponent {
 public:
  explicit Exponent(double value) : value_(value) {
    detail::require(value > 0.0 && value <= 1.0,
                    "exponent must lie in (0, 1], got " + std::to_string(value));
  }
  double value() const noexcept { return value_; }

 private:
  double value_;
};

/// Signed power |y|^alpha * sgn(y), with sig(0) = 0.
inline double sig(double y, Exponent alpha) {
  if (!std::isfinite(y)) throw NumericalError("sig: non-finite argument");
  if (y == 0.0) return 0.0;
  return std::copysign(std::pow(std::abs(y), alpha.value()), y);
}

// ---------------------------------------------------------------------------
// Gain schedule

class GainSchedule {
 public:
  enum class Mode { Fixed, Ramp };

  static GainSchedule fixed(double gain) {
    detail::require(gain > 0.0 && std::isfinite(gain), "fixed gain must be positive and finite");
    return GainSchedule(Mode::Fixed, gain, 0.0, 0.0);
  }

  static GainSchedule from_epsilon(double epsilon) {
    detail::require(epsilon > 0.0 && std::isfinite(epsilon), "epsilon must be positive");
    return fixed(1.0 / epsilon);
  }

  /// g(t) = min(mu * t, mu * t_max); grows from zero to limit peaking.
  static GainSchedule ramp(double mu, double t_max) {
    detail::require(mu > 0.0 && std::isfinite(mu), "ramp slope mu must be positive");
    detail::require(t_max > 0.0 && std::isfinite(t_max), "ramp t_max must be positive");
    return GainSchedule(Mode::Ramp, mu * t_max, mu, t_max);
  }

  Mode mode() const noexcept { return mode_; }
  double mu() const noexcept { return mu_; }
  double t_max() const noexcept { return t_max_; }

  /// Largest gain reached over all t >= 0.
  double max_gain() const noexcept { return max_gain_; }

  double gain_at(double t) const {
    detail::require(t >= 0.0, "gain schedule evaluated at negative time");
    if (mode_ == Mode::Fixed) return max_gain_;
    return std::min(mu_ * t, max_gain_);
  }

 private:
  GainSchedule(Mode mode, double max_gain, double mu, double t_max)
      : mode_(mode), max_gain_(max_gain), mu_(mu), t_max_(t_max) {}

  Mode mode_;
  double max_gain_;
  double mu_;
  double t_max_;
};

inline double gain_at(const GainSchedule& schedule, double t) { return schedule.gain_at(t); }

// ---------------------------------------------------------------------------
// Configuration

enum class Variant { Linear, Nonlinear, NonlinearAlt, Hybrid, HybridAlt };

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Linear: return "linear";
    case Variant::Nonlinear: return "nonlinear";
    case Variant::NonlinearAlt: return "nonlinear-alt";
    case Variant::Hybrid: return "hybrid";
    case Variant::HybridAlt: return "hybrid-alt";
  }
  return "unknown";
}

inline Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::Linear, Variant::Nonlinear, Variant::NonlinearAlt, Variant::Hybrid,
                    Variant::HybridAlt}) {
    if (to_string(v) == name) return v;
  }
  throw ValidationError("unknown differentiator variant '" + std::string(name) + "'");
}

inline bool has_linear_part(Variant v) {
  return v == Variant::Linear || v == Variant::Hybrid || v == Variant::HybridAlt;
}

inline bool has_nonlinear_part(Variant v) { return v != Variant::Linear; }

inline bool uses_paired_exponents(Variant v) {
  return v == Variant::NonlinearAlt || v == Variant::HybridAlt;
}

/// Coefficients shared by the differentiators and their time-scale systems.
/// Defaults are unit gains with exponents 0.5.
struct Gains {
  double a10 = 1.0;  // position error, linear
  double a11 = 1.0;  // position error, fractional power
  double a20 = 1.0;  // velocity, linear
  double a21 = 1.0;  // velocity, fractional power
  double alpha = 0.5;
  double alpha1 = 0.5;
  double alpha2 = 0.5;
};

/// Throws ValidationError unless `gains` satisfies the constraints of `variant`.
inline void validate_gains(Variant variant, const Gains& g) {
  using detail::require;
  auto finite = [](double x) { return std::isfinite(x); };
  require(finite(g.a10) && finite(g.a11) && finite(g.a20) && finite(g.a21) && finite(g.alpha) &&
              finite(g.alpha1) && finite(g.alpha2),
          "gains must be finite");
  require(g.a10 >= 0 && g.a11 >= 0 && g.a20 >= 0 && g.a21 >= 0, "gains must be non-negative");
  const std::string name(to_string(variant));
  if (has_linear_part(variant)) {
    require(g.a10 > 0 && g.a20 > 0, name + ": a10 and a20 must be positive");
  }
  if (has_nonlinear_part(variant)) {
    require(g.a11 > 0 && g.a21 > 0, name + ": a11 and a21 must be positive");
  }
  if (variant == Variant::Nonlinear || variant == Variant::Hybrid) {
    require(g.alpha > 0 && g.alpha < 1, name + ": alpha must lie in (0, 1)");
  }
  if (uses_paired_exponents(variant)) {
    require(g.alpha2 > 0 && g.alpha2 < 1, name + ": alpha2 must lie in (0, 1)");
    require(g.alpha1 > g.alpha2 / (2 - g.alpha2) && g.alpha1 < 1,
            name + ": alpha1 must lie in (alpha2/(2-alpha2), 1)");
  }
}

/// Exponent applied to the position error e = x1 - v.
inline double error_exponent(Variant variant, const Gains& g) {
  if (uses_paired_exponents(variant)) return g.alpha1;
  return g.alpha / (2.0 - g.alpha);
}

/// Exponent applied to the scaled velocity.
inline double rate_exponent(Variant variant, const Gains& g) {
  return uses_paired_exponents(variant) ? g.alpha2 : g.alpha;
}

class DifferentiatorConfig {
 public:
  DifferentiatorConfig(Variant variant, Gains gains, GainSchedule schedule)
      : variant_(variant),
        gains_(validated(variant, gains)),
        schedule_(schedule),
        error_exp_(has_nonlinear_part(variant) ? rcdiff::error_exponent(variant, gains) : 1.0),
        rate_exp_(has_nonlinear_part(variant) ? rcdiff::rate_exponent(variant, gains) : 1.0) {}

  Variant variant() const noexcept { return variant_; }
  const Gains& gains() const noexcept { return gains_; }
  const GainSchedule& schedule() const noexcept { return schedule_; }
  Exponent error_exponent() const noexcept { return error_exp_; }
  Exponent rate_exponent() const noexcept { return rate_exp_; }

  DifferentiatorConfig with_schedule(GainSchedule schedule) const {
    return DifferentiatorConfig(variant_, gains_, schedule);
  }

 private:
  static Gains validated(Variant variant, const Gains& gains) {
    validate_gains(variant, gains);
    return gains;
  }

  Variant variant_;
  Gains gains_;
  GainSchedule schedule_;
  Exponent error_exp_;
  Exponent rate_exp_;
};

// ---------------------------------------------------------------------------
// Right-hand side

struct DiffState {
  double x1 = 0.0;  // signal estimate
  double x2 = 0.0;  // derivative estimate
};

struct StateRate {
  double dx1 = 0.0;
  double dx2 = 0.0;
};

namespace detail {

// Acceleration law with the gain already resolved. Assumes finite inputs.
inline double acceleration(const DifferentiatorConfig& config, double e, double x2, double g) {
  if (g == 0.0) return 0.0;
  const Gains& k = config.gains();
  const double g2 = g * g;
  double acc = 0.0;
  if (has_linear_part(config.variant())) {
    acc -= g2 * k.a10 * e + g * k.a20 * x2;
  }
  if (has_nonlinear_part(config.variant())) {
    acc -= g2 * (k.a11 * sig(e, config.error_exponent()) +
                 k.a21 * sig(x2 / g, config.rate_exponent()));
  }
  return acc;
}

}  // namespace detail

/// Differentiator vector field at time t for input sample v.
inline StateRate rhs(const DifferentiatorConfig& config, const DiffState& state, double v, double t) {
  if (!std::isfinite(state.x1) || !std::isfinite(state.x2) || !std::isfinite(v) ||
      !std::isfinite(t)) {
    throw NumericalError("rhs: non-finite input at t = " + std::to_string(t));
  }
  const double g = config.schedule().gain_at(t);
  return {state.x2, detail::acceleration(config, state.x1 - v, state.x2, g)};
}

}  // namespace rcdiff
