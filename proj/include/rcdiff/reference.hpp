#pragma once

// Reference systems in stretched time tau = t * g. Each differentiator is the
// boundary layer of one of these: with z1 = x1 - v and z2 = x2 / g, the
// differentiator acceleration equals g^2 times the z2 rate below.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "rcdiff/core.hpp"
#include "rcdiff/error.hpp"
#include "rcdiff/integrate.hpp"

namespace rcdiff {

class TimeScaleSystem {
 public:
  TimeScaleSystem(Variant variant, Gains gains) : variant_(variant), gains_(gains) {
    validate_gains(variant, gains);
  }

  Variant variant() const noexcept { return variant_; }
  const Gains& gains() const noexcept { return gains_; }

  /// Exponent on z1 in the fractional term (alpha/(2-alpha) or alpha1).
  double z1_exponent() const { return error_exponent(variant_, gains_); }
  /// Exponent on z2 in the fractional term (alpha or alpha2).
  double z2_exponent() const { return rate_exponent(variant_, gains_); }

 private:
  Variant variant_;
  Gains gains_;
};

namespace detail {

inline void require_finite(double z1, double z2) {
  if (!std::isfinite(z1) || !std::isfinite(z2)) throw NumericalError("reference system: non-finite state");
}

}  // namespace detail

/// (dz1/dtau, dz2/dtau)
inline Vec<2> rhs_timescale(const TimeScaleSystem& sys, double z1, double z2) {
  detail::require_finite(z1, z2);
  const Gains& k = sys.gains();
  double dz2 = 0.0;
  if (has_linear_part(sys.variant())) dz2 -= k.a10 * z1 + k.a20 * z2;
  if (has_nonlinear_part(sys.variant())) {
    dz2 -= k.a11 * sig(z1, Exponent(sys.z1_exponent())) + k.a21 * sig(z2, Exponent(sys.z2_exponent()));
  }
  return {z2, dz2};
}

/// Lyapunov candidate
///   linear:     (a10 z1^2 + z2^2) / 2
///   nonlinear:  a11 (2 - alpha)/2 |z1|^(2/(2-alpha)) + z2^2/2
///   hybrid:     nonlinear + a10 z1^2 / 2
/// The paired-exponent variants use a11/(1+alpha1) |z1|^(1+alpha1) for the
/// fractional term; that form is a numerical diagnostic only.
inline double lyapunov(const TimeScaleSystem& sys, double z1, double z2) {
  detail::require_finite(z1, z2);
  const Gains& k = sys.gains();
  double v = 0.5 * z2 * z2;
  if (has_linear_part(sys.variant())) v += 0.5 * k.a10 * z1 * z1;
  if (has_nonlinear_part(sys.variant())) {
    if (uses_paired_exponents(sys.variant())) {
      const double p = 1.0 + k.alpha1;
      v += k.a11 / p * std::pow(std::abs(z1), p);
    } else {
      v += k.a11 * (2.0 - k.alpha) / 2.0 * std::pow(std::abs(z1), 2.0 / (2.0 - k.alpha));
    }
  }
  return v;
}

/// dV/dtau along trajectories; never positive.
inline double lyapunov_rate(const TimeScaleSystem& sys, double z1, double z2) {
  detail::require_finite(z1, z2);
  const Gains& k = sys.gains();
  double rate = 0.0;
  if (has_linear_part(sys.variant())) rate -= k.a20 * z2 * z2;
  if (has_nonlinear_part(sys.variant())) rate -= k.a21 * std::pow(std::abs(z2), 1.0 + sys.z2_exponent());
  return rate;
}

struct HomogeneityWeights {
  double r1 = 0.0;
  double r2 = 0.0;
};

/// Dilation weights making the fractional system homogeneous of degree k < 0.
inline HomogeneityWeights homogeneity_weights(double alpha, double k) {
  detail::require(alpha != 1.0, "homogeneity weights undefined at alpha = 1");
  detail::require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  detail::require(k < 0.0, "homogeneity degree k must be negative");
  return {k * (2.0 - alpha) / (alpha - 1.0), k / (alpha - 1.0)};
}

/// Relative residual of f2(l^r1 z1, l^r2 z2) = l^(r2+k) f2(z1, z2) for the
/// fractional-power system.
inline double homogeneity_residual(const TimeScaleSystem& sys, double k, double lambda, double z1, double z2) {
  detail::require(sys.variant() == Variant::Nonlinear, "homogeneity identity applies to the nonlinear system");
  const HomogeneityWeights w = homogeneity_weights(sys.gains().alpha, k);
  const double lhs = rhs_timescale(sys, std::pow(lambda, w.r1) * z1, std::pow(lambda, w.r2) * z2)[1];
  const double rhs = std::pow(lambda, w.r2 + k) * rhs_timescale(sys, z1, z2)[1];
  const double scale = std::max(std::abs(lhs), std::abs(rhs));
  return scale == 0.0 ? 0.0 : std::abs(lhs - rhs) / scale;
}

/// First time after which max(|z1|, |z2|) <= tolerance through the end of
/// the trajectory; nullopt if the final sample is outside the band.
inline std::optional<double> settling_time(const RawTrajectory<2>& traj, double tolerance) {
  detail::require(!traj.t.empty(), "settling_time: empty trajectory");
  std::optional<double> settled;
  for (std::size_t i = traj.t.size(); i-- > 0;) {
    const auto& z = traj.x[i];
    if (std::max(std::abs(z[0]), std::abs(z[1])) > tolerance) break;
    settled = traj.t[i];
  }
  return settled;
}

/// Integrates the reference system in tau from (z1, z2).
inline RawTrajectory<2> simulate_timescale(const TimeScaleSystem& sys, Vec<2> init, double horizon,
                                           const IntegratorSpec& spec, SampleOptions sampling = {}) {
  return simulate_raw([&](double, const Vec<2>& z) { return rhs_timescale(sys, z[0], z[1]); }, init, 0.0,
                      horizon, spec, sampling);
}

}  // namespace rcdiff
