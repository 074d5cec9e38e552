#pragma once

// Spatial truncation of infinite state spaces and the quantile band of the
// invariant law used for reporting.

#include <cmath>
#include <utility>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>

#include "defrisk/errors.hpp"
#include "defrisk/model.hpp"

namespace defrisk {

struct Interval {
  double lo;
  double hi;
};

/// Stationary Gamma law of the CIR factor: shape 2 kappa theta / xi^2, rate 2 kappa / xi^2.
inline boost::math::gamma_distribution<double> cir_invariant_law(const CIRParams& p) {
  const double shape = 2.0 * p.kappa * p.theta / (p.xi * p.xi);
  const double rate = 2.0 * p.kappa / (p.xi * p.xi);
  return boost::math::gamma_distribution<double>(shape, 1.0 / rate);
}

/// Standard deviation of the OU factor: stationary when b > 0, otherwise at the horizon.
inline double ou_spread(const OUParams& p, double horizon) {
  if (p.b_mr > 0.0) return std::sqrt(1.0 / (2.0 * p.b_mr));
  if (p.b_mr == 0.0) return std::sqrt(horizon);
  return std::sqrt(-std::expm1(-2.0 * p.b_mr * horizon) / (2.0 * p.b_mr));
}

/// Quantile band [q_lo, q_hi] of the factor's invariant law.
inline Interval quantile_band(const ModelSpec& m, double q_lo, double q_hi, double horizon = 1.0) {
  if (const auto* p = m.cir_params()) {
    const auto law = cir_invariant_law(*p);
    return {boost::math::quantile(law, q_lo), boost::math::quantile(law, q_hi)};
  }
  if (const auto* p = m.ou_params()) {
    const boost::math::normal_distribution<double> law(0.0, ou_spread(*p, horizon));
    return {boost::math::quantile(law, q_lo), boost::math::quantile(law, q_hi)};
  }
  const Domain1D& d = m.domain();
  if (!d.bounded()) throw ParameterError("custom models need a bounded domain for reporting bands");
  const double w = d.upper - d.lower;
  return {d.lower + q_lo * w, d.lower + q_hi * w};
}

/// Reporting band: 2.5% to 97.5% quantiles of the invariant law.
inline Interval reporting_band(const ModelSpec& m, double horizon = 1.0) {
  return quantile_band(m, 0.025, 0.975, horizon);
}

/// Default solver domain: CIR [q0.001 / 1.5, 1.5 q0.999]; OU +-6 standard deviations;
/// custom models use the given bounded domain with a small inset.
inline Interval default_truncation(const ModelSpec& m, double horizon = 1.0) {
  if (m.cir_params()) {
    const Interval q = quantile_band(m, 0.001, 0.999, horizon);
    return {q.lo / 1.5, q.hi * 1.5};
  }
  if (const auto* p = m.ou_params()) {
    const double s = ou_spread(*p, horizon);
    return {-6.0 * s, 6.0 * s};
  }
  const Domain1D& d = m.domain();
  if (!d.bounded()) throw ParameterError("custom models need a bounded domain for default truncation");
  const double w = d.upper - d.lower;
  return {d.lower + 1e-3 * w, d.upper - 1e-3 * w};
}

}  // namespace defrisk
