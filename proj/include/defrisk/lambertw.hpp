#pragma once

// Principal branch of the Lambert-W function on (0, inf), written theta here:
// theta(y) is the unique w > 0 with w * exp(w) = y.

#include <cmath>
#include <limits>
#include <string>

#include "defrisk/errors.hpp"

namespace defrisk {

namespace detail {

inline constexpr double kThetaRelTol = 1e-12;
inline constexpr int kThetaMaxIter = 50;
// exp() overflows near 709.78; above this the log-form equation is used.
inline constexpr double kThetaLogSwitch = 700.0;

inline double theta_bisect(double y) {
  double lo = 0.0;
  double hi = std::max(1.0, std::log(y) + 1.0);
  while (hi * std::exp(hi) < y) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid * std::exp(mid) < y) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Solves w + log(w) = u for w > 0, i.e. w = theta(exp(u)), without forming exp(u).
inline double theta_log_form(double u) {
  double w = u - std::log(u);
  for (int i = 0; i < kThetaMaxIter; ++i) {
    const double g = w + std::log(w) - u;
    const double step = g / (1.0 + 1.0 / w);
    w -= step;
    if (std::abs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * w) break;
  }
  return w;
}

}  // namespace detail

/// theta(y): solution w > 0 of w e^w = y, Halley iteration with a bisection fallback.
inline double theta(double y) {
  if (!std::isfinite(y) || y <= 0.0)
    throw DomainError("theta: argument must be finite and positive, got " + std::to_string(y));

  double w;
  if (y < 1.0) {
    w = y;
  } else if (y < M_E) {
    w = std::log1p(y) * 0.8;
  } else {
    const double ly = std::log(y);
    w = ly - std::log(ly);
  }

  for (int i = 0; i < detail::kThetaMaxIter; ++i) {
    const double ew = std::exp(w);
    const double f = w * ew - y;
    const double wp1 = w + 1.0;
    const double denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
    const double step = f / denom;
    const double next = w - step;
    w = next > 0.0 ? next : 0.5 * w;
    if (std::abs(step) <= 4.0 * std::numeric_limits<double>::epsilon() * w) {
      if (std::abs(w * std::exp(w) - y) <= detail::kThetaRelTol * std::max(1.0, y)) return w;
      break;
    }
  }
  if (std::abs(w * std::exp(w) - y) <= detail::kThetaRelTol * std::max(1.0, y) && w > 0.0) return w;
  return detail::theta_bisect(y);
}

/// theta(exp(u)) for any finite u; stays finite where exp(u) would overflow.
inline double theta_of_exp(double u) {
  if (!std::isfinite(u)) throw DomainError("theta_of_exp: non-finite log-argument");
  if (u > detail::kThetaLogSwitch) return detail::theta_log_form(u);
  // theta(y) = y - y^2 + O(y^3); below e^-40 the correction is under one ulp
  if (u < -40.0) return std::exp(u);
  return theta(std::exp(u));
}

/// theta'(y) = theta(y) / (y (1 + theta(y))).
inline double theta_derivative(double y) {
  const double w = theta(y);
  return w / (y * (1.0 + w));
}

struct ThetaCompositeArgs {
  double gamma_over_sigma2;
  double mu_over_sigma2;
  double alpha;
  double f_value;
  double grad_term;  // (alpha / sigma) * f_x * a * rho at the node
};

/// theta( (gamma/sigma^2) * exp(mu/sigma^2 + alpha f - grad_term) ), evaluated in log space.
inline double theta_composite(const ThetaCompositeArgs& a) {
  if (!std::isfinite(a.gamma_over_sigma2) || !std::isfinite(a.mu_over_sigma2) || !std::isfinite(a.alpha) ||
      !std::isfinite(a.f_value) || !std::isfinite(a.grad_term))
    throw DomainError("theta_composite: non-finite input");
  if (a.gamma_over_sigma2 <= 0.0) throw DomainError("theta_composite: gamma/sigma^2 must be positive");
  if (a.alpha <= 0.0) throw DomainError("theta_composite: alpha must be positive");
  const double u = std::log(a.gamma_over_sigma2) + a.mu_over_sigma2 + a.alpha * a.f_value - a.grad_term;
  return theta_of_exp(u);
}

}  // namespace defrisk
