#pragma once

// Economic outputs computed node by node from solved surfaces: optimal
// strategies, defaultable-bond indifference prices and the dynamic default
// insurance rate together with its bounds.

#include <cmath>
#include <vector>

#include "defrisk/errors.hpp"
#include "defrisk/grid.hpp"
#include "defrisk/hjb_solver.hpp"
#include "defrisk/lambertw.hpp"
#include "defrisk/model.hpp"

namespace defrisk {

/// Dollar amount held in the risky asset at each grid node.
using Policy = Field;

inline constexpr double kRadicandClamp = 1e-10;

namespace detail {

/// Quantities shared by the policy and insurance formulas at one node.
struct NodeState {
  double sigma2;
  double xt;         // mu/sigma^2 - (alpha/sigma) G_x a rho
  double y;          // (gamma/sigma^2) e^{alpha G}
  double theta_g;    // theta(y e^{xt})
};

inline NodeState node_state(const Coefficients& c, double g, double gx, double alpha) {
  const double s2 = c.sigma * c.sigma;
  const double grad = (alpha / c.sigma) * gx * std::sqrt(c.A) * c.rho;
  const double xt = c.mu / s2 - grad;
  const double th = theta_composite({c.gamma / s2, c.mu / s2, alpha, g, grad});
  return {s2, xt, (c.gamma / s2) * std::exp(alpha * g), th};
}

}  // namespace detail

/// pi = (1/alpha) (mu/sigma^2 - (alpha/sigma) G_x a rho - theta_G).
inline Policy optimal_policy(const Surface& G, const ModelSpec& m, const Preferences& pref) {
  const GridSpec& g = G.grid();
  Policy pi(g);
  for (int j = 0; j <= g.n_space; ++j) {
    const Coefficients c = m.at(g.x(j));
    for (int i = 0; i <= g.n_time; ++i) {
      const auto st = detail::node_state(c, G.values(i, j), G.gradient(i, j), pref.alpha);
      pi(i, j) = (st.xt - st.theta_g) / pref.alpha;
    }
  }
  return pi;
}

/// p(t, x; q) = (G_q - G_0) / q.
inline Field indifference_price(const Surface& G_q, const Surface& G_0, double q) {
  require_same_grid(G_q.grid(), G_0.grid(), "indifference_price");
  if (!(q > 0.0)) throw ParameterError("indifference_price: q must be positive");
  Field p(G_q.grid());
  for (std::size_t k = 0; k < p.data.size(); ++k) p.data[k] = (G_q.values.data[k] - G_0.values.data[k]) / q;
  return p;
}

/// h(l, y) = l + y e^l - sqrt(l^2 + 2 y (l e^l + 1 - e^l)), so that f / sigma^2 = h(alpha pi, (gamma/sigma^2) e^{alpha G}).
inline double insurance_rate_h_form(double l, double y) {
  if (!(y > 0.0) || !std::isfinite(y) || !std::isfinite(l)) throw DomainError("h(l, y): need finite l and y > 0");
  const double el = std::exp(l);
  // l e^l + 1 - e^l = 1 - e^l (1 - l); expm1 keeps it accurate near l = 0
  const double core = l * el - std::expm1(l);
  const double rad = l * l + 2.0 * y * core;
  return l + y * el - std::sqrt(std::max(rad, 0.0));
}

/// f / sigma^2 near the horizon (G ~ 0): h(alpha pi, gamma/sigma^2).
inline double insurance_rate_short_horizon(double alpha_pi, double gamma_over_sigma2) {
  return insurance_rate_h_form(alpha_pi, gamma_over_sigma2);
}

/// Unique root l0(y) < 0 of h(., y): log((sqrt(1 + 2y) - 1) / y).
inline double insurance_zero_threshold(double y) {
  if (!(y > 0.0)) throw DomainError("insurance_zero_threshold: y must be positive");
  return std::log((std::sqrt(1.0 + 2.0 * y) - 1.0) / y);
}

namespace detail {

inline double insurance_radicand(const NodeState& st) {
  return st.xt * st.xt - (st.theta_g * st.theta_g + 2.0 * st.theta_g - 2.0 * st.y);
}

template <int Sign>
Field insurance_rate_branch(const Surface& G, const ModelSpec& m, const Preferences& pref) {
  const GridSpec& g = G.grid();
  Field f(g);
  for (int j = 0; j <= g.n_space; ++j) {
    const Coefficients c = m.at(g.x(j));
    for (int i = 0; i <= g.n_time; ++i) {
      const auto st = node_state(c, G.values(i, j), G.gradient(i, j), pref.alpha);
      double rad = insurance_radicand(st);
      if (rad < -kRadicandClamp) throw RadicandNegative(static_cast<std::size_t>(i) * g.cols() + j, rad);
      rad = std::max(rad, 0.0);
      f(i, j) = st.sigma2 * (st.xt + Sign * std::sqrt(rad));
    }
  }
  return f;
}

}  // namespace detail

/// Dynamic default insurance rate (lower root f_-), per dollar held.
inline Field insurance_rate(const Surface& G, const ModelSpec& m, const Preferences& pref) {
  return detail::insurance_rate_branch<-1>(G, m, pref);
}

/// Upper root f_+; exposed for comparison only, never fed to the protected solve.
inline Field insurance_rate_upper_root(const Surface& G, const ModelSpec& m, const Preferences& pref) {
  return detail::insurance_rate_branch<+1>(G, m, pref);
}

/// sigma^2 h(alpha pi, (gamma/sigma^2) e^{alpha G}) evaluated with the optimal policy of G.
inline Field insurance_rate_via_h(const Surface& G, const Policy& pi, const ModelSpec& m, const Preferences& pref) {
  const GridSpec& g = G.grid();
  require_same_grid(pi.grid, g, "insurance_rate_via_h");
  Field f(g);
  for (int j = 0; j <= g.n_space; ++j) {
    const Coefficients c = m.at(g.x(j));
    const double s2 = c.sigma * c.sigma;
    for (int i = 0; i <= g.n_time; ++i) {
      const double y = (c.gamma / s2) * std::exp(pref.alpha * G.values(i, j));
      f(i, j) = s2 * insurance_rate_h_form(pref.alpha * pi(i, j), y);
    }
  }
  return f;
}

struct InsuranceBounds {
  Field upper;           // gamma e^{alpha (G + pi)}: default intensity under the dual optimal measure
  Field sign_indicator;  // gamma e^{alpha (2 pi + G)} / (2 sigma^2) + e^{alpha pi} - 1
};

inline InsuranceBounds insurance_bounds(const Surface& G, const Policy& pi, const ModelSpec& m,
                                        const Preferences& pref) {
  const GridSpec& g = G.grid();
  require_same_grid(pi.grid, g, "insurance_bounds");
  InsuranceBounds b{Field(g), Field(g)};
  const double a = pref.alpha;
  for (int j = 0; j <= g.n_space; ++j) {
    const Coefficients c = m.at(g.x(j));
    const double s2 = c.sigma * c.sigma;
    for (int i = 0; i <= g.n_time; ++i) {
      const double gv = G.values(i, j), p = pi(i, j);
      b.upper(i, j) = c.gamma * std::exp(a * (gv + p));
      b.sign_indicator(i, j) = c.gamma * std::exp(a * (2.0 * p + gv)) / (2.0 * s2) + std::expm1(a * p);
    }
  }
  return b;
}

/// pi_d = (1/alpha) ((mu - f)/sigma^2 - (alpha/sigma) G^d_x a rho).
inline Policy protected_policy(const Surface& G_d, const Field& f, const ModelSpec& m, const Preferences& pref) {
  const GridSpec& g = G_d.grid();
  require_same_grid(f.grid, g, "protected_policy");
  Policy pd(g);
  for (int j = 0; j <= g.n_space; ++j) {
    const Coefficients c = m.at(g.x(j));
    const double s2 = c.sigma * c.sigma;
    const double k = (pref.alpha / c.sigma) * std::sqrt(c.A) * c.rho;
    for (int i = 0; i <= g.n_time; ++i)
      pd(i, j) = ((c.mu - f(i, j)) / s2 - k * G_d.gradient(i, j)) / pref.alpha;
  }
  return pd;
}

/// Physical default intensity gamma(x_j) broadcast over the grid.
inline Field physical_intensity(const GridSpec& g, const ModelSpec& m) {
  Field out(g);
  for (int j = 0; j <= g.n_space; ++j) {
    const double gam = m.at(g.x(j)).gamma;
    for (int i = 0; i <= g.n_time; ++i) out(i, j) = gam;
  }
  return out;
}

struct PricingResult {
  Field indiff_price;
  Field insurance_rate;
  Field upper_bound;
  Field physical_intensity;
  Policy policy;
  Policy protected_policy;
};

/// Everything derivable from G(.; 0), G(.; q phi) and the protected solve driven by f.
inline PricingResult price_all(const Surface& G_q, const Surface& G_0, double q, const Surface& G_d,
                               const ModelSpec& m, const Preferences& pref) {
  PricingResult r;
  r.indiff_price = indifference_price(G_q, G_0, q);
  r.policy = optimal_policy(G_0, m, pref);
  r.insurance_rate = insurance_rate(G_0, m, pref);
  r.upper_bound = insurance_bounds(G_0, r.policy, m, pref).upper;
  r.physical_intensity = physical_intensity(G_0.grid(), m);
  r.protected_policy = protected_policy(G_d, r.insurance_rate, m, pref);
  return r;
}

struct ShortHorizonRow {
  double alpha_pi;
  double f_over_sigma2;
  double upper_bound;
};

/// Short-horizon insurance curve f/sigma^2 against alpha pi at fixed gamma/sigma^2, with its upper bound y e^{alpha pi}.
inline std::vector<ShortHorizonRow> short_horizon_curve(double gamma_over_sigma2 = 2.0 / 3.0, double lo = -2.0, double hi = 2.0,
                                             double step = 0.01) {
  std::vector<ShortHorizonRow> rows;
  const int n = static_cast<int>(std::llround((hi - lo) / step));
  rows.reserve(n + 1);
  for (int k = 0; k <= n; ++k) {
    // integer-indexed abscissae so that alpha pi = 0 is hit exactly
    const double l = (static_cast<double>(k) + lo / step) * step;
    rows.push_back({l, insurance_rate_short_horizon(l, gamma_over_sigma2), gamma_over_sigma2 * std::exp(l)});
  }
  return rows;
}

}  // namespace defrisk
