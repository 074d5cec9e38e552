#pragma once

// Reference computations used by the tests. They deliberately avoid the library's
// own theta and stepping code.

#include <cmath>
#include <vector>

#include <boost/math/special_functions/lambert_w.hpp>

namespace oracle {

/// Right-hand side of the spatially constant reduction G' = -F(G).
struct ConstantCoefficients {
  double mu, sigma, gamma, alpha;

  double F(double g) const {
    const double s2 = sigma * sigma;
    const double th = boost::math::lambert_w0(gamma / s2 * std::exp(mu / s2 + alpha * g));
    return s2 / (2.0 * alpha) * (2.0 * gamma / s2 + mu * mu / (s2 * s2) - th * th - 2.0 * th);
  }
};

/// Classical RK4 backward from G(T) = g_T; returns G at t = T - k T / n for k = 0..n.
inline std::vector<double> rk4_backward(const ConstantCoefficients& c, double g_T, double T, int n) {
  std::vector<double> g(n + 1);
  g[0] = g_T;
  const double h = T / n;
  // in reversed time s = T - t: dG/ds = F(G)
  for (int k = 0; k < n; ++k) {
    const double y = g[k];
    const double k1 = c.F(y);
    const double k2 = c.F(y + 0.5 * h * k1);
    const double k3 = c.F(y + 0.5 * h * k2);
    const double k4 = c.F(y + h * k3);
    g[k + 1] = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return g;
}

/// G(0) from RK4 with a fine step count.
inline double rk4_value_at_zero(const ConstantCoefficients& c, double g_T, double T, int n = 20000) {
  return rk4_backward(c, g_T, T, n).back();
}

/// h(l, y) written directly from its definition.
inline double h_form(double l, double y) {
  return l + y * std::exp(l) - std::sqrt(l * l + 2.0 * y * (l * std::exp(l) + 1.0 - std::exp(l)));
}

/// Root of a continuous function on [a, b] with a sign change, by bisection.
template <class F>
double bisect(F&& f, double a, double b, int iters = 200) {
  double fa = f(a);
  for (int k = 0; k < iters; ++k) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if ((fm < 0.0) == (fa < 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return 0.5 * (a + b);
}

}  // namespace oracle
