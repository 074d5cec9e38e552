#pragma once

// Nested exhaustion E_1 c E_2 c ... of the state space and smooth cutoffs chi_n
// with 0 <= chi_n <= 1, chi_n = 1 on E_{n-1}, chi_n = 0 off closure(E_n), chi_n > 0 on E_n.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "defrisk/errors.hpp"
#include "defrisk/model.hpp"

namespace defrisk {

struct LocalizationSpec {
  int n_index = 0;
  Domain1D inner;  // E_{n-1}
  Domain1D outer;  // E_n
  std::function<double(double)> chi;
};

/// C-infinity step: 0 for t <= 0, 1 for t >= 1, built from exp(-1/t) pieces.
inline double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / t);
  const double b = std::exp(-1.0 / (1.0 - t));
  const double s = a / (a + b);
  // positive values below the double range round up to the smallest subnormal
  return s > 0.0 ? s : std::numeric_limits<double>::denorm_min();
}

/// E_n: (lower + 1/n, upper - 1/n) at finite ends, (-n, n) at infinite ends.
inline Domain1D exhaustion_set(const Domain1D& e, int n) {
  if (n < 1) throw ParameterError("localization index must be positive");
  const double lo = std::isfinite(e.lower) ? e.lower + 1.0 / n : -static_cast<double>(n);
  const double hi = std::isfinite(e.upper) ? e.upper - 1.0 / n : static_cast<double>(n);
  return Domain1D{lo, hi};
}

/// Cutoff between explicit nested intervals; transition_fraction is the share of each gap
/// (between the end of E_{n-1} and the end of E_n) over which chi rises from 0 to 1.
inline LocalizationSpec build_localization(const Domain1D& e, const Domain1D& inner, const Domain1D& outer, int n,
                                           double transition_fraction = 0.1) {
  if (!(transition_fraction > 0.0 && transition_fraction <= 1.0))
    throw ParameterError("transition fraction must lie in (0, 1]");
  if (!(inner.lower < inner.upper)) throw ParameterError("E_{n-1} is empty for n = " + std::to_string(n));
  if (!(outer.lower < inner.lower && inner.upper < outer.upper))
    throw ParameterError("closure of E_{n-1} is not inside E_n");
  if (!(outer.lower > e.lower && outer.upper < e.upper) || !outer.bounded())
    throw ParameterError("E_n must be a bounded interval strictly inside E");

  const double wl = transition_fraction * (inner.lower - outer.lower);
  const double wu = transition_fraction * (outer.upper - inner.upper);
  const double lo = outer.lower, hi = outer.upper;
  LocalizationSpec loc;
  loc.n_index = n;
  loc.inner = inner;
  loc.outer = outer;
  loc.chi = [lo, hi, wl, wu](double x) {
    if (x <= lo || x >= hi) return 0.0;
    return smooth_step((x - lo) / wl) * smooth_step((hi - x) / wu);
  };
  return loc;
}

inline LocalizationSpec build_localization(const ModelSpec& m, int n, double transition_fraction = 0.1) {
  if (n < 2) throw ParameterError("localization index must be at least 2");
  return build_localization(m.domain(), exhaustion_set(m.domain(), n - 1), exhaustion_set(m.domain(), n), n,
                            transition_fraction);
}

struct LocalizationCheck {
  bool bounded_0_1 = true;
  bool one_on_inner = true;
  bool zero_outside = true;
  bool positive_on_outer = true;
  bool all() const noexcept { return bounded_0_1 && one_on_inner && zero_outside && positive_on_outer; }
};

/// Checks the four cutoff properties on an evenly spaced grid spanning a neighbourhood of closure(E_n).
inline LocalizationCheck validate_localization(const LocalizationSpec& loc, int n_points = 1000) {
  LocalizationCheck r;
  const double pad = 0.05 * (loc.outer.upper - loc.outer.lower);
  const double a = loc.outer.lower - pad, b = loc.outer.upper + pad;
  for (int i = 0; i <= n_points; ++i) {
    const double x = a + (b - a) * i / n_points;
    const double c = loc.chi(x);
    if (!(c >= 0.0 && c <= 1.0)) r.bounded_0_1 = false;
    if (loc.inner.contains(x) && c != 1.0) r.one_on_inner = false;
    if ((x <= loc.outer.lower || x >= loc.outer.upper) && c != 0.0) r.zero_outside = false;
    if (loc.outer.contains(x) && !(c > 0.0)) r.positive_on_outer = false;
  }
  return r;
}

}  // namespace defrisk
