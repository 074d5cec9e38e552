#pragma once

// Backward solver for the certainty-equivalent HJB equation
//
//   0 = G_t + b G_x + A/2 G_xx - (alpha/2) A G_x^2
//       + (sigma^2 / 2 alpha) [ 2 gamma/sigma^2 + xt^2 - theta_G^2 - 2 theta_G ],
//   xt = mu/sigma^2 - (alpha/sigma) G_x a rho,
//   theta_G = theta( (gamma/sigma^2) exp(xt + alpha G) ),
//
// its localized variant (bracket multiplied by chi_n, zero Dirichlet data on
// the boundary of E_n) and the protected-market equation driven by a rate field f.
// Crank-Nicolson (or backward Euler) in time, central differences in space and a
// full Newton iteration with a tridiagonal Jacobian per time step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "defrisk/errors.hpp"
#include "defrisk/grid.hpp"
#include "defrisk/lambertw.hpp"
#include "defrisk/localization.hpp"
#include "defrisk/model.hpp"
#include "defrisk/tridiagonal.hpp"

namespace defrisk {

enum class TimeScheme { BackwardEuler, CrankNicolson };

enum class BoundaryCondition {
  LinearExtrapolation,  // G_xx = 0 at the edge, one-sided inward gradient
  NeumannZero,          // G_x = 0 at the edge (mirror ghost node)
  DirichletZero,        // G = 0 on the lateral boundary before the horizon
};

struct SolverOptions {
  double newton_tol = 1e-10;
  int newton_max_iter = 30;
  TimeScheme scheme = TimeScheme::CrankNicolson;
  BoundaryCondition boundary = BoundaryCondition::LinearExtrapolation;
  int startup_steps = 2;  // backward Euler steps next to the horizon before Crank-Nicolson (damps rough terminal data)
};

enum class SolveMode { Full, Local, Protected };

struct SolveStats {
  int newton_iterations = 0;
  int max_iterations_per_step = 0;
  int line_search_halvings = 0;
  int roundoff_exits = 0;
};

/// Certainty equivalent on the grid, its discrete gradient and the data needed to re-evaluate residuals.
struct Surface {
  Field values;
  Field gradient;
  SolveMode mode = SolveMode::Full;
  int local_n = 0;
  double alpha = 0.0;
  SolverOptions options;
  std::vector<double> chi;  // Local mode: cutoff at the x nodes
  Field rate;               // Protected mode: insurance rate f(t, x)
  SolveStats stats;

  const GridSpec& grid() const noexcept { return values.grid; }
  double at(int i, int j) const noexcept { return values(i, j); }
  double interpolate(double t, double x) const noexcept { return values.interpolate(t, x); }

  std::string mode_label() const {
    switch (mode) {
      case SolveMode::Full: return "full";
      case SolveMode::Local: return "local(" + std::to_string(local_n) + ")";
      case SolveMode::Protected: return "protected";
    }
    return "?";
  }
};

/// Pointwise nonlinear part of the full equation (everything except b G_x and A/2 G_xx).
inline double hjb_rhs(const ModelSpec& m, double g, double gx, double x, double alpha) {
  const Coefficients c = m.at(x);
  const double s2 = c.sigma * c.sigma;
  const double a = std::sqrt(c.A);
  const double xt = c.mu / s2 - (alpha / c.sigma) * gx * a * c.rho;
  const double th = theta_composite({c.gamma / s2, c.mu / s2, alpha, g, (alpha / c.sigma) * gx * a * c.rho});
  return -0.5 * alpha * c.A * gx * gx + s2 / (2.0 * alpha) * (2.0 * c.gamma / s2 + xt * xt - th * th - 2.0 * th);
}

namespace detail {

/// Model quantities frozen at the spatial nodes.
struct NodeData {
  double x, b, A, sigma2, mu_over_s2, gamma_over_s2, log_gamma_over_s2, grad_coef, gamma;
};

inline std::vector<NodeData> node_data(const ModelSpec& m, const GridSpec& g, double alpha) {
  std::vector<NodeData> nd(g.cols());
  for (int j = 0; j <= g.n_space; ++j) {
    const double x = g.x(j);
    const Coefficients c = m.at(x);
    const double s2 = c.sigma * c.sigma;
    nd[j] = {x,         c.b, c.A, s2, c.mu / s2, c.gamma / s2, std::log(c.gamma / s2), (alpha / c.sigma) * std::sqrt(c.A) * c.rho,
             c.gamma};
  }
  return nd;
}

struct SourceValue {
  double value;
  double d_g;
  double d_p;
};

/// Nonlinearity of the full / localized equation; chi is empty in Full mode.
struct CertaintyEquivalentSource {
  const std::vector<NodeData>* nodes;
  const std::vector<double>* chi;
  double alpha;

  SourceValue operator()(int /*row*/, int j, double g, double p) const {
    const NodeData& n = (*nodes)[j];
    const double w = chi ? (*chi)[j] : 1.0;
    const double quad = -0.5 * alpha * n.A * p * p;
    const double quad_p = -alpha * n.A * p;
    if (w == 0.0) return {quad, 0.0, quad_p};
    const double xt = n.mu_over_s2 - n.grad_coef * p;
    const double th = theta_of_exp(n.log_gamma_over_s2 + xt + alpha * g);
    const double scale = w * n.sigma2 / (2.0 * alpha);
    const double bracket = 2.0 * n.gamma_over_s2 + xt * xt - th * (th + 2.0);
    // d(theta^2 + 2 theta)/du = 2 theta with u the log-argument of theta
    return {quad + scale * bracket, -w * n.sigma2 * th, quad_p - 2.0 * scale * n.grad_coef * (xt - th)};
  }
};

/// Nonlinearity of the protected-market equation with insurance rate f(t_i, x_j).
struct ProtectedSource {
  const std::vector<NodeData>* nodes;
  const Field* rate;
  double alpha;

  SourceValue operator()(int row, int j, double g, double p) const {
    const NodeData& n = (*nodes)[j];
    const double f = (*rate)(row, j);
    const double xd = n.mu_over_s2 - f / n.sigma2 - n.grad_coef * p;
    const double scale = n.sigma2 / (2.0 * alpha);
    const double jump = -(n.gamma / alpha) * std::expm1(alpha * g);
    return {-0.5 * alpha * n.A * p * p + jump + scale * xd * xd, -n.gamma * std::exp(alpha * g),
            -alpha * n.A * p - 2.0 * scale * n.grad_coef * xd};
  }
};

/// Discrete gradient/second difference weights at node j.
struct Stencil {
  double p = 0.0, s = 0.0;
  double pl = 0.0, pd = 0.0, pu = 0.0;
  double sl = 0.0, sd = 0.0, su = 0.0;
};

inline Stencil stencil(std::span<const double> v, int j, int n, double h, BoundaryCondition bc) {
  Stencil st;
  const double ih = 1.0 / h, ih2 = 1.0 / (h * h);
  if (j > 0 && j < n) {
    st.p = (v[j + 1] - v[j - 1]) * 0.5 * ih;
    st.s = (v[j + 1] - 2.0 * v[j] + v[j - 1]) * ih2;
    st.pl = -0.5 * ih;
    st.pu = 0.5 * ih;
    st.sl = ih2;
    st.sd = -2.0 * ih2;
    st.su = ih2;
    return st;
  }
  if (bc == BoundaryCondition::NeumannZero) {
    if (j == 0) {
      st.s = 2.0 * (v[1] - v[0]) * ih2;
      st.sd = -2.0 * ih2;
      st.su = 2.0 * ih2;
    } else {
      st.s = 2.0 * (v[n - 1] - v[n]) * ih2;
      st.sd = -2.0 * ih2;
      st.sl = 2.0 * ih2;
    }
    return st;
  }
  if (j == 0) {
    st.p = (v[1] - v[0]) * ih;
    st.pd = -ih;
    st.pu = ih;
  } else {
    st.p = (v[n] - v[n - 1]) * ih;
    st.pl = -ih;
    st.pd = ih;
  }
  return st;
}

/// Spatial operator D(v) = b v_x + A/2 v_xx + N(v, v_x) on one time row.
template <class Source>
class RowOperator {
 public:
  RowOperator(const std::vector<NodeData>& nodes, const GridSpec& grid, BoundaryCondition bc, const Source& src)
      : nodes_(nodes), n_(grid.n_space), h_(grid.dx()), bc_(bc), src_(src) {}

  bool dirichlet() const noexcept { return bc_ == BoundaryCondition::DirichletZero; }

  /// D at every node (boundary rows too, except under Dirichlet where they are left at 0).
  void apply(int row, std::span<const double> v, std::span<double> out) const {
    for (int j = 0; j <= n_; ++j) {
      if (dirichlet() && (j == 0 || j == n_)) {
        out[j] = 0.0;
        continue;
      }
      const Stencil st = stencil(v, j, n_, h_, bc_);
      const NodeData& nd = nodes_[j];
      out[j] = nd.b * st.p + 0.5 * nd.A * st.s + src_(row, j, v[j], st.p).value;
    }
  }

  /// D and its Jacobian, scaled by -weight and with 1/dt added on the diagonal.
  void linearize(int row, std::span<const double> v, double weight, double inv_dt, std::span<double> d_out,
                 Tridiagonal& jac) const {
    for (int j = 0; j <= n_; ++j) {
      if (dirichlet() && (j == 0 || j == n_)) {
        d_out[j] = 0.0;
        jac.lower[j] = jac.upper[j] = 0.0;
        jac.diag[j] = 1.0;
        continue;
      }
      const Stencil st = stencil(v, j, n_, h_, bc_);
      const NodeData& nd = nodes_[j];
      const SourceValue sv = src_(row, j, v[j], st.p);
      d_out[j] = nd.b * st.p + 0.5 * nd.A * st.s + sv.value;
      const double drift = nd.b + sv.d_p;
      const double diff = 0.5 * nd.A;
      jac.lower[j] = -weight * (drift * st.pl + diff * st.sl);
      jac.diag[j] = inv_dt - weight * (drift * st.pd + diff * st.sd + sv.d_g);
      jac.upper[j] = -weight * (drift * st.pu + diff * st.su);
    }
  }

  void gradient(std::span<const double> v, std::span<double> out) const {
    for (int j = 0; j <= n_; ++j) {
      // edge gradients are one-sided under every boundary condition
      const BoundaryCondition bc = bc_ == BoundaryCondition::NeumannZero ? BoundaryCondition::LinearExtrapolation : bc_;
      out[j] = stencil(v, j, n_, h_, bc).p;
    }
  }

 private:
  const std::vector<NodeData>& nodes_;
  int n_;
  double h_;
  BoundaryCondition bc_;
  Source src_;
};

inline double implicit_weight(TimeScheme s) noexcept { return s == TimeScheme::CrankNicolson ? 0.5 : 1.0; }

/// Implicit weight of the step from row i + 1 to row i.
inline double implicit_weight(const SolverOptions& opt, const GridSpec& g, int i) noexcept {
  return i >= g.n_time - opt.startup_steps ? 1.0 : implicit_weight(opt.scheme);
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// March backward from the terminal row; fills values and gradient.
template <class Source>
void march(const RowOperator<Source>& op, const SolverOptions& opt, Surface& s) {
  const GridSpec& g = s.grid();
  const std::size_t nc = g.cols();
  const double dt = g.dt(), inv_dt = 1.0 / dt;
  double w = implicit_weight(opt.scheme);
  const bool dirichlet = op.dirichlet();

  std::vector<double> d_known(nc), d_new(nc), rhs_known(nc), F(nc), delta(nc), trial(nc), d_trial(nc);
  Tridiagonal jac(nc);

  auto residual_into = [&](int row, std::span<const double> v, std::span<double> dv, std::span<double> out) {
    op.apply(row, v, dv);
    for (std::size_t j = 0; j < nc; ++j) out[j] = v[j] * inv_dt - w * dv[j] - rhs_known[j];
    if (dirichlet) {
      out[0] = v[0];
      out[nc - 1] = v[nc - 1];
    }
  };

  for (int i = g.n_time - 1; i >= 0; --i) {
    w = implicit_weight(opt, g, i);
    auto known = s.values.row(i + 1);
    auto v = s.values.row(i);
    if (w < 1.0) op.apply(i + 1, known, d_known);
    for (std::size_t j = 0; j < nc; ++j) rhs_known[j] = known[j] * inv_dt + (1.0 - w) * (w < 1.0 ? d_known[j] : 0.0);
    std::copy(known.begin(), known.end(), v.begin());
    if (dirichlet) v[0] = v[nc - 1] = 0.0;

    int it = 0;
    bool converged = false;
    double norm = 0.0;
    for (; it < opt.newton_max_iter; ++it) {
      op.linearize(i, v, w, inv_dt, d_new, jac);
      for (std::size_t j = 0; j < nc; ++j) F[j] = v[j] * inv_dt - w * d_new[j] - rhs_known[j];
      if (dirichlet) {
        F[0] = v[0];
        F[nc - 1] = v[nc - 1];
      }
      norm = max_abs(F);
      if (norm <= opt.newton_tol) {
        converged = true;
        break;
      }
      for (std::size_t j = 0; j < nc; ++j) delta[j] = -F[j];
      jac.solve(delta);

      double lambda = 1.0;
      bool accepted = false;
      for (int k = 0; k <= 10; ++k) {
        for (std::size_t j = 0; j < nc; ++j) trial[j] = v[j] + lambda * delta[j];
        residual_into(i, trial, d_trial, F);
        const double trial_norm = max_abs(F);
        if (std::isfinite(trial_norm) && trial_norm < norm) {
          accepted = true;
          break;
        }
        lambda *= 0.5;
        ++s.stats.line_search_halvings;
      }
      const double step = max_abs(delta);
      if (!accepted) {
        // no descent left: accept only if the Newton update is at round-off level
        if (step <= 1e-13 * (1.0 + max_abs(v)) && norm <= 1e3 * opt.newton_tol) {
          converged = true;
          ++s.stats.roundoff_exits;
          break;
        }
        throw NewtonDivergence(static_cast<std::size_t>(i), norm);
      }
      std::copy(trial.begin(), trial.end(), v.begin());
      if (lambda * step <= 1e-15 * (1.0 + max_abs(v))) {
        residual_into(i, v, d_trial, F);
        norm = max_abs(F);
        if (norm <= 1e3 * opt.newton_tol) {
          converged = true;
          ++s.stats.roundoff_exits;
          ++it;
          break;
        }
      }
    }
    if (!converged) throw NewtonDivergence(static_cast<std::size_t>(i), norm);
    s.stats.newton_iterations += it;
    s.stats.max_iterations_per_step = std::max(s.stats.max_iterations_per_step, it);
  }
  for (int i = 0; i <= g.n_time; ++i) op.gradient(s.values.row(i), s.gradient.row(i));
}

inline void check_grid_inside(const ModelSpec& m, const GridSpec& g) {
  g.validate();
  if (!(g.x_min > m.domain().lower && g.x_max < m.domain().upper))
    throw DomainError("grid [x_min, x_max] must lie strictly inside the state space");
}

inline Surface empty_surface(const GridSpec& g, SolveMode mode, double alpha, const SolverOptions& opt) {
  Surface s;
  s.values = Field(g);
  s.gradient = Field(g);
  s.mode = mode;
  s.alpha = alpha;
  s.options = opt;
  return s;
}

}  // namespace detail

/// Solves the full equation with terminal data q phi.
inline Surface solve_full(const ModelSpec& m, const ClaimSpec& c, const Preferences& pref, const GridSpec& grid,
                          const SolverOptions& opt = {}) {
  pref.validate();
  detail::check_grid_inside(m, grid);
  Surface s = detail::empty_surface(grid, SolveMode::Full, pref.alpha, opt);
  auto terminal = s.values.row(grid.n_time);
  for (int j = 0; j <= grid.n_space; ++j) terminal[j] = c.q * c.phi(grid.x(j));
  const auto nodes = detail::node_data(m, grid, pref.alpha);
  const detail::CertaintyEquivalentSource src{&nodes, nullptr, pref.alpha};
  detail::RowOperator<detail::CertaintyEquivalentSource> op(nodes, grid, opt.boundary, src);
  detail::march(op, opt, s);
  return s;
}

/// Solves the localized equation on E_n: bracket multiplied by chi_n, terminal chi_n q phi, zero lateral data.
inline Surface solve_local(const ModelSpec& m, const ClaimSpec& c, const Preferences& pref,
                           const LocalizationSpec& loc, const GridSpec& grid, SolverOptions opt = {}) {
  pref.validate();
  const double tol = 1e-12 * (loc.outer.upper - loc.outer.lower);
  if (std::abs(grid.x_min - loc.outer.lower) > tol || std::abs(grid.x_max - loc.outer.upper) > tol)
    throw ParameterError("local solve: grid must span E_n exactly");
  detail::check_grid_inside(m, grid);
  opt.boundary = BoundaryCondition::DirichletZero;
  Surface s = detail::empty_surface(grid, SolveMode::Local, pref.alpha, opt);
  s.local_n = loc.n_index;
  s.chi.resize(grid.cols());
  for (int j = 0; j <= grid.n_space; ++j) s.chi[j] = loc.chi(grid.x(j));
  auto terminal = s.values.row(grid.n_time);
  for (int j = 0; j <= grid.n_space; ++j) terminal[j] = s.chi[j] * c.q * c.phi(grid.x(j));
  const auto nodes = detail::node_data(m, grid, pref.alpha);
  const detail::CertaintyEquivalentSource src{&nodes, &s.chi, pref.alpha};
  detail::RowOperator<detail::CertaintyEquivalentSource> op(nodes, grid, opt.boundary, src);
  detail::march(op, opt, s);
  return s;
}

/// Grid on E_n with the given resolution, suitable for solve_local.
inline GridSpec local_grid(const LocalizationSpec& loc, int n_space, int n_time, double horizon) {
  return GridSpec{loc.outer.lower, loc.outer.upper, n_space, n_time, 0.0, horizon};
}

/// Solves the protected-market equation with zero terminal data for the rate field f.
inline Surface solve_protected(const ModelSpec& m, const Preferences& pref, const Field& rate, const GridSpec& grid,
                               const SolverOptions& opt = {}) {
  pref.validate();
  detail::check_grid_inside(m, grid);
  require_same_grid(rate.grid, grid, "solve_protected");
  Surface s = detail::empty_surface(grid, SolveMode::Protected, pref.alpha, opt);
  s.rate = rate;
  const auto nodes = detail::node_data(m, grid, pref.alpha);
  const detail::ProtectedSource src{&nodes, &s.rate, pref.alpha};
  detail::RowOperator<detail::ProtectedSource> op(nodes, grid, opt.boundary, src);
  detail::march(op, opt, s);
  return s;
}

/// Pointwise residual of the time-stepping equations, rows 0..n_time-1.
struct ResidualField {
  Field values;       // row n_time is unused (terminal row)
  double max_interior = 0.0;
  double max_all = 0.0;
};

namespace detail {

template <class Source>
ResidualField residual_with(const RowOperator<Source>& op, const Field& values, const SolverOptions& opt) {
  const GridSpec& g = values.grid;
  const std::size_t nc = g.cols();
  const double inv_dt = 1.0 / g.dt();
  ResidualField r{Field(g), 0.0, 0.0};
  std::vector<double> d_new(nc), d_known(nc);
  for (int i = 0; i < g.n_time; ++i) {
    const double w = implicit_weight(opt, g, i);
    auto v = values.row(i);
    auto u = values.row(i + 1);
    op.apply(i, v, d_new);
    if (w < 1.0) op.apply(i + 1, u, d_known);
    for (std::size_t j = 0; j < nc; ++j) {
      double res = (v[j] - u[j]) * inv_dt - w * d_new[j] - (w < 1.0 ? (1.0 - w) * d_known[j] : 0.0);
      if (op.dirichlet() && (j == 0 || j == nc - 1)) res = v[j];
      r.values(i, static_cast<int>(j)) = res;
      r.max_all = std::max(r.max_all, std::abs(res));
      if (j > 0 && j + 1 < nc) r.max_interior = std::max(r.max_interior, std::abs(res));
    }
  }
  return r;
}

}  // namespace detail

/// Residual of a solved surface under the operator of its own mode.
inline ResidualField residual(const Surface& s, const ModelSpec& m, const Preferences& pref) {
  const GridSpec& g = s.grid();
  const auto nodes = detail::node_data(m, g, pref.alpha);
  if (s.mode == SolveMode::Protected) {
    const detail::ProtectedSource src{&nodes, &s.rate, pref.alpha};
    return detail::residual_with(detail::RowOperator<detail::ProtectedSource>(nodes, g, s.options.boundary, src),
                                 s.values, s.options);
  }
  const detail::CertaintyEquivalentSource src{&nodes, s.mode == SolveMode::Local ? &s.chi : nullptr, pref.alpha};
  return detail::residual_with(
      detail::RowOperator<detail::CertaintyEquivalentSource>(nodes, g, s.options.boundary, src), s.values,
      s.options);
}

/// Residual of any surface's values inserted into the protected-market operator with rate f.
inline ResidualField protected_residual(const Surface& s, const Field& rate, const ModelSpec& m,
                                        const Preferences& pref) {
  const GridSpec& g = s.grid();
  require_same_grid(rate.grid, g, "protected_residual");
  const auto nodes = detail::node_data(m, g, pref.alpha);
  const detail::ProtectedSource src{&nodes, &rate, pref.alpha};
  return detail::residual_with(detail::RowOperator<detail::ProtectedSource>(nodes, g, s.options.boundary, src),
                               s.values, s.options);
}

/// Recomputes the stored gradient from the stored values (used after editing values).
inline void refresh_gradient(Surface& s) {
  const GridSpec& g = s.grid();
  for (int i = 0; i <= g.n_time; ++i) {
    auto v = s.values.row(i);
    auto out = s.gradient.row(i);
    const int n = g.n_space;
    const double h = g.dx();
    out[0] = (v[1] - v[0]) / h;
    out[n] = (v[n] - v[n - 1]) / h;
    for (int j = 1; j < n; ++j) out[j] = (v[j + 1] - v[j - 1]) / (2.0 * h);
  }
}

}  // namespace defrisk
