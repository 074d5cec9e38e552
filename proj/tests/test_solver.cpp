#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "defrisk/hjb_solver.hpp"
#include "defrisk/pricing.hpp"
#include "defrisk/truncation.hpp"
#include "oracles.hpp"

using namespace defrisk;

namespace {

ModelSpec constant_model(double mu, double sigma, double gamma, double rho) {
  // OU with mu2 = 0: every coefficient except the factor drift is constant
  return make_ou_model({0.7, mu / sigma, 0.0, sigma, gamma / sigma, rho});
}

GridSpec cir_grid(const ModelSpec& m, int nx, int nt) {
  const Interval tr = default_truncation(m);
  return {tr.lo, tr.hi, nx, nt, 0.0, 1.0};
}

}  // namespace

TEST(HjbRhs, Examples) {
  const auto eq = constant_model(1.0, 1.0, 1.0, 0.0);
  EXPECT_NEAR(hjb_rhs(eq, 0.0, 0.0, 0.3, 1.0), 0.0, 1e-14);
  const auto m0 = constant_model(0.0, 1.0, 1.0, 0.0);
  const double w = boost::math::lambert_w0(1.0);
  EXPECT_NEAR(hjb_rhs(m0, 0.0, 0.0, 0.3, 1.0), 0.5 * (2.0 - w * w - 2.0 * w), 1e-14);
  EXPECT_NEAR(hjb_rhs(m0, 0.0, 0.0, 0.3, 1.0), 0.272031, 1e-6);
}

TEST(HjbRhs, EqualityCaseThroughGradient) {
  // choose gx so that xt = mu/sigma^2 - (alpha/sigma) gx a rho equals y = gamma/sigma^2 (at g = 0)
  const double mu = 0.4, sigma = 1.0, gamma = 0.8, rho = 0.5, alpha = 2.0, g = 0.0;
  const auto m = constant_model(mu, sigma, gamma, rho);
  const double y = gamma / (sigma * sigma) * std::exp(alpha * g);
  const double gx = (mu / (sigma * sigma) - y) * sigma / (alpha * rho);
  // remove the gradient penalty so that only the bracket remains
  const double bracket = hjb_rhs(m, g, gx, 0.0, alpha) + 0.5 * alpha * gx * gx;
  EXPECT_NEAR(bracket, 0.0, 1e-12);
}

TEST(SolveFull, ConstantCoefficientsMatchOde) {
  const double mu = 0.6, sigma = 0.9, gamma = 0.3, rho = -0.4;
  const auto m = constant_model(mu, sigma, gamma, rho);
  const Preferences pref{2.0, 1.0};
  const GridSpec g{-2.0, 2.0, 50, 400, 0.0, 1.0};
  SolverOptions pure_cn;
  pure_cn.startup_steps = 0;
  for (double q : {0.0, 1.0}) {
    const ClaimSpec c = q == 0.0 ? ClaimSpec::zero() : ClaimSpec::bond(q);
    const auto ode = oracle::rk4_backward({mu, sigma, gamma, pref.alpha}, q, 1.0, g.n_time);
    auto err = [&](const Surface& s) {
      double e = 0.0;
      for (int i = 0; i <= g.n_time; ++i)
        for (int j = 0; j <= g.n_space; ++j) e = std::max(e, std::abs(s.values(i, j) - ode[g.n_time - i]));
      return e;
    };
    EXPECT_LT(err(solve_full(m, c, pref, g, pure_cn)), 1e-6) << "q = " << q;
    EXPECT_LT(err(solve_full(m, c, pref, g)), 1e-5) << "q = " << q;  // two backward Euler start-up steps
  }
}

TEST(SolveFull, TerminalRowExactAndLowerBound) {
  const auto m = make_cir_model(reference_cir_params());
  const Preferences pref;
  const GridSpec g = cir_grid(m, 100, 100);
  const auto s0 = solve_full(m, ClaimSpec::zero(), pref, g);
  for (int j = 0; j <= g.n_space; ++j) EXPECT_EQ(s0.values(g.n_time, j), 0.0);
  EXPECT_GE(s0.values.min(), -1e-8);
  const auto s3 = solve_full(m, ClaimSpec::bond(3.0), pref, g);
  for (int j = 0; j <= g.n_space; ++j) EXPECT_EQ(s3.values(g.n_time, j), 3.0);
  EXPECT_GE(s3.values.min(), -1e-8);
  const auto neg = ClaimSpec::tabulated({0.0, 0.1, 0.2, 0.5}, {-1.0, -0.5, 0.0, 0.5}, 2.0);
  const auto sn = solve_full(m, neg, pref, g);
  EXPECT_GE(sn.values.min(), neg.value_lower_bound() - 1e-8);
}

TEST(SolveFull, RejectsGridOutsideDomain) {
  const auto m = make_cir_model(reference_cir_params());
  EXPECT_THROW(solve_full(m, ClaimSpec::zero(), Preferences{}, GridSpec{0.0, 0.5, 32, 32, 0.0, 1.0}), DomainError);
}

TEST(Residual, ConvergedAndPerturbed) {
  const auto m = make_cir_model(reference_cir_params());
  const Preferences pref;
  const GridSpec g = cir_grid(m, 100, 100);
  Surface s = solve_full(m, ClaimSpec::zero(), pref, g);
  EXPECT_LE(residual(s, m, pref).max_all, 10 * s.options.newton_tol);
  s.values(20, 50) += 0.1;
  refresh_gradient(s);
  const auto r = residual(s, m, pref);
  EXPECT_GT(std::abs(r.values(20, 50)), 1e-2);
}

TEST(Residual, AnalyticOdeSolutionIsConsistent) {
  const double mu = 0.6, sigma = 0.9, gamma = 0.3;
  const auto m = constant_model(mu, sigma, gamma, 0.0);
  const Preferences pref{2.0, 1.0};
  double prev = 0.0;
  for (int nt : {50, 100}) {
    const GridSpec g{-1.0, 1.0, 20, nt, 0.0, 1.0};
    SolverOptions pure_cn;
    pure_cn.startup_steps = 0;
    Surface s = solve_full(m, ClaimSpec::zero(), pref, g, pure_cn);
    // replace the values by the (fine) ODE solution sampled on the grid
    const auto ode = oracle::rk4_backward({mu, sigma, gamma, pref.alpha}, 0.0, 1.0, nt * 64);
    for (int i = 0; i <= nt; ++i)
      for (int j = 0; j <= g.n_space; ++j) s.values(i, j) = ode[(nt - i) * 64];
    refresh_gradient(s);
    const double r = residual(s, m, pref).max_all;
    if (prev > 0.0) EXPECT_GT(prev / r, 3.0);  // second order in time
    prev = r;
  }
}

TEST(Gradient, CentralDifferences) {
  const auto m = make_cir_model(reference_cir_params());
  const GridSpec g = cir_grid(m, 80, 40);
  const auto s = solve_full(m, ClaimSpec::zero(), Preferences{}, g);
  for (int i = 0; i <= g.n_time; i += 10)
    for (int j = 1; j < g.n_space; ++j)
      EXPECT_NEAR(s.gradient(i, j), (s.values(i, j + 1) - s.values(i, j - 1)) / (2.0 * g.dx()), 1e-12);
}

TEST(SolveFull, SelfConvergenceSecondOrder) {
  const auto m = make_cir_model(reference_cir_params());
  const Preferences pref;
  std::vector<Surface> lv;
  for (int n : {50, 100, 200}) lv.push_back(solve_full(m, ClaimSpec::zero(), pref, cir_grid(m, n, n)));
  const GridSpec& gc = lv[0].grid();
  double d0 = 0.0, d1 = 0.0;
  for (int j = 0; j <= gc.n_space; ++j) {
    const double x = gc.x(j);
    if (x < gc.x_min + 0.1 * (gc.x_max - gc.x_min) || x > gc.x_max - 0.1 * (gc.x_max - gc.x_min)) continue;
    d0 = std::max(d0, std::abs(lv[0].interpolate(0.0, x) - lv[1].interpolate(0.0, x)));
    d1 = std::max(d1, std::abs(lv[1].interpolate(0.0, x) - lv[2].interpolate(0.0, x)));
  }
  EXPECT_GT(std::log2(d0 / d1), 1.7);
}

TEST(SolveLocal, UnitCutoffMatchesDirichletFull) {
  const auto m = make_cir_model(reference_cir_params());
  const Preferences pref;
  LocalizationSpec loc;
  loc.n_index = 5;
  loc.outer = {0.005, 0.4};
  loc.inner = {0.01, 0.3};
  loc.chi = [](double) { return 1.0; };
  const GridSpec g = local_grid(loc, 120, 120, 1.0);
  const auto local = solve_local(m, ClaimSpec::zero(), pref, loc, g);
  SolverOptions opt;
  opt.boundary = BoundaryCondition::DirichletZero;
  const auto full = solve_full(m, ClaimSpec::zero(), pref, g, opt);
  double err = 0.0;
  for (std::size_t k = 0; k < full.values.data.size(); ++k)
    err = std::max(err, std::abs(local.values.data[k] - full.values.data[k]));
  EXPECT_LE(err, 1e-10);
  EXPECT_EQ(local.mode_label(), "local(5)");
}

TEST(SolveLocal, ZeroCutoffGivesZero) {
  const auto m = make_cir_model(reference_cir_params());
  LocalizationSpec loc;
  loc.n_index = 3;
  loc.outer = {0.005, 0.4};
  loc.inner = {0.01, 0.3};
  loc.chi = [](double) { return 0.0; };
  const auto s = solve_local(m, ClaimSpec::zero(), Preferences{}, loc, local_grid(loc, 60, 60, 1.0));
  EXPECT_EQ(s.values.max_abs(), 0.0);
}

TEST(SolveLocal, LowerBoundAndConvergenceInN) {
  const auto m = make_cir_model(reference_cir_params());
  const Preferences pref;
  std::vector<Surface> s;
  const std::vector<int> ns{4, 8, 16};
  for (int n : ns) {
    const auto loc = build_localization(m, n);
    s.push_back(solve_local(m, ClaimSpec::bond(1.0), pref, loc, local_grid(loc, 1600, 200, 1.0)));
    EXPECT_GE(s.back().values.min(), -1e-8);
  }
  // gaps on a fixed interior window of E_3
  std::vector<double> gaps;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    double gap = 0.0;
    for (int i = 0; i <= 200; ++i) {
      const double x = 0.34 + (2.6 - 0.34) * i / 200.0;
      gap = std::max(gap, std::abs(s[k].interpolate(0.0, x) - s[k + 1].interpolate(0.0, x)));
    }
    gaps.push_back(gap);
  }
  EXPECT_LT(gaps[1], gaps[0]);
  EXPECT_LT(gaps[1], 1e-3);
}

TEST(SolveProtected, ReproducesFullSurface) {
  const auto m = make_cir_model(reference_cir_params());
  const Preferences pref;
  const GridSpec g = cir_grid(m, 200, 200);
  const auto G = solve_full(m, ClaimSpec::zero(), pref, g);
  const Field f = insurance_rate(G, m, pref);
  EXPECT_LE(protected_residual(G, f, m, pref).max_all, 1e-7);
  const auto Gd = solve_protected(m, pref, f, g);
  double err = 0.0;
  for (std::size_t k = 0; k < G.values.data.size(); ++k)
    err = std::max(err, std::abs(G.values.data[k] - Gd.values.data[k]));
  EXPECT_LE(err, 1e-5);
  for (int j = 0; j <= g.n_space; ++j) EXPECT_EQ(Gd.values(g.n_time, j), 0.0);
  EXPECT_GE(Gd.values.min(), -1e-8);
  EXPECT_LE(residual(Gd, m, pref).max_all, 10 * Gd.options.newton_tol);
}

TEST(SolveProtected, RateEqualToDriftWithVanishingIntensity) {
  const auto m = make_ou_model({0.5, 0.4, 0.0, 1.0, 1e-9, 0.0});
  const Preferences pref{1.5, 1.0};
  const GridSpec g{-3.0, 3.0, 40, 40, 0.0, 1.0};
  Field f(g, m.mu(0.0));
  const auto s = solve_protected(m, pref, f, g);
  EXPECT_LT(s.values.max_abs(), 1e-8);
}

TEST(SolveFull, BackwardEulerAgreesToFirstOrder) {
  const auto m = make_cir_model(reference_cir_params());
  const Preferences pref;
  const GridSpec g = cir_grid(m, 100, 400);
  SolverOptions be;
  be.scheme = TimeScheme::BackwardEuler;
  const auto a = solve_full(m, ClaimSpec::zero(), pref, g);
  const auto b = solve_full(m, ClaimSpec::zero(), pref, g, be);
  EXPECT_LT(std::abs(a.interpolate(0.0, 0.06) - b.interpolate(0.0, 0.06)), 1e-4);
  EXPECT_LE(residual(b, m, pref).max_all, 10 * be.newton_tol);
}

TEST(SolveLocal, StartupStepsDampSteepTerminalData) {
  // q chi drops from about 6 to 0 within a few cells next to the outer boundary
  const auto m = make_cir_model(reference_cir_params());
  const auto loc = build_localization(m, 4);
  const GridSpec g = local_grid(loc, 200, 200, 1.0);
  EXPECT_GE(solve_local(m, ClaimSpec::bond(10.0), Preferences{}, loc, g).values.min(), -1e-8);
  SolverOptions pure_cn;
  pure_cn.startup_steps = 0;
  EXPECT_LT(solve_local(m, ClaimSpec::bond(10.0), Preferences{}, loc, g, pure_cn).values.min(), -1e-2);
}
