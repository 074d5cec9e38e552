// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "defrisk/assumptions.hpp"
#include "defrisk/hjb_solver.hpp"
#include "defrisk/lambertw.hpp"
#include "defrisk/montecarlo.hpp"
#include "defrisk/pricing.hpp"
#include "defrisk/truncation.hpp"
#include "oracles.hpp"

using namespace defrisk;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Shared CIR reference solve (phi = 0, default 400 x 400 grid).
struct Reference {
  ModelSpec model = make_cir_model(reference_cir_params());
  Preferences pref{};
  GridSpec grid;
  Surface G;
  Field pi;

  Reference() {
    const Interval tr = default_truncation(model);
    grid = GridSpec{tr.lo, tr.hi, 400, 400, 0.0, pref.horizon_T};
    G = solve_full(model, ClaimSpec::zero(), pref, grid);
    pi = optimal_policy(G, model, pref);
  }
};

Reference& reference() {
  static Reference r;
  return r;
}

GridSpec scaled(const GridSpec& g, int nx, int nt) { return {g.x_min, g.x_max, nx, nt, g.t_start, g.t_end}; }

Outcome c1_parameter_identities() {
  const double sigma = 1.2247, mu2 = 1.3608, gamma2 = 0.4145, theta = 0.06;
  const double a = sigma * sigma * theta, b = sigma * mu2 * theta, c = std::exp(-sigma * gamma2 * theta);
  const bool ok = std::abs(a - 0.09) <= 1e-3 && std::abs(b - 0.10) <= 1e-3 && std::abs(c - 0.97) <= 1e-3;
  return {ok, "sigma^2 theta = " + num(a) + ", sigma mu2 theta = " + num(b) + ", exp(-sigma gamma2 theta) = " + num(c)};
}

Outcome c2_lambert_w() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(std::log(1e-8), std::log(1e8));
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double y = std::exp(u(rng));
    const double w = theta(y);
    worst = std::max(worst, std::abs(w * std::exp(w) - y) / std::max(1.0, y));
  }
  const double t1 = theta(1.0);
  const bool ok = worst <= 1e-12 && std::abs(t1 - 0.5671432904) <= 1e-9;
  return {ok, "max scaled defect " + num(worst) + " (tol 1e-12), theta(1) = " + num(t1)};
}

Outcome c3_theta_inequality() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ux(-10.0, 10.0), uy(0.0, 10.0);
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    const double x = ux(rng), y = std::max(uy(rng), 1e-300);
    const double w = theta_of_exp(std::log(y) + x);
    worst = std::min(worst, 2.0 * y + x * x - w * w - 2.0 * w);
  }
  double eq = 0.0;
  for (int k = 1; k <= 1000; ++k) {
    const double y = 0.01 * k;
    const double w = theta_of_exp(std::log(y) + y);
    eq = std::max(eq, std::abs(2.0 * y + y * y - w * w - 2.0 * w));
  }
  return {worst >= -1e-10 && eq <= 1e-8, "min gap " + num(worst) + " (tol -1e-10), max gap on x = y " + num(eq)};
}

Outcome c4_constant_coefficients() {
  const double mu = 0.6, sigma = 0.9, gamma = 0.3, rho = -0.4;
  const auto m = make_ou_model({0.0, mu / sigma, 0.0, sigma, gamma / sigma, rho});
  const Preferences pref{2.0, 1.0};
  const GridSpec g{-2.0, 2.0, 400, 2000, 0.0, 1.0};
  double err = 0.0;
  for (double q : {0.0, 1.0}) {
    const auto s = solve_full(m, q == 0.0 ? ClaimSpec::zero() : ClaimSpec::bond(q), pref, g);
    const int sub = 8;
    const auto ode = oracle::rk4_backward({mu, sigma, gamma, pref.alpha}, q, 1.0, g.n_time * sub);
    for (int i = 0; i <= g.n_time; ++i)
      for (int j = 0; j <= g.n_space; ++j) err = std::max(err, std::abs(s.values(i, j) - ode[(g.n_time - i) * sub]));
  }
  return {err <= 1e-6, "max |G - ODE| = " + num(err) + " on 400 x 2000 (tol 1e-6)"};
}

Outcome c5_self_convergence() {
  auto& r = reference();
  const Surface g1 = solve_full(r.model, ClaimSpec::zero(), r.pref, scaled(r.grid, 100, 100));
  const Surface g2 = solve_full(r.model, ClaimSpec::zero(), r.pref, scaled(r.grid, 200, 200));
  const Surface& g3 = r.G;
  const double w = r.grid.x_max - r.grid.x_min;
  const double lo = r.grid.x_min + 0.1 * w, hi = r.grid.x_max - 0.1 * w;
  double d12 = 0.0, d23 = 0.0;
  const GridSpec& gc = g1.grid();
  for (int j = 0; j <= gc.n_space; ++j) {
    const double x = gc.x(j);
    if (x < lo || x > hi) continue;
    d12 = std::max(d12, std::abs(g1.interpolate(0.0, x) - g2.interpolate(0.0, x)));
    d23 = std::max(d23, std::abs(g2.interpolate(0.0, x) - g3.interpolate(0.0, x)));
  }
  const double order = std::log2(d12 / d23);
  return {order >= 1.7, "order " + num(order) + " from gaps " + num(d12) + ", " + num(d23) + " (min 1.7)"};
}

Outcome c6_lower_bound() {
  auto& r = reference();
  const GridSpec g = scaled(r.grid, 200, 200);
  const auto loc = build_localization(r.model, 4);
  const GridSpec gl = local_grid(loc, 200, 200, r.pref.horizon_T);
  double worst = 1e300;
  std::ostringstream bad;
  auto check = [&](const Surface& s, const std::string& label, double bound) {
    const double slack = s.values.min() - bound;
    worst = std::min(worst, slack);
    if (slack < -1e-8) bad << ' ' << label;
  };
  for (const std::string phi : {"zero", "one"}) {
    for (double q : {1.0, 3.0, 5.0, 10.0}) {
      const ClaimSpec c = phi == "zero" ? ClaimSpec::zero() : ClaimSpec::bond(q);
      const double bound = std::min(0.0, c.value_lower_bound());
      const std::string tag = "phi=" + phi + ",q=" + num(q);
      check(solve_full(r.model, c, r.pref, g), "full:" + tag, bound);
      check(solve_local(r.model, c, r.pref, loc, gl), "local:" + tag, bound);
    }
  }
  const Surface G0 = solve_full(r.model, ClaimSpec::zero(), r.pref, g);
  check(solve_protected(r.model, r.pref, insurance_rate(G0, r.model, r.pref), g), "protected", 0.0);
  const bool ok = bad.str().empty();
  return {ok, "min(G - bound) = " + num(worst) + " over 17 solves (tol -1e-8)" + (ok ? "" : "; failing:" + bad.str())};
}

Outcome c7_insurance_forms() {
  auto& r = reference();
  const Field f = insurance_rate(r.G, r.model, r.pref);
  const Field fh = insurance_rate_via_h(r.G, r.pi, r.model, r.pref);
  double worst = 0.0;
  for (std::size_t k = 0; k < f.data.size(); ++k)
    worst = std::max(worst, std::abs(f.data[k] - fh.data[k]) / std::max(std::abs(f.data[k]), 1e-300));
  return {worst <= 1e-10, "max relative gap " + num(worst) + " over " + std::to_string(f.data.size()) + " nodes"};
}

Outcome c8_insurance_bounds() {
  auto& r = reference();
  const Field f = insurance_rate(r.G, r.model, r.pref);
  const auto bd = insurance_bounds(r.G, r.pi, r.model, r.pref);
  double over = -1e300;
  int sign_miss = 0;
  for (std::size_t k = 0; k < f.data.size(); ++k) {
    over = std::max(over, f.data[k] - bd.upper.data[k]);
    const double s = bd.sign_indicator.data[k];
    if (std::abs(s) > 1e-8 && (f.data[k] > 0.0) != (s > 0.0)) ++sign_miss;
  }
  const Interval band = reporting_band(r.model);
  const GridSpec& g = r.grid;
  int non_increasing = 0, below_gamma = 0;
  for (int i = 0; i <= g.n_time; ++i) {
    double prev = -1e300;
    for (int j = 0; j <= g.n_space; ++j) {
      const double x = g.x(j);
      if (x < band.lo || x > band.hi) continue;
      if (!(f(i, j) > prev)) ++non_increasing;
      if (f(i, j) < r.model.gamma(x)) ++below_gamma;
      prev = f(i, j);
    }
  }
  const bool ok = over <= 1e-8 && sign_miss == 0 && non_increasing == 0 && below_gamma == 0;
  return {ok, "max(f - upper) = " + num(over) + ", sign mismatches " + std::to_string(sign_miss) +
                  ", on band [" + num(band.lo) + ", " + num(band.hi) + "]: non-increasing steps " +
                  std::to_string(non_increasing) + ", nodes with f < gamma " + std::to_string(below_gamma)};
}

Outcome c9_protected_identity() {
  auto& r = reference();
  const Field f = insurance_rate(r.G, r.model, r.pref);
  const double res = protected_residual(r.G, f, r.model, r.pref).max_all;
  const Surface Gd = solve_protected(r.model, r.pref, f, r.grid);
  double gap = 0.0;
  for (std::size_t k = 0; k < Gd.values.data.size(); ++k)
    gap = std::max(gap, std::abs(Gd.values.data[k] - r.G.values.data[k]));
  return {res <= 1e-7 && gap <= 1e-5, "residual of G in protected operator " + num(res) + " (tol 1e-7), max |G^d - G| " +
                                          num(gap) + " (tol 1e-5)"};
}

Outcome c10_price_monotonicity() {
  auto& r = reference();
  const Interval band = reporting_band(r.model);
  const GridSpec& g = r.grid;
  std::vector<Field> prices;
  for (double q : {1.0, 3.0, 5.0, 10.0})
    prices.push_back(indifference_price(solve_full(r.model, ClaimSpec::bond(q), r.pref, g), r.G, q));
  int q_viol = 0, x_viol = 0, x_steps = 0, terminal_viol = 0;
  for (std::size_t k = 0; k < prices.size(); ++k) {
    for (int j = 0; j <= g.n_space; ++j) {
      if (prices[k](g.n_time, j) != 1.0) ++terminal_viol;
      if (k > 0 && prices[k](0, j) > prices[k - 1](0, j)) ++q_viol;
    }
    double prev = -1e300;
    for (int j = 0; j <= g.n_space; ++j) {
      const double x = g.x(j);
      if (x < band.lo || x > band.hi) continue;
      if (prev > -1e300) ++x_steps;
      if (prices[k](0, j) < prev) ++x_viol;
      prev = prices[k](0, j);
    }
  }
  const bool ok = q_viol == 0 && x_viol == 0 && terminal_viol == 0;
  return {ok, "violations: in q " + std::to_string(q_viol) + ", in x on band " + std::to_string(x_viol) + " of " +
                  std::to_string(x_steps) + " steps, p(T) != 1 " + std::to_string(terminal_viol) + "; q = 1: p(0, " +
                  num(band.lo) + ") = " + num(prices[0].interpolate(0.0, band.lo)) + ", p(0, " + num(band.hi) +
                  ") = " + num(prices[0].interpolate(0.0, band.hi)) +
                  (x_viol ? " (price falls as the default intensity grows with x; see notes)" : "")};
}

Outcome c11_short_horizon_curve() {
  const auto rows = short_horizon_curve();
  bool origin = false, bound_ok = true;
  int zeros = 0;
  double zero_at = std::nan("");
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    if (r.alpha_pi == 0.0) origin = r.f_over_sigma2 == 2.0 / 3.0 && r.upper_bound == r.f_over_sigma2;
    else if (!(r.f_over_sigma2 < r.upper_bound)) bound_ok = false;
    if (k > 0 && (rows[k - 1].f_over_sigma2 < 0.0) != (r.f_over_sigma2 < 0.0)) {
      ++zeros;
      zero_at = insurance_zero_threshold(2.0 / 3.0);
    }
  }
  const bool ok = origin && bound_ok && zeros == 1 && std::abs(zero_at + 0.2341) <= 1e-3;
  return {ok, std::string("passes (0, 2/3): ") + (origin ? "yes" : "no") + ", sign changes " + std::to_string(zeros) +
                  ", zero at " + num(zero_at) + ", strictly below bound off 0: " + (bound_ok ? "yes" : "no")};
}

const VerificationResult& verification() {
  static const VerificationResult res = [] {
    auto& r = reference();
    VerificationSettings vs;
    vs.sim.n_paths = 100000;
    vs.sim.n_steps = 1000;
    vs.sim.seed = 1;
    vs.sim.scheme = default_scheme(r.model);
    vs.sim.x0 = 0.06;
    vs.sim.t_end = r.pref.horizon_T;
    vs.n_seeds = 10;
    return verify_surface(r.model, ClaimSpec::zero(), r.pref, r.G, r.pi, vs);
  }();
  return res;
}

const VerificationCheck& check_named(const VerificationResult& v, const std::string& name) {
  for (const auto& c : v.checks)
    if (c.name == name) return c;
  throw std::runtime_error("missing check " + name);
}

Outcome c12_mc_primal() {
  const auto& v = verification();
  const auto& ce = check_named(v, "ce_match");
  const auto& sh = check_named(v, "step_halving");
  return {ce.passed && sh.passed, "G(0, 0.06) = " + num(v.g0) + ", CE = " + num(v.ce.mean) + " +- " +
                                      num(v.ce.std_error) + " [" + ce.detail + "]; coarse CE = " + num(v.ce_coarse.mean) +
                                      " [" + sh.detail + "]"};
}

Outcome c13_duality() {
  const auto& v = verification();
  const auto& m = check_named(v, "martingale_mass");
  const auto& d = check_named(v, "dual_match");
  const auto& s = check_named(v, "suboptimality");
  return {m.passed && d.passed && s.passed, "E[Z] = " + num(v.mass.mean) + " +- " + num(v.mass.std_error) +
                                                ", dual = " + num(v.dual.mean) + " +- " + num(v.dual.std_error) +
                                                ", CE(pi + 0.5) = " + num(v.ce_perturbed.mean) + " +- " +
                                                num(v.ce_perturbed.std_error)};
}

Outcome c14_moment_bound() {
  const CIRParams p = reference_cir_params();
  const double bound = cir_moment_bound(p, 0.0, 1.5625, 0.06, 1.0).bound;
  std::vector<MCEstimate> runs;
  for (std::uint64_t s = 1; s <= 10; ++s) runs.push_back(mc_cir_moment_probe(p, 0.0, 1.5625, 0.06, 1.0, 20000, 500, s));
  const MCEstimate e = pool(runs, "moment");
  return {e.mean <= bound + 3.0 * e.std_error,
          "MC " + num(e.mean) + " +- " + num(e.std_error) + " vs closed-form bound " + num(bound) + " (one-sided, 3 se)"};
}

Outcome c15_assumption_reports() {
  const Preferences pref;
  const CIRParams ref = reference_cir_params();
  const auto r_ref = check_assumptions(make_cir_model(ref), ClaimSpec::zero(), pref);
  CIRParams bad = ref;
  bad.xi = 0.2;
  AssumptionReport r_bad = check_static_assumptions(bad, ClaimSpec::zero());
  r_bad.append(check_cir_integrability(bad, pref));
  const auto* factor = r_bad.find("A:factor");
  const bool bad_ok = factor && factor->status == Status::Fails &&
                      factor->witness.find("kappa*theta - xi^2/2") != std::string::npos;
  bool ou_ok = true;
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(-2.0, 2.0), pos(0.1, 3.0), cor(-0.99, 0.99);
  for (int k = 0; k < 20; ++k) {
    const OUParams p{pos(rng), u(rng), u(rng), pos(rng), pos(rng), cor(rng)};
    if (!check_assumptions(make_ou_model(p), ClaimSpec::bond(1.0), pref).all_hold()) ou_ok = false;
  }
  const bool ok = r_ref.all_hold() && bad_ok && ou_ok;
  return {ok, std::string("reference all hold: ") + (r_ref.all_hold() ? "yes" : "no") + "; xi = 0.2: " +
                  (factor ? factor->witness : std::string("no A:factor entry")) + "; 20 OU draws all hold: " +
                  (ou_ok ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria{
      c1_parameter_identities, c2_lambert_w,      c3_theta_inequality, c4_constant_coefficients, c5_self_convergence,
      c6_lower_bound,          c7_insurance_forms, c8_insurance_bounds, c9_protected_identity,    c10_price_monotonicity,
      c11_short_horizon_curve,             c12_mc_primal,      c13_duality,         c14_moment_bound,         c15_assumption_reports};
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::printf("%s criterion %zu: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", k + 1, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
