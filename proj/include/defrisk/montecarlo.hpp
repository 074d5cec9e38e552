#pragma once

// Path simulation of the factor, the intensity-driven default time, wealth
// under a given trading policy and the candidate dual density, plus the
// estimators used to cross-check the PDE surfaces.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "defrisk/csv.hpp"
#include "defrisk/errors.hpp"
#include "defrisk/grid.hpp"
#include "defrisk/hjb_solver.hpp"
#include "defrisk/model.hpp"

namespace defrisk {

enum class SimScheme { EulerMaruyama, ExactOU, FullTruncationCIR };

inline SimScheme default_scheme(const ModelSpec& m) {
  switch (m.kind()) {
    case ModelKind::OU: return SimScheme::ExactOU;
    case ModelKind::CIR: return SimScheme::FullTruncationCIR;
    case ModelKind::Custom: return SimScheme::EulerMaruyama;
  }
  return SimScheme::EulerMaruyama;
}

struct SimConfig {
  std::int64_t n_paths = 10000;
  int n_steps = 100;
  std::uint64_t seed = 1;
  SimScheme scheme = SimScheme::FullTruncationCIR;
  double x0 = 0.06;
  double t0 = 0.0;
  double t_end = 1.0;

  double dt() const noexcept { return (t_end - t0) / n_steps; }

  void validate(const ModelSpec& m) const {
    if (n_paths < 1) throw ParameterError("n_paths must be >= 1");
    if (n_steps < 1) throw ParameterError("n_steps must be >= 1");
    if (!(t_end > t0)) throw ParameterError("simulation needs t_end > t0");
    if (!m.domain().contains(x0)) throw DomainError("x0 must lie in the state space");
    if (scheme == SimScheme::ExactOU && m.kind() != ModelKind::OU)
      throw ParameterError("ExactOU scheme requires an OU model");
    if (scheme == SimScheme::FullTruncationCIR && m.kind() != ModelKind::CIR)
      throw ParameterError("FullTruncationCIR scheme requires a CIR model");
  }
};

/// One simulated path. Vectors are indexed by time step; the bundle is reused across paths.
struct PathBundle {
  double t0 = 0.0;
  double dt = 0.0;
  int n_steps = 0;
  std::vector<double> x;    // n_steps + 1
  std::vector<double> dW;   // factor Brownian increments
  std::vector<double> dW0;  // independent asset noise
  double exp_draw = 0.0;    // -log U, U in (0, 1)
  double bridge_w = 0.0;    // standard normals for the partial step at default
  double bridge_w0 = 0.0;

  std::vector<Coefficients> coef;  // coefficients at x[k], filled with the default time

  // default
  std::vector<double> cum_intensity;  // trapezoidal int gamma(X) du
  int default_step = -1;              // step k with delta in (t_k, t_{k+1}]; -1 if no default by T
  double default_fraction = 0.0;      // (delta - t_k) / dt

  // wealth and dual density
  std::vector<double> pi;      // policy at (t_k, x_k) used by the last replay
  std::vector<double> wealth;  // frozen after delta
  double z_closed = 1.0;       // closed-form density at T
  double z_sde = 1.0;          // stochastic-exponential density at T

  double t(int k) const noexcept { return t0 + k * dt; }
  bool survived() const noexcept { return default_step < 0; }
  double default_time() const noexcept {
    return survived() ? std::numeric_limits<double>::infinity() : t(default_step) + default_fraction * dt;
  }
  double survival_weight() const noexcept { return std::exp(-cum_intensity.back()); }

  void resize(int n) {
    n_steps = n;
    x.assign(n + 1, 0.0);
    dW.assign(n, 0.0);
    dW0.assign(n, 0.0);
    coef.assign(n + 1, Coefficients{});
    cum_intensity.assign(n + 1, 0.0);
    pi.assign(n, 0.0);
    wealth.assign(n + 1, 0.0);
  }
};

struct MCEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::int64_t n_paths = 0;
  std::string label;
};

/// Mean of per-seed means; standard error sqrt(sum se^2) / k.
inline MCEstimate pool(std::span<const MCEstimate> runs, std::string label = {}) {
  if (runs.empty()) throw ParameterError("pool: no runs");
  MCEstimate out;
  double v = 0.0;
  for (const auto& r : runs) {
    out.mean += r.mean;
    v += r.std_error * r.std_error;
    out.n_paths += r.n_paths;
  }
  const double k = static_cast<double>(runs.size());
  out.mean /= k;
  out.std_error = std::sqrt(v) / k;
  out.label = label.empty() ? runs.front().label : std::move(label);
  return out;
}

inline void write_estimate_csv_header(std::ostream& os) { os << "label,mean,std_error,n_paths,seed\n"; }

inline void write_estimate_csv_row(std::ostream& os, const MCEstimate& e, std::uint64_t seed) {
  os << e.label << ',' << format_double(e.mean) << ',' << format_double(e.std_error) << ',' << e.n_paths << ','
     << seed << '\n';
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent generator for (seed, path): the pair is hashed into the engine seed.
inline std::mt19937_64 path_engine(std::uint64_t seed, std::uint64_t path) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ (path * 0xd1342543de82ef95ULL + 1)));
}

inline double open_uniform(std::mt19937_64& eng) {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(eng);
    if (u > 0.0 && u < 1.0) return u;
  }
}

}  // namespace detail

/// Draws the noise of path `path` and advances the factor with the configured scheme.
inline void simulate_factor(const ModelSpec& m, const SimConfig& cfg, std::uint64_t path, PathBundle& b) {
  b.t0 = cfg.t0;
  b.dt = cfg.dt();
  if (b.n_steps != cfg.n_steps) b.resize(cfg.n_steps);
  auto eng = detail::path_engine(cfg.seed, path);
  boost::random::normal_distribution<double> nd;
  const double dt = b.dt, sdt = std::sqrt(dt);
  const int n = cfg.n_steps;
  b.x[0] = cfg.x0;

  switch (cfg.scheme) {
    case SimScheme::ExactOU: {
      const double k = m.ou_params()->b_mr;
      // (X_{t+dt} - e^{-k dt} X_t, dW) is jointly Gaussian
      const double decay = std::exp(-k * dt);
      const double var_i = k == 0.0 ? dt : -std::expm1(-2.0 * k * dt) / (2.0 * k);
      const double cov = k == 0.0 ? dt : -std::expm1(-k * dt) / k;
      const double beta = cov / dt;
      const double resid = std::sqrt(std::max(var_i - beta * cov, 0.0));
      for (int i = 0; i < n; ++i) {
        const double z1 = nd(eng), z2 = nd(eng);
        b.dW[i] = sdt * z1;
        b.dW0[i] = sdt * nd(eng);
        b.x[i + 1] = decay * b.x[i] + beta * b.dW[i] + resid * z2;
      }
      break;
    }
    case SimScheme::FullTruncationCIR: {
      const CIRParams& p = *m.cir_params();
      for (int i = 0; i < n; ++i) {
        b.dW[i] = sdt * nd(eng);
        b.dW0[i] = sdt * nd(eng);
        const double xp = std::max(b.x[i], 0.0);
        b.x[i + 1] = b.x[i] + p.kappa * (p.theta - xp) * dt + p.xi * std::sqrt(xp) * b.dW[i];
      }
      break;
    }
    case SimScheme::EulerMaruyama: {
      const double lo = m.domain().lower, hi = m.domain().upper;
      const double lo_in = std::nextafter(lo, kInf), hi_in = std::nextafter(hi, -kInf);
      for (int i = 0; i < n; ++i) {
        b.dW[i] = sdt * nd(eng);
        b.dW0[i] = sdt * nd(eng);
        const Coefficients c = m.evaluate(b.x[i]);
        b.x[i + 1] = std::clamp(b.x[i] + c.b * dt + std::sqrt(std::max(c.A, 0.0)) * b.dW[i], lo_in, hi_in);
      }
      break;
    }
  }
  b.exp_draw = -std::log(detail::open_uniform(eng));
  b.bridge_w = nd(eng);
  b.bridge_w0 = nd(eng);
}

/// Trapezoidal cumulative intensity; delta is located by linear interpolation inside the crossing step.
/// Also caches the coefficients along the path.
inline void simulate_default(const ModelSpec& m, PathBundle& b) {
  const int n = b.n_steps;
  b.default_step = -1;
  b.default_fraction = 0.0;
  b.cum_intensity[0] = 0.0;
  b.coef[0] = m.evaluate(b.x[0]);
  for (int i = 0; i < n; ++i) {
    b.coef[i + 1] = m.evaluate(b.x[i + 1]);
    const double lam0 = b.cum_intensity[i];
    const double lam1 = lam0 + 0.5 * (b.coef[i].gamma + b.coef[i + 1].gamma) * b.dt;
    b.cum_intensity[i + 1] = lam1;
    if (b.default_step < 0 && lam1 >= b.exp_draw) {
      b.default_step = i;
      b.default_fraction = lam1 > lam0 ? std::clamp((b.exp_draw - lam0) / (lam1 - lam0), 0.0, 1.0) : 1.0;
    }
  }
}

/// Sums consecutive increments pairwise: the same Brownian path and exponential draw on a grid with
/// twice the step. The factor and default time are recomputed on the coarse grid.
inline void coarsen(const PathBundle& fine, const ModelSpec& m, const SimConfig& coarse_cfg, PathBundle& out) {
  if (fine.n_steps != 2 * coarse_cfg.n_steps) throw ParameterError("coarsen: step counts must differ by 2x");
  out.t0 = fine.t0;
  out.dt = 2.0 * fine.dt;
  if (out.n_steps != coarse_cfg.n_steps) out.resize(coarse_cfg.n_steps);
  out.exp_draw = fine.exp_draw;
  out.bridge_w = fine.bridge_w;
  out.bridge_w0 = fine.bridge_w0;
  out.x[0] = fine.x[0];
  const double dt = out.dt;
  for (int i = 0; i < out.n_steps; ++i) {
    out.dW[i] = fine.dW[2 * i] + fine.dW[2 * i + 1];
    out.dW0[i] = fine.dW0[2 * i] + fine.dW0[2 * i + 1];
  }
  switch (coarse_cfg.scheme) {
    case SimScheme::ExactOU:
      // the exact transition is consistent across grids
      for (int i = 0; i <= out.n_steps; ++i) out.x[i] = fine.x[2 * i];
      break;
    case SimScheme::FullTruncationCIR: {
      const CIRParams& p = *m.cir_params();
      for (int i = 0; i < out.n_steps; ++i) {
        const double xp = std::max(out.x[i], 0.0);
        out.x[i + 1] = out.x[i] + p.kappa * (p.theta - xp) * dt + p.xi * std::sqrt(xp) * out.dW[i];
      }
      break;
    }
    case SimScheme::EulerMaruyama: {
      const double lo_in = std::nextafter(m.domain().lower, kInf), hi_in = std::nextafter(m.domain().upper, -kInf);
      for (int i = 0; i < out.n_steps; ++i) {
        const Coefficients c = m.evaluate(out.x[i]);
        out.x[i + 1] = std::clamp(out.x[i] + c.b * dt + std::sqrt(std::max(c.A, 0.0)) * out.dW[i], lo_in, hi_in);
      }
      break;
    }
  }
  simulate_default(m, out);
}

/// Dollar amount in the asset as a function of (t, x).
using PolicyFn = std::function<double(double, double)>;

/// Bilinear lookup in a policy field, clamped to the grid outside it.
inline PolicyFn policy_from_field(const Field& f) {
  return [&f](double t, double x) { return f.interpolate(t, x); };
}

inline PolicyFn shifted_policy(PolicyFn base, double shift) {
  return [base = std::move(base), shift](double t, double x) { return base(t, x) + shift; };
}

enum class WealthKind { Unprotected, Protected };

/// Euler wealth under the policy. Unprotected: drift pi mu, loss pi at delta.
/// Protected: drift pi (mu - f), no loss at delta. Wealth is frozen after delta.
inline void replay_policy(const PolicyFn& policy, PathBundle& b,
                          WealthKind kind = WealthKind::Unprotected, const Field* rate = nullptr) {
  if (kind == WealthKind::Protected && rate == nullptr) throw ParameterError("protected replay needs a rate field");
  const int n = b.n_steps;
  const int last = b.survived() ? n : b.default_step + 1;
  b.wealth[0] = 0.0;
  for (int i = 0; i < last; ++i) {
    const double t = b.t(i);
    const Coefficients& c = b.coef[i];
    const double pi = b.pi[i] = policy(t, b.x[i]);
    const double drift = kind == WealthKind::Protected ? c.mu - rate->interpolate(t, b.x[i]) : c.mu;
    const double rc = std::sqrt(std::max(1.0 - c.rho * c.rho, 0.0));
    double dw = b.dW[i], dw0 = b.dW0[i], h = b.dt;
    const bool hit = i == b.default_step;
    if (hit) {
      // Brownian bridge: increment over the first fraction s of the step given the full-step increment
      const double s = b.default_fraction;
      const double sd = std::sqrt(s * (1.0 - s) * b.dt);
      dw = s * dw + sd * b.bridge_w;
      dw0 = s * dw0 + sd * b.bridge_w0;
      h = s * b.dt;
    }
    double w = b.wealth[i] + pi * (drift * h + c.sigma * (c.rho * dw + rc * dw0));
    if (hit && kind == WealthKind::Unprotected) w -= pi;
    b.wealth[i + 1] = w;
  }
  for (int i = last + 1; i <= n; ++i) b.wealth[i] = b.wealth[last];
}

/// Candidate dual density from a surface and the policy of the preceding replay: closed form
/// Z_T = exp(-alpha (W_T - G(t0, x0) + 1{delta > T} G(T, X_T))) and, independently,
/// the stochastic exponential with loadings A = -alpha (pi sigma rho + a G_x),
/// B = -alpha pi sigma sqrt(1 - rho^2), jump C = e^{alpha (pi + G)} - 1.
inline void simulate_dual_density(const Surface& G, PathBundle& b, double alpha) {
  const int n = b.n_steps;
  const double g0 = G.interpolate(b.t0, b.x[0]);
  const double wT = b.wealth[n];
  const double gT = b.survived() ? G.interpolate(b.t(n), b.x[n]) : 0.0;
  b.z_closed = std::exp(-alpha * (wT - g0 + gT));

  const int last = b.survived() ? n : b.default_step + 1;
  double log_z = 0.0;
  for (int i = 0; i < last; ++i) {
    const double t = b.t(i), x = b.x[i];
    const Coefficients& c = b.coef[i];
    const double pi = b.pi[i];
    const double g = G.values.interpolate(t, x);
    const double gx = G.gradient.interpolate(t, x);
    const double rc = std::sqrt(std::max(1.0 - c.rho * c.rho, 0.0));
    const double la = -alpha * (pi * c.sigma * c.rho + std::sqrt(std::max(c.A, 0.0)) * gx);
    const double lb = -alpha * pi * c.sigma * rc;
    const double jump = std::expm1(alpha * (pi + g));
    double dw = b.dW[i], dw0 = b.dW0[i], h = b.dt;
    const bool hit = i == b.default_step;
    if (hit) {
      const double s = b.default_fraction;
      const double sd = std::sqrt(s * (1.0 - s) * b.dt);
      dw = s * dw + sd * b.bridge_w;
      dw0 = s * dw0 + sd * b.bridge_w0;
      h = s * b.dt;
    }
    // exact exponential of the continuous part; compensator of the default jump is -C gamma dt
    log_z += la * dw + lb * dw0 - 0.5 * (la * la + lb * lb) * h - jump * c.gamma * h;
    if (hit) log_z += std::log1p(jump);
  }
  b.z_sde = std::exp(log_z);
}

/// Per-path terminal quantities consumed by the estimators.
struct TerminalSample {
  double wealth_T = 0.0;
  bool survived = true;
  double x_T = 0.0;
  double z_T = 1.0;      // closed-form density
  double z_sde_T = 1.0;  // stochastic-exponential density
  double survival_weight = 1.0;
};

inline TerminalSample terminal_sample(const PathBundle& b) {
  return {b.wealth.back(), b.survived(), b.x.back(), b.z_closed, b.z_sde, b.survival_weight()};
}

/// Runs fn(path_index, bundle) for every path after simulating factor and default.
/// Paths are split into fixed blocks; callers write results at the path index so the
/// outcome does not depend on the thread count.
template <class Fn>
void for_each_path(const ModelSpec& m, const SimConfig& cfg, Fn&& fn, unsigned threads = 0) {
  cfg.validate(m);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const std::int64_t n = cfg.n_paths;
  constexpr std::int64_t kBlock = 256;
  const std::int64_t n_blocks = (n + kBlock - 1) / kBlock;
  auto worker = [&](unsigned w) {
    PathBundle b;
    for (std::int64_t blk = w; blk < n_blocks; blk += threads) {
      const std::int64_t end = std::min(n, (blk + 1) * kBlock);
      for (std::int64_t p = blk * kBlock; p < end; ++p) {
        simulate_factor(m, cfg, static_cast<std::uint64_t>(p), b);
        simulate_default(m, b);
        fn(p, b);
      }
    }
  };
  if (threads == 1 || n_blocks == 1) {
    worker(0);
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker, w);
  for (auto& t : pool) t.join();
}

/// Simulates and replays one policy; the dual density is filled when G is given.
inline std::vector<TerminalSample> simulate_terminal(const ModelSpec& m, const SimConfig& cfg, const PolicyFn& policy,
                                                     const Preferences& pref, const Surface* G = nullptr,
                                                     WealthKind kind = WealthKind::Unprotected,
                                                     const Field* rate = nullptr) {
  std::vector<TerminalSample> out(static_cast<std::size_t>(cfg.n_paths));
  for_each_path(m, cfg, [&](std::int64_t p, PathBundle& b) {
    replay_policy(policy, b, kind, rate);
    if (G) simulate_dual_density(*G, b, pref.alpha);
    out[static_cast<std::size_t>(p)] = terminal_sample(b);
  });
  return out;
}

namespace detail {

struct Moments {
  double mean;
  double std_error;
};

template <class F>
Moments sample_moments(std::span<const TerminalSample> s, F&& value) {
  if (s.empty()) throw ParameterError("estimator: empty sample");
  const double n = static_cast<double>(s.size());
  double sum = 0.0;
  for (const auto& v : s) sum += value(v);
  const double mean = sum / n;
  double ss = 0.0;
  for (const auto& v : s) {
    const double d = value(v) - mean;
    ss += d * d;
  }
  if (!std::isfinite(mean) || !std::isfinite(ss)) throw DomainError("estimator: non-finite sample values");
  const double var = s.size() > 1 ? ss / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

inline double claim_at(const TerminalSample& v, const ClaimSpec& c) { return v.survived ? c.payoff(v.x_T) : 0.0; }

}  // namespace detail

/// -(1/alpha) log E[exp(-alpha (W_T + 1{delta > T} q phi(X_T)))]; delta-method standard error.
/// An all-identical sample gives std_error 0.
inline MCEstimate estimate_certainty_equivalent(std::span<const TerminalSample> s, const ClaimSpec& c,
                                                const Preferences& pref) {
  const double a = pref.alpha;
  const auto mo = detail::sample_moments(
      s, [&](const TerminalSample& v) { return std::exp(-a * (v.wealth_T + detail::claim_at(v, c))); });
  return {-std::log(mo.mean) / a, mo.std_error / (a * mo.mean), static_cast<std::int64_t>(s.size()),
          "certainty_equivalent"};
}

/// (1/alpha) E[Z log Z] + E[Z 1{delta > T} q phi(X_T)] at the closed-form density.
inline MCEstimate estimate_dual_value(std::span<const TerminalSample> s, const ClaimSpec& c, const Preferences& pref) {
  const double a = pref.alpha;
  const auto mo = detail::sample_moments(s, [&](const TerminalSample& v) {
    const double z = v.z_T;
    return (z > 0.0 ? z * std::log(z) / a : 0.0) + z * detail::claim_at(v, c);
  });
  return {mo.mean, mo.std_error, static_cast<std::int64_t>(s.size()), "dual_value"};
}

inline MCEstimate estimate_martingale_mass(std::span<const TerminalSample> s) {
  const auto mo = detail::sample_moments(s, [](const TerminalSample& v) { return v.z_T; });
  return {mo.mean, mo.std_error, static_cast<std::int64_t>(s.size()), "martingale_mass"};
}

/// Mean |Z_closed - Z_sde| at T.
inline MCEstimate estimate_density_gap(std::span<const TerminalSample> s) {
  const auto mo = detail::sample_moments(s, [](const TerminalSample& v) { return std::abs(v.z_T - v.z_sde_T); });
  return {mo.mean, mo.std_error, static_cast<std::int64_t>(s.size()), "density_gap"};
}

inline MCEstimate estimate_survival(std::span<const TerminalSample> s) {
  const auto mo = detail::sample_moments(s, [](const TerminalSample& v) { return v.survived ? 1.0 : 0.0; });
  return {mo.mean, mo.std_error, static_cast<std::int64_t>(s.size()), "survival"};
}

/// E[exp(-int gamma)] on the same paths.
inline MCEstimate estimate_survival_weight(std::span<const TerminalSample> s) {
  const auto mo = detail::sample_moments(s, [](const TerminalSample& v) { return v.survival_weight; });
  return {mo.mean, mo.std_error, static_cast<std::int64_t>(s.size()), "survival_weight"};
}

/// E[X_T].
inline MCEstimate estimate_terminal_mean(std::span<const TerminalSample> s) {
  const auto mo = detail::sample_moments(s, [](const TerminalSample& v) { return v.x_T; });
  return {mo.mean, mo.std_error, static_cast<std::int64_t>(s.size()), "terminal_mean"};
}

struct VerificationSettings {
  SimConfig sim;               // base configuration; seeds run sim.seed, sim.seed + 1, ...
  int n_seeds = 10;
  double perturbation = 0.5;   // constant added to the optimal policy in the sub-optimality probe
  bool step_halving = true;    // also replay on the grid with twice the step (same Brownian paths)
  double n_se = 3.0;
};

struct SeedVerification {
  std::uint64_t seed = 0;
  MCEstimate ce, dual, mass, ce_perturbed, gap;
  MCEstimate ce_coarse, gap_coarse;
  MCEstimate step_change;  // CE(fine) - CE(coarse), paired standard error
};

struct VerificationCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerificationResult {
  double g0 = 0.0;
  std::vector<SeedVerification> per_seed;
  MCEstimate ce, dual, mass, ce_perturbed, gap, ce_coarse, gap_coarse, step_change;
  std::vector<VerificationCheck> checks;

  bool all_passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const VerificationCheck& c) { return c.passed; });
  }
};

namespace detail {

inline VerificationCheck make_check(std::string name, bool ok, double lhs, double rhs, const char* rel) {
  return {std::move(name), ok, format_double(lhs) + ' ' + rel + ' ' + format_double(rhs)};
}

}  // namespace detail

/// Monte Carlo cross-check of a solved surface G with policy pi: certainty equivalent,
/// dual value, martingale mass, sub-optimality of pi + perturbation and the effect of
/// halving the time step, each pooled over seeds.
inline VerificationResult verify_surface(const ModelSpec& m, const ClaimSpec& claim, const Preferences& pref,
                                         const Surface& G, const Field& pi, const VerificationSettings& vs) {
  if (vs.n_seeds < 1) throw ParameterError("verification needs at least one seed");
  if (vs.step_halving && vs.sim.n_steps % 2 != 0) throw ParameterError("step halving needs an even step count");
  VerificationResult out;
  const SimConfig& base = vs.sim;
  out.g0 = G.interpolate(base.t0, base.x0);
  const PolicyFn policy = policy_from_field(pi);
  const PolicyFn perturbed = shifted_policy(policy, vs.perturbation);
  const double a = pref.alpha;
  const std::size_t n = static_cast<std::size_t>(base.n_paths);

  for (int k = 0; k < vs.n_seeds; ++k) {
    SimConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(k);
    SimConfig coarse_cfg = cfg;
    coarse_cfg.n_steps = cfg.n_steps / 2;
    std::vector<TerminalSample> fine(n), pert(n), coarse(vs.step_halving ? n : 0);
    for_each_path(m, cfg, [&](std::int64_t p, PathBundle& b) {
      thread_local PathBundle cb;  // one coarse buffer per worker
      const auto idx = static_cast<std::size_t>(p);
      replay_policy(perturbed, b);
      pert[idx] = terminal_sample(b);
      replay_policy(policy, b);
      simulate_dual_density(G, b, a);
      fine[idx] = terminal_sample(b);
      if (vs.step_halving) {
        coarsen(b, m, coarse_cfg, cb);
        replay_policy(policy, cb);
        simulate_dual_density(G, cb, a);
        coarse[idx] = terminal_sample(cb);
      }
    });

    SeedVerification sv;
    sv.seed = cfg.seed;
    sv.ce = estimate_certainty_equivalent(fine, claim, pref);
    sv.dual = estimate_dual_value(fine, claim, pref);
    sv.mass = estimate_martingale_mass(fine);
    sv.gap = estimate_density_gap(fine);
    sv.ce_perturbed = estimate_certainty_equivalent(pert, claim, pref);
    sv.ce_perturbed.label = "certainty_equivalent_perturbed";
    if (vs.step_halving) {
      sv.ce_coarse = estimate_certainty_equivalent(coarse, claim, pref);
      sv.ce_coarse.label = "certainty_equivalent_coarse";
      sv.gap_coarse = estimate_density_gap(coarse);
      sv.gap_coarse.label = "density_gap_coarse";
      // paired difference of exp(-alpha (W + claim)), mapped through the log with the delta method
      std::vector<TerminalSample> diff(n);
      double mf = 0.0, mc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double uf = std::exp(-a * (fine[i].wealth_T + detail::claim_at(fine[i], claim)));
        const double uc = std::exp(-a * (coarse[i].wealth_T + detail::claim_at(coarse[i], claim)));
        diff[i].wealth_T = uf - uc;
        mf += uf;
        mc += uc;
      }
      const auto mo = detail::sample_moments(diff, [](const TerminalSample& v) { return v.wealth_T; });
      mf /= static_cast<double>(n);
      mc /= static_cast<double>(n);
      sv.step_change = {sv.ce.mean - sv.ce_coarse.mean, mo.std_error / (a * 0.5 * (mf + mc)),
                        static_cast<std::int64_t>(n), "step_change"};
    }
    out.per_seed.push_back(std::move(sv));
  }

  auto pooled = [&](auto member, const char* label) {
    std::vector<MCEstimate> v;
    for (const auto& s : out.per_seed) v.push_back(s.*member);
    return pool(v, label);
  };
  out.ce = pooled(&SeedVerification::ce, "certainty_equivalent");
  out.dual = pooled(&SeedVerification::dual, "dual_value");
  out.mass = pooled(&SeedVerification::mass, "martingale_mass");
  out.gap = pooled(&SeedVerification::gap, "density_gap");
  out.ce_perturbed = pooled(&SeedVerification::ce_perturbed, "certainty_equivalent_perturbed");

  const double z = vs.n_se;
  out.checks.push_back(detail::make_check("ce_match", std::abs(out.ce.mean - out.g0) <= z * out.ce.std_error,
                                          std::abs(out.ce.mean - out.g0), z * out.ce.std_error, "<="));
  out.checks.push_back(detail::make_check("dual_match",
                                          std::abs(out.dual.mean - out.g0) <= z * out.dual.std_error,
                                          std::abs(out.dual.mean - out.g0), z * out.dual.std_error, "<="));
  out.checks.push_back(detail::make_check("martingale_mass", std::abs(out.mass.mean - 1.0) <= z * out.mass.std_error,
                                          std::abs(out.mass.mean - 1.0), z * out.mass.std_error, "<="));
  const double se_sand = std::hypot(out.ce.std_error, out.dual.std_error);
  out.checks.push_back(detail::make_check("duality_sandwich", out.ce.mean <= out.dual.mean + z * se_sand,
                                          out.ce.mean, out.dual.mean + z * se_sand, "<="));
  out.checks.push_back(detail::make_check(
      "suboptimality", out.ce_perturbed.mean <= out.g0 + z * out.ce_perturbed.std_error, out.ce_perturbed.mean,
      out.g0 + z * out.ce_perturbed.std_error, "<="));
  if (vs.step_halving) {
    out.ce_coarse = pooled(&SeedVerification::ce_coarse, "certainty_equivalent_coarse");
    out.gap_coarse = pooled(&SeedVerification::gap_coarse, "density_gap_coarse");
    out.step_change = pooled(&SeedVerification::step_change, "step_change");
    const double bias_fine = std::abs(out.ce.mean - out.g0);
    const double bias_coarse = std::abs(out.ce_coarse.mean - out.g0);
    out.checks.push_back(detail::make_check("step_halving", bias_fine <= bias_coarse + z * out.step_change.std_error,
                                            bias_fine, bias_coarse + z * out.step_change.std_error, "<="));
  }
  return out;
}

/// Monte Carlo estimate of E[exp(int_0^T h(X_u) du)] for a factor with drift `drift` and
/// diffusion sqrt(A); full truncation on the CIR kind. Paths whose integral passes
/// `cap` are counted as exploded.
struct ExpFunctionalEstimate {
  MCEstimate estimate;
  std::int64_t exploded = 0;
};

template <class Drift, class Integrand>
ExpFunctionalEstimate estimate_exp_functional(const ModelSpec& m, const SimConfig& cfg, Drift&& drift,
                                              Integrand&& h, double cap = 700.0) {
  cfg.validate(m);
  const std::int64_t n = cfg.n_paths;
  const double dt = cfg.dt(), sdt = std::sqrt(dt);
  const bool cir = m.kind() == ModelKind::CIR;
  const double lo_in = std::nextafter(m.domain().lower, kInf), hi_in = std::nextafter(m.domain().upper, -kInf);
  std::vector<double> vals(static_cast<std::size_t>(n));
  std::int64_t exploded = 0;
  for (std::int64_t p = 0; p < n; ++p) {
    auto eng = detail::path_engine(cfg.seed, static_cast<std::uint64_t>(p));
    boost::random::normal_distribution<double> nd;
    double x = cfg.x0, integral = 0.0, hp = h(x);
    bool blown = false;
    for (int i = 0; i < cfg.n_steps; ++i) {
      const double xe = cir ? std::max(x, 0.0) : x;
      const double diff = std::sqrt(std::max(m.evaluate(xe).A, 0.0));
      x = x + drift(xe) * dt + diff * sdt * nd(eng);
      if (!cir) x = std::clamp(x, lo_in, hi_in);
      const double hn = h(cir ? std::max(x, 0.0) : x);
      integral += 0.5 * (hp + hn) * dt;
      hp = hn;
      if (!(integral < cap) || !std::isfinite(x)) {
        blown = true;
        break;
      }
    }
    if (blown) ++exploded;
    vals[static_cast<std::size_t>(p)] = blown ? std::exp(cap) : std::exp(integral);
  }
  double sum = 0.0;
  for (double v : vals) sum += v;
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  const double se = n > 1 ? std::sqrt(ss / (static_cast<double>(n) - 1.0) / static_cast<double>(n)) : 0.0;
  return {{mean, se, n, "exp_functional"}, exploded};
}

}  // namespace defrisk
