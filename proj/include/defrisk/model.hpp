#pragma once

// Factor-process and asset coefficients on a one-dimensional state space E,
// the two closed-form examples (OU and CIR factor), claims and preferences.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

// pchip.hpp in some Boost releases uses isnan without including it
#include <boost/math/special_functions/fpclassify.hpp>
#include <boost/math/interpolators/pchip.hpp>

#include "defrisk/errors.hpp"

namespace defrisk {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Open interval (lower, upper); either end may be infinite.
struct Domain1D {
  double lower = -kInf;
  double upper = kInf;

  bool contains(double x) const noexcept { return x > lower && x < upper; }
  bool bounded() const noexcept { return std::isfinite(lower) && std::isfinite(upper); }
};

/// dX = -b X dt + dW; mu = sigma (mu1 + mu2 x); gamma(x) = sigma * gamma; constant sigma, rho.
struct OUParams {
  double b_mr = 0.0;
  double mu1 = 0.0;
  double mu2 = 0.0;
  double sigma = 1.0;
  double gamma = 1.0;
  double rho = 0.0;
};

/// dX = kappa (theta - X) dt + xi sqrt(X) dW on (0, inf), with
/// mu = s (mu1 + mu2 x), sigma(x) = s sqrt(x), gamma(x) = s (gamma1 + gamma2 x).
struct CIRParams {
  double kappa = 0.25;
  double theta = 0.06;
  double xi = 0.1;
  double mu1 = 0.0;
  double mu2 = 1.3608;
  double sigma = 1.2247;
  double gamma1 = 0.0;
  double gamma2 = 0.4145;
  double rho = -0.53;
};

/// Parameter set used by the numerical application: sigma^2 theta = 0.09,
/// sigma mu2 theta = 0.10, exp(-sigma gamma2 theta) = 0.97, alpha = 3.
inline CIRParams reference_cir_params() { return CIRParams{}; }
inline constexpr double kReferenceAlpha = 3.0;
inline constexpr double kReferenceHorizon = 1.0;

/// Tabulated coefficients for the Custom kind; interpolated with monotone cubic Hermite splines.
struct CoefficientTable {
  std::vector<double> x;
  std::vector<double> b;
  std::vector<double> A;
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> rho;
  std::vector<double> gamma;
};

enum class ModelKind { OU, CIR, Custom };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::OU: return "ou";
    case ModelKind::CIR: return "cir";
    case ModelKind::Custom: return "custom";
  }
  return "?";
}

/// Pointwise coefficient values. a = sqrt(A).
struct Coefficients {
  double b;
  double A;
  double mu;
  double sigma;
  double rho;
  double gamma;
};

namespace detail {

class TabulatedCoefficients {
 public:
  explicit TabulatedCoefficients(const CoefficientTable& t) : x_lo_(t.x.front()), x_hi_(t.x.back()) {
    auto make = [&](const std::vector<double>& y) {
      return std::make_shared<boost::math::interpolators::pchip<std::vector<double>>>(
          std::vector<double>(t.x), std::vector<double>(y));
    };
    b_ = make(t.b);
    A_ = make(t.A);
    mu_ = make(t.mu);
    sigma_ = make(t.sigma);
    rho_ = make(t.rho);
    gamma_ = make(t.gamma);
  }

  Coefficients operator()(double x) const {
    const double z = std::clamp(x, x_lo_, x_hi_);
    return {(*b_)(z), (*A_)(z), (*mu_)(z), (*sigma_)(z), (*rho_)(z), (*gamma_)(z)};
  }

 private:
  using Spline = boost::math::interpolators::pchip<std::vector<double>>;
  double x_lo_;
  double x_hi_;
  std::shared_ptr<const Spline> b_, A_, mu_, sigma_, rho_, gamma_;
};

}  // namespace detail

/// Immutable model: state space plus closed-form (OU, CIR) or tabulated coefficients.
class ModelSpec {
 public:
  ModelSpec(Domain1D domain, OUParams p) : domain_(domain), kind_(ModelKind::OU), params_(p) {}
  ModelSpec(Domain1D domain, CIRParams p) : domain_(domain), kind_(ModelKind::CIR), params_(p) {}
  ModelSpec(Domain1D domain, const CoefficientTable& t)
      : domain_(domain), kind_(ModelKind::Custom), params_(detail::TabulatedCoefficients(t)) {}

  const Domain1D& domain() const noexcept { return domain_; }
  ModelKind kind() const noexcept { return kind_; }

  const OUParams* ou_params() const noexcept { return std::get_if<OUParams>(&params_); }
  const CIRParams* cir_params() const noexcept { return std::get_if<CIRParams>(&params_); }

  /// Coefficients at x; x must lie in E.
  Coefficients at(double x) const {
    if (!domain_.contains(x)) {
      std::ostringstream os;
      os << "x = " << x << " outside the state space (" << domain_.lower << ", " << domain_.upper << ")";
      throw DomainError(os.str());
    }
    return evaluate(x);
  }

  /// Closed-form evaluation without the domain check (Monte Carlo paths may touch the boundary).
  Coefficients evaluate(double x) const {
    if (const auto* p = std::get_if<OUParams>(&params_)) {
      return {-p->b_mr * x, 1.0, p->sigma * (p->mu1 + p->mu2 * x), p->sigma, p->rho, p->sigma * p->gamma};
    }
    if (const auto* p = std::get_if<CIRParams>(&params_)) {
      const double xp = std::max(x, 0.0);
      return {p->kappa * (p->theta - x), p->xi * p->xi * xp, p->sigma * (p->mu1 + p->mu2 * xp),
              p->sigma * std::sqrt(xp), p->rho, p->sigma * (p->gamma1 + p->gamma2 * xp)};
    }
    const double z = std::clamp(x, std::nextafter(domain_.lower, kInf), std::nextafter(domain_.upper, -kInf));
    return std::get<detail::TabulatedCoefficients>(params_)(z);
  }

  double b(double x) const { return at(x).b; }
  double A(double x) const { return at(x).A; }
  double mu(double x) const { return at(x).mu; }
  double sigma(double x) const { return at(x).sigma; }
  double rho(double x) const { return at(x).rho; }
  double gamma(double x) const { return at(x).gamma; }

 private:
  Domain1D domain_;
  ModelKind kind_;
  std::variant<OUParams, CIRParams, detail::TabulatedCoefficients> params_;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ParameterError(what);
}

inline void validate_ou(const OUParams& p) {
  require(std::isfinite(p.b_mr) && std::isfinite(p.mu1) && std::isfinite(p.mu2), "OU parameters must be finite");
  require(p.sigma > 0.0, "OU: sigma must be positive, got " + std::to_string(p.sigma));
  require(p.gamma > 0.0, "OU: gamma must be positive, got " + std::to_string(p.gamma));
  require(std::abs(p.rho) <= 1.0, "OU: rho must lie in [-1, 1], got " + std::to_string(p.rho));
}

inline void validate_cir(const CIRParams& p) {
  require(p.kappa > 0.0, "CIR: kappa must be positive, got " + std::to_string(p.kappa));
  require(p.theta > 0.0, "CIR: theta must be positive, got " + std::to_string(p.theta));
  require(p.xi > 0.0, "CIR: xi must be positive, got " + std::to_string(p.xi));
  require(p.sigma > 0.0, "CIR: sigma must be positive, got " + std::to_string(p.sigma));
  require(p.gamma1 >= 0.0 && p.gamma2 >= 0.0 && p.gamma1 + p.gamma2 > 0.0,
          "CIR: gamma1, gamma2 must be non-negative and not both zero");
  require(std::abs(p.rho) <= 1.0, "CIR: rho must lie in [-1, 1], got " + std::to_string(p.rho));
  const double feller = p.kappa * p.theta - 0.5 * p.xi * p.xi;
  if (feller < 0.0) {
    std::ostringstream os;
    os << "CIR: Feller condition violated, kappa*theta - xi^2/2 = " << feller << " < 0";
    throw ParameterError(os.str());
  }
}

}  // namespace detail

inline ModelSpec make_ou_model(const OUParams& p) {
  detail::validate_ou(p);
  return ModelSpec(Domain1D{-kInf, kInf}, p);
}

inline ModelSpec make_cir_model(const CIRParams& p) {
  detail::validate_cir(p);
  return ModelSpec(Domain1D{0.0, kInf}, p);
}

inline ModelSpec make_custom_model(Domain1D domain, const CoefficientTable& t) {
  const std::size_t n = t.x.size();
  detail::require(domain.lower < domain.upper, "custom model: empty domain");
  detail::require(n >= 4, "custom model: table needs at least 4 nodes");
  for (const auto* col : {&t.b, &t.A, &t.mu, &t.sigma, &t.rho, &t.gamma})
    detail::require(col->size() == n, "custom model: ragged coefficient table");
  for (std::size_t i = 0; i < n; ++i) {
    detail::require(i == 0 || t.x[i] > t.x[i - 1], "custom model: x nodes must increase");
    detail::require(t.A[i] > 0.0 && t.sigma[i] > 0.0 && t.gamma[i] > 0.0,
                    "custom model: A, sigma, gamma must be positive at every node");
    detail::require(std::abs(t.rho[i]) <= 1.0, "custom model: |rho| must not exceed 1");
  }
  return ModelSpec(domain, t);
}

/// ell(x) = (mu - gamma) / sigma.
inline double market_price_of_risk(const ModelSpec& m, double x) {
  const Coefficients c = m.at(x);
  return (c.mu - c.gamma) / c.sigma;
}

/// Terminal claim q * phi(X_T) paid on survival. phi must be bounded; its bounds are carried explicitly.
struct ClaimSpec {
  std::function<double(double)> phi;
  double q = 1.0;
  double phi_inf = 0.0;
  double phi_sup = 0.0;
  std::string description = "zero";

  double phi_lower() const noexcept { return std::min(0.0, phi_inf); }
  double phi_upper() const noexcept { return std::max(0.0, phi_sup); }
  /// Lower bound of the certainty equivalent: min(0, q inf phi).
  double value_lower_bound() const noexcept { return std::min(0.0, q * phi_inf); }
  double payoff(double x) const { return q * phi(x); }

  static ClaimSpec zero() { return ClaimSpec{[](double) { return 0.0; }, 1.0, 0.0, 0.0, "zero"}; }

  static ClaimSpec constant(double c, double q) {
    detail::require(q > 0.0, "claim notional q must be positive");
    return ClaimSpec{[c](double) { return c; }, q, c, c, c == 1.0 ? "one" : "constant"};
  }

  /// Defaultable bond: phi = 1, notional q.
  static ClaimSpec bond(double q) { return constant(1.0, q); }

  static ClaimSpec tabulated(std::vector<double> x, std::vector<double> y, double q) {
    detail::require(q > 0.0, "claim notional q must be positive");
    detail::require(x.size() >= 4 && x.size() == y.size(), "claim table needs >= 4 (x, phi) pairs");
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const double inf = *lo, sup = *hi;
    const double x_lo = x.front(), x_hi = x.back();
    auto spline = std::make_shared<boost::math::interpolators::pchip<std::vector<double>>>(std::move(x), std::move(y));
    // pchip preserves monotonicity between nodes, so the node extrema bound phi
    return ClaimSpec{[spline, x_lo, x_hi](double s) { return (*spline)(std::clamp(s, x_lo, x_hi)); }, q, inf, sup,
                     "table"};
  }
};

struct Preferences {
  double alpha = kReferenceAlpha;
  double horizon_T = kReferenceHorizon;

  void validate() const {
    detail::require(alpha > 0.0, "risk aversion alpha must be positive");
    detail::require(horizon_T > 0.0, "horizon T must be positive");
  }
};

}  // namespace defrisk
