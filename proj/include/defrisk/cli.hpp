#pragma once

// Command-line driver: reads a sectioned key-value config, runs solves,
// pricing, assumption reports and Monte Carlo verification, writes CSV.
//
// Exit codes: 0 success, 1 check or verification failure (also solver
// failure), 2 configuration error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "defrisk/assumptions.hpp"
#include "defrisk/csv.hpp"
#include "defrisk/errors.hpp"
#include "defrisk/hjb_solver.hpp"
#include "defrisk/localization.hpp"
#include "defrisk/model.hpp"
#include "defrisk/montecarlo.hpp"
#include "defrisk/pricing.hpp"
#include "defrisk/truncation.hpp"

namespace defrisk::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;

/// Raised for anything wrong with the configuration or the command line.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------- config

struct RunConfig {
  // [model]
  std::string kind = "cir";
  CIRParams cir = reference_cir_params();
  OUParams ou;
  std::string custom_table;
  double custom_lower = 0.0, custom_upper = 1.0;
  // [claim]
  std::string phi = "zero";
  std::string phi_table;
  std::vector<double> q_list{1.0};
  // [preferences]
  Preferences pref;
  // [grid]
  int n_space = 400;
  int n_time = 400;
  std::optional<double> x_min, x_max;
  std::string scheme = "cn";
  std::string boundary = "linear";
  double newton_tol = 1e-10;
  int newton_max_iter = 30;
  // [mc]
  std::int64_t paths = 100000;
  int steps = 1000;
  std::uint64_t seed = 1;
  int seeds = 10;
  std::optional<double> x0;
  double perturbation = 0.5;
  // [local]
  std::vector<int> local_n{4, 8, 16};
  double transition = 0.1;
  // [output]
  std::string out_dir = "out";
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not a finite number: '" + v + "'");
  }
}

inline long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": not an integer: '" + v + "'");
  }
}

using Keys = std::map<std::string, std::set<std::string>>;

inline const Keys& known_keys() {
  static const Keys k{
      {"model",
       {"kind", "kappa", "theta", "xi", "mu1", "mu2", "sigma", "gamma1", "gamma2", "rho", "b", "gamma", "table",
        "lower", "upper"}},
      {"claim", {"phi", "q", "table"}},
      {"preferences", {"alpha", "T"}},
      {"grid", {"n_space", "n_time", "x_min", "x_max", "scheme", "boundary", "newton_tol", "newton_max_iter"}},
      {"mc", {"paths", "steps", "seed", "seeds", "x0", "perturbation"}},
      {"local", {"n", "transition"}},
      {"output", {"dir"}},
  };
  return k;
}

/// Reads numeric columns of a CSV file with a header row; '#' lines are comments.
inline std::map<std::string, std::vector<double>> read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open table '" + path + "'");
  std::string line;
  std::vector<std::string> names;
  std::map<std::string, std::vector<double>> cols;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      cell.erase(0, cell.find_first_not_of(" \t\r"));
      cell.erase(cell.find_last_not_of(" \t\r") + 1);
      cells.push_back(cell);
    }
    if (names.empty()) {
      names = cells;
      continue;
    }
    if (cells.size() != names.size()) throw ConfigError("ragged row in table '" + path + "'");
    for (std::size_t i = 0; i < cells.size(); ++i) cols[names[i]].push_back(to_double(path + ":" + names[i], cells[i]));
  }
  if (names.empty()) throw ConfigError("table '" + path + "' has no header");
  return cols;
}

inline const std::vector<double>& column(const std::map<std::string, std::vector<double>>& t, const std::string& name,
                                         const std::string& path) {
  const auto it = t.find(name);
  if (it == t.end()) throw ConfigError("table '" + path + "' lacks column '" + name + "'");
  return it->second;
}

}  // namespace detail

/// Parses the config text. Unknown sections or keys and a missing [model] section are errors.
inline RunConfig parse_config(std::istream& in, const std::string& origin = "config") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  const auto& known = detail::known_keys();
  for (const auto& [sec, body] : tree) {
    const auto it = known.find(sec);
    if (it == known.end()) throw ConfigError(origin + ": unknown section [" + sec + "]");
    if (body.empty() && !body.data().empty()) throw ConfigError(origin + ": key '" + sec + "' outside a section");
    for (const auto& [key, val] : body)
      if (!it->second.count(key)) throw ConfigError(origin + ": unknown key '" + key + "' in [" + sec + "]");
  }
  if (!tree.get_child_optional("model")) throw ConfigError(origin + ": missing [model] section");

  RunConfig c;
  auto str = [&](const std::string& path) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '/'))) return *v;
    return std::nullopt;
  };
  auto num = [&](const std::string& path, double& dst) {
    if (auto v = str(path)) dst = detail::to_double(path, *v);
  };
  auto opt_num = [&](const std::string& path, std::optional<double>& dst) {
    if (auto v = str(path)) dst = detail::to_double(path, *v);
  };
  auto integer = [&](const std::string& path, auto& dst) {
    if (auto v = str(path)) dst = static_cast<std::remove_reference_t<decltype(dst)>>(detail::to_int(path, *v));
  };

  c.kind = str("model/kind").value_or("");
  if (c.kind == "cir") {
    num("model/kappa", c.cir.kappa);
    num("model/theta", c.cir.theta);
    num("model/xi", c.cir.xi);
    num("model/mu1", c.cir.mu1);
    num("model/mu2", c.cir.mu2);
    num("model/sigma", c.cir.sigma);
    num("model/gamma1", c.cir.gamma1);
    num("model/gamma2", c.cir.gamma2);
    num("model/rho", c.cir.rho);
    for (const char* k : {"b", "gamma", "table", "lower", "upper"})
      if (str(std::string("model/") + k)) throw ConfigError(origin + ": key '" + k + "' does not apply to kind = cir");
  } else if (c.kind == "ou") {
    num("model/b", c.ou.b_mr);
    num("model/mu1", c.ou.mu1);
    num("model/mu2", c.ou.mu2);
    num("model/sigma", c.ou.sigma);
    num("model/gamma", c.ou.gamma);
    num("model/rho", c.ou.rho);
    for (const char* k : {"kappa", "theta", "xi", "gamma1", "gamma2", "table", "lower", "upper"})
      if (str(std::string("model/") + k)) throw ConfigError(origin + ": key '" + k + "' does not apply to kind = ou");
  } else if (c.kind == "custom") {
    c.custom_table = str("model/table").value_or("");
    if (c.custom_table.empty()) throw ConfigError(origin + ": kind = custom needs model.table");
    if (!str("model/lower") || !str("model/upper")) throw ConfigError(origin + ": kind = custom needs lower and upper");
    num("model/lower", c.custom_lower);
    num("model/upper", c.custom_upper);
  } else {
    throw ConfigError(origin + ": model.kind must be cir, ou or custom");
  }

  c.phi = str("claim/phi").value_or("zero");
  if (c.phi != "zero" && c.phi != "one" && c.phi != "table")
    throw ConfigError(origin + ": claim.phi must be zero, one or table");
  c.phi_table = str("claim/table").value_or("");
  if (c.phi == "table" && c.phi_table.empty()) throw ConfigError(origin + ": claim.phi = table needs claim.table");
  if (auto q = str("claim/q")) {
    c.q_list.clear();
    for (const auto& s : detail::split_list(*q)) c.q_list.push_back(detail::to_double("claim/q", s));
    if (c.q_list.empty()) throw ConfigError(origin + ": claim.q is empty");
    for (double v : c.q_list)
      if (!(v > 0.0)) throw ConfigError(origin + ": claim.q entries must be positive");
  }

  num("preferences/alpha", c.pref.alpha);
  num("preferences/T", c.pref.horizon_T);
  if (!(c.pref.alpha > 0.0)) throw ConfigError(origin + ": preferences.alpha must be positive");
  if (!(c.pref.horizon_T > 0.0)) throw ConfigError(origin + ": preferences.T must be positive");

  integer("grid/n_space", c.n_space);
  integer("grid/n_time", c.n_time);
  opt_num("grid/x_min", c.x_min);
  opt_num("grid/x_max", c.x_max);
  c.scheme = str("grid/scheme").value_or(c.scheme);
  c.boundary = str("grid/boundary").value_or(c.boundary);
  num("grid/newton_tol", c.newton_tol);
  integer("grid/newton_max_iter", c.newton_max_iter);
  if (c.scheme != "cn" && c.scheme != "be") throw ConfigError(origin + ": grid.scheme must be cn or be");
  if (c.boundary != "linear" && c.boundary != "neumann" && c.boundary != "dirichlet")
    throw ConfigError(origin + ": grid.boundary must be linear, neumann or dirichlet");
  if (c.n_space < 16 || c.n_time < 16) throw ConfigError(origin + ": grid sizes must be at least 16");

  integer("mc/paths", c.paths);
  integer("mc/steps", c.steps);
  integer("mc/seed", c.seed);
  integer("mc/seeds", c.seeds);
  opt_num("mc/x0", c.x0);
  num("mc/perturbation", c.perturbation);
  if (c.paths < 1 || c.steps < 2 || c.seeds < 1) throw ConfigError(origin + ": mc.paths, mc.steps, mc.seeds too small");

  if (auto n = str("local/n")) {
    c.local_n.clear();
    for (const auto& s : detail::split_list(*n)) c.local_n.push_back(static_cast<int>(detail::to_int("local/n", s)));
    for (int v : c.local_n)
      if (v < 2) throw ConfigError(origin + ": local.n entries must be >= 2");
  }
  num("local/transition", c.transition);
  c.out_dir = str("output/dir").value_or(c.out_dir);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in, path);
}

/// Every resolved setting, in a fixed order, for output headers.
inline ConfigEcho echo(const RunConfig& c, const std::string& command) {
  ConfigEcho e;
  auto add = [&](const std::string& k, const std::string& v) { e.emplace_back(k, v); };
  auto d = [](double v) { return format_double(v); };
  auto list = [&](const auto& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + d(static_cast<double>(v[i]));
    return s;
  };
  add("command", command);
  add("model.kind", c.kind);
  if (c.kind == "cir") {
    add("model.kappa", d(c.cir.kappa));
    add("model.theta", d(c.cir.theta));
    add("model.xi", d(c.cir.xi));
    add("model.mu1", d(c.cir.mu1));
    add("model.mu2", d(c.cir.mu2));
    add("model.sigma", d(c.cir.sigma));
    add("model.gamma1", d(c.cir.gamma1));
    add("model.gamma2", d(c.cir.gamma2));
    add("model.rho", d(c.cir.rho));
  } else if (c.kind == "ou") {
    add("model.b", d(c.ou.b_mr));
    add("model.mu1", d(c.ou.mu1));
    add("model.mu2", d(c.ou.mu2));
    add("model.sigma", d(c.ou.sigma));
    add("model.gamma", d(c.ou.gamma));
    add("model.rho", d(c.ou.rho));
  } else {
    add("model.table", c.custom_table);
    add("model.lower", d(c.custom_lower));
    add("model.upper", d(c.custom_upper));
  }
  add("claim.phi", c.phi);
  if (c.phi == "table") add("claim.table", c.phi_table);
  add("claim.q", list(c.q_list));
  add("preferences.alpha", d(c.pref.alpha));
  add("preferences.T", d(c.pref.horizon_T));
  add("grid.n_space", std::to_string(c.n_space));
  add("grid.n_time", std::to_string(c.n_time));
  add("grid.x_min", c.x_min ? d(*c.x_min) : "auto");
  add("grid.x_max", c.x_max ? d(*c.x_max) : "auto");
  add("grid.scheme", c.scheme);
  add("grid.boundary", c.boundary);
  add("grid.newton_tol", d(c.newton_tol));
  add("grid.newton_max_iter", std::to_string(c.newton_max_iter));
  add("mc.paths", std::to_string(c.paths));
  add("mc.steps", std::to_string(c.steps));
  add("mc.seed", std::to_string(c.seed));
  add("mc.seeds", std::to_string(c.seeds));
  add("mc.x0", c.x0 ? d(*c.x0) : "auto");
  add("mc.perturbation", d(c.perturbation));
  add("local.n", list(c.local_n));
  add("local.transition", d(c.transition));
  add("output.dir", c.out_dir);
  return e;
}

// ---------------------------------------------------------------- builders

/// Model from the config; validate = false keeps parameter violations for the assumption report.
inline ModelSpec build_model(const RunConfig& c, bool validate = true) {
  if (c.kind == "cir") return validate ? make_cir_model(c.cir) : ModelSpec(Domain1D{0.0, kInf}, c.cir);
  if (c.kind == "ou") return validate ? make_ou_model(c.ou) : ModelSpec(Domain1D{-kInf, kInf}, c.ou);
  const auto t = detail::read_table(c.custom_table);
  CoefficientTable tab;
  tab.x = detail::column(t, "x", c.custom_table);
  tab.b = detail::column(t, "b", c.custom_table);
  tab.A = detail::column(t, "A", c.custom_table);
  tab.mu = detail::column(t, "mu", c.custom_table);
  tab.sigma = detail::column(t, "sigma", c.custom_table);
  tab.rho = detail::column(t, "rho", c.custom_table);
  tab.gamma = detail::column(t, "gamma", c.custom_table);
  return make_custom_model(Domain1D{c.custom_lower, c.custom_upper}, tab);
}

/// Claim with notional q.
inline ClaimSpec build_claim(const RunConfig& c, double q) {
  if (c.phi == "zero") return ClaimSpec::zero();
  if (c.phi == "one") return ClaimSpec::bond(q);
  const auto t = detail::read_table(c.phi_table);
  return ClaimSpec::tabulated(detail::column(t, "x", c.phi_table), detail::column(t, "phi", c.phi_table), q);
}

inline SolverOptions build_options(const RunConfig& c) {
  SolverOptions o;
  o.newton_tol = c.newton_tol;
  o.newton_max_iter = c.newton_max_iter;
  o.scheme = c.scheme == "be" ? TimeScheme::BackwardEuler : TimeScheme::CrankNicolson;
  o.boundary = c.boundary == "neumann"     ? BoundaryCondition::NeumannZero
               : c.boundary == "dirichlet" ? BoundaryCondition::DirichletZero
                                           : BoundaryCondition::LinearExtrapolation;
  return o;
}

inline GridSpec build_grid(const RunConfig& c, const ModelSpec& m, int n_space, int n_time) {
  const Interval tr = default_truncation(m, c.pref.horizon_T);
  return GridSpec{c.x_min.value_or(tr.lo), c.x_max.value_or(tr.hi), n_space, n_time, 0.0, c.pref.horizon_T};
}

inline GridSpec build_grid(const RunConfig& c, const ModelSpec& m) { return build_grid(c, m, c.n_space, c.n_time); }

/// Starting point of the simulations: mc.x0, else the long-run mean (CIR), 0 (OU) or the domain midpoint.
inline double start_point(const RunConfig& c, const ModelSpec& m) {
  if (c.x0) return *c.x0;
  if (const auto* p = m.cir_params()) return p->theta;
  if (m.ou_params()) return 0.0;
  return 0.5 * (m.domain().lower + m.domain().upper);
}

// ---------------------------------------------------------------- commands

struct Context {
  RunConfig cfg;
  std::string command;
  std::filesystem::path out;
  std::string mode = "full";
  double perturb_g = 0.0;
  std::ostream* log = &std::cout;
  std::ostream* err = &std::cerr;

  std::ofstream open(const std::string& name) const {
    std::filesystem::create_directories(out);
    std::ofstream f(out / name);
    if (!f) throw ConfigError("cannot write '" + (out / name).string() + "'");
    return f;
  }
  ConfigEcho header() const {
    ConfigEcho e = echo(cfg, command);
    e.emplace_back("mode", mode);
    if (perturb_g != 0.0) e.emplace_back("debug.perturb_g", format_double(perturb_g));
    return e;
  }
};

namespace detail {

/// Index range of grid nodes inside [lo, hi].
inline std::pair<int, int> node_range(const GridSpec& g, double lo, double hi) {
  int a = 0, b = g.n_space;
  while (a <= g.n_space && g.x(a) < lo) ++a;
  while (b >= 0 && g.x(b) > hi) --b;
  return {a, b};
}

inline void write_residual_summary(std::ostream& os, const ConfigEcho& h, const Surface& s, const ResidualField& r) {
  write_config_echo(os, h);
  os << "mode,max_residual_interior,max_residual_all,min_value,newton_iterations,max_iterations_per_step,"
        "line_search_halvings,roundoff_exits\n";
  os << s.mode_label() << ',' << format_double(r.max_interior) << ',' << format_double(r.max_all) << ','
     << format_double(s.values.min()) << ',' << s.stats.newton_iterations << ',' << s.stats.max_iterations_per_step
     << ',' << s.stats.line_search_halvings << ',' << s.stats.roundoff_exits << '\n';
}

}  // namespace detail

inline int cmd_solve(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const ModelSpec m = build_model(c);
  const ClaimSpec claim = build_claim(c, c.q_list.front());
  const SolverOptions opt = build_options(c);
  const auto h = ctx.header();

  if (ctx.mode == "full" || ctx.mode == "protected") {
    const GridSpec g = build_grid(c, m);
    Surface s = solve_full(m, ctx.mode == "protected" ? ClaimSpec::zero() : claim, c.pref, g, opt);
    if (ctx.mode == "protected") {
      const Field f = insurance_rate(s, m, c.pref);
      s = solve_protected(m, c.pref, f, g, opt);
      auto rf = ctx.open("rate.csv");
      write_field_csv(rf, f, h);
    }
    {
      auto o = ctx.open("G_" + std::string(ctx.mode) + ".csv");
      write_field_csv(o, s.values, h);
    }
    const ResidualField r = residual(s, m, c.pref);
    {
      auto o = ctx.open("residual.csv");
      detail::write_residual_summary(o, h, s, r);
    }
    if (ctx.mode == "full") {
      // three refinement levels n/4, n/2, n; small grids refine upward to n, 2n, 4n instead
      const bool up = c.n_space / 4 < 16 || c.n_time / 4 < 16;
      const int bx = up ? c.n_space : c.n_space / 4, bt = up ? c.n_time : c.n_time / 4;
      std::vector<Surface> lv;
      for (int k : {1, 2, 4}) lv.push_back(solve_full(m, claim, c.pref, build_grid(c, m, bx * k, bt * k), opt));
      auto o = ctx.open("convergence.csv");
      write_config_echo(o, h);
      o << "level,n_space,n_time,G0_at_x0,max_diff_to_next,order\n";
      const GridSpec& gc = lv[0].grid();
      const double x0 = start_point(c, m);
      std::vector<double> diff(2, 0.0);
      for (int l = 0; l < 2; ++l)
        for (int j = 0; j <= gc.n_space; ++j)
          diff[l] = std::max(diff[l], std::abs(lv[l].interpolate(0.0, gc.x(j)) - lv[l + 1].interpolate(0.0, gc.x(j))));
      for (int l = 0; l < 3; ++l) {
        const double order = l == 1 && diff[1] > 0.0 ? std::log2(diff[0] / diff[1]) : std::nan("");
        o << l << ',' << lv[l].grid().n_space << ',' << lv[l].grid().n_time << ','
          << format_double(lv[l].interpolate(0.0, x0)) << ',' << (l < 2 ? format_double(diff[l]) : "") << ','
          << (l == 1 ? format_double(order) : "") << '\n';
      }
    }
    *ctx.log << "solve(" << s.mode_label() << "): min G = " << s.values.min()
             << ", max residual = " << r.max_all << "\n";
    return kExitOk;
  }

  // local modes: local:N or the [local] n list
  std::vector<int> ns = c.local_n;
  if (ctx.mode.rfind("local:", 0) == 0) ns = {static_cast<int>(detail::to_int("--mode", ctx.mode.substr(6)))};
  std::sort(ns.begin(), ns.end());
  std::vector<Surface> surfaces;
  for (int n : ns) {
    const auto loc = build_localization(m, n, c.transition);
    const GridSpec g = local_grid(loc, c.n_space, c.n_time, c.pref.horizon_T);
    Surface s = solve_local(m, claim, c.pref, loc, g, opt);
    auto o = ctx.open("G_local_" + std::to_string(n) + ".csv");
    write_field_csv(o, s.values, h);
    *ctx.log << "solve(" << s.mode_label() << "): min G = " << s.values.min() << "\n";
    surfaces.push_back(std::move(s));
  }
  if (surfaces.size() > 1) {
    // sup gaps at t = 0 on the inner set of the smallest level
    const Domain1D ref = exhaustion_set(m.domain(), ns.front() - 1);
    auto o = ctx.open("local_gaps.csv");
    write_config_echo(o, h);
    o << "n_a,n_b,sup_gap\n";
    for (std::size_t k = 0; k + 1 < surfaces.size(); ++k) {
      double gap = 0.0;
      for (int i = 0; i <= 1000; ++i) {
        const double x = ref.lower + (ref.upper - ref.lower) * i / 1000.0;
        gap = std::max(gap, std::abs(surfaces[k].interpolate(0.0, x) - surfaces[k + 1].interpolate(0.0, x)));
      }
      o << ns[k] << ',' << ns[k + 1] << ',' << format_double(gap) << '\n';
    }
  }
  return kExitOk;
}

inline int cmd_price_bond(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const ModelSpec m = build_model(c);
  const SolverOptions opt = build_options(c);
  const GridSpec g = build_grid(c, m);
  const Surface g0 = solve_full(m, ClaimSpec::zero(), c.pref, g, opt);
  const Interval band = reporting_band(m, c.pref.horizon_T);
  const auto [a, b] = detail::node_range(g, band.lo, band.hi);
  std::vector<std::string> names{"x"};
  std::vector<std::vector<double>> cols(1);
  for (int j = a; j <= b; ++j) cols[0].push_back(g.x(j));
  ClaimSpec base = build_claim(c, 1.0);
  for (double q : c.q_list) {
    ClaimSpec claim = base;
    claim.q = q;
    const Surface gq = solve_full(m, claim, c.pref, g, opt);
    const Field p = indifference_price(gq, g0, q);
    names.push_back("p_q" + format_double(q));
    std::vector<double> col;
    for (int j = a; j <= b; ++j) col.push_back(p(0, j));
    cols.push_back(std::move(col));
  }
  auto o = ctx.open("price_bond.csv");
  write_columns_csv(o, names, cols, ctx.header());
  *ctx.log << "price-bond: " << c.q_list.size() << " curves over [" << band.lo << ", " << band.hi << "]\n";
  return kExitOk;
}

inline int cmd_price_insurance(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const ModelSpec m = build_model(c);
  const GridSpec g = build_grid(c, m);
  const Surface G = solve_full(m, ClaimSpec::zero(), c.pref, g, build_options(c));
  const Policy pi = optimal_policy(G, m, c.pref);
  const Field f = insurance_rate(G, m, c.pref);
  const InsuranceBounds bd = insurance_bounds(G, pi, m, c.pref);
  const Interval band = reporting_band(m, c.pref.horizon_T);
  const auto [a, b] = detail::node_range(g, band.lo, band.hi);
  std::vector<std::vector<double>> cols(5);
  for (int j = a; j <= b; ++j) {
    cols[0].push_back(g.x(j));
    cols[1].push_back(f(0, j));
    cols[2].push_back(bd.upper(0, j));
    cols[3].push_back(m.at(g.x(j)).gamma);
    cols[4].push_back(pi(0, j));
  }
  const auto h = ctx.header();
  {
    auto o = ctx.open("insurance.csv");
    write_columns_csv(o, {"x", "f", "upper_bound", "gamma", "pi"}, cols, h);
  }
  const auto curve = short_horizon_curve();
  std::vector<std::vector<double>> fc(3);
  for (const auto& r : curve) {
    fc[0].push_back(r.alpha_pi);
    fc[1].push_back(r.f_over_sigma2);
    fc[2].push_back(r.upper_bound);
  }
  {
    auto o = ctx.open("short_horizon.csv");
    write_columns_csv(o, {"alpha_pi", "f_over_sigma2", "upper_bound"}, fc, h);
  }
  *ctx.log << "price-insurance: " << cols[0].size() << " band nodes, zero of short-horizon curve at "
           << insurance_zero_threshold(2.0 / 3.0) << "\n";
  return kExitOk;
}

inline int cmd_verify(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const ModelSpec m = build_model(c);
  const ClaimSpec claim = build_claim(c, c.q_list.front());
  const GridSpec g = build_grid(c, m);
  Surface G = solve_full(m, claim, c.pref, g, build_options(c));
  const Policy pi = optimal_policy(G, m, c.pref);
  if (ctx.perturb_g != 0.0)
    for (double& v : G.values.data) v += ctx.perturb_g;

  VerificationSettings vs;
  vs.sim.n_paths = c.paths;
  vs.sim.n_steps = c.steps + c.steps % 2;
  vs.sim.seed = c.seed;
  vs.sim.x0 = start_point(c, m);
  vs.sim.t_end = c.pref.horizon_T;
  vs.sim.scheme = default_scheme(m);
  vs.n_seeds = c.seeds;
  vs.perturbation = c.perturbation;
  const VerificationResult r = verify_surface(m, claim, c.pref, G, pi, vs);

  const auto h = ctx.header();
  {
    auto o = ctx.open("verify.csv");
    write_config_echo(o, h);
    write_estimate_csv_header(o);
    for (const auto& s : r.per_seed)
      for (const MCEstimate* e : {&s.ce, &s.dual, &s.mass, &s.ce_perturbed, &s.gap, &s.ce_coarse, &s.gap_coarse, &s.step_change})
        write_estimate_csv_row(o, *e, s.seed);
    for (const MCEstimate* e : {&r.ce, &r.dual, &r.mass, &r.ce_perturbed, &r.gap, &r.ce_coarse, &r.gap_coarse, &r.step_change})
      write_estimate_csv_row(o, MCEstimate{e->mean, e->std_error, e->n_paths, "pooled_" + e->label}, c.seed);
  }
  {
    auto o = ctx.open("verify_report.txt");
    write_config_echo(o, h);
    o << "G(0, x0) = " << format_double(r.g0) << '\n';
    for (const auto& ch : r.checks) o << (ch.passed ? "PASS " : "FAIL ") << ch.name << ": " << ch.detail << '\n';
  }
  for (const auto& ch : r.checks) {
    *ctx.log << (ch.passed ? "PASS " : "FAIL ") << ch.name << ": " << ch.detail << "\n";
    if (!ch.passed) *ctx.err << "verification check failed: " << ch.name << "\n";
  }
  return r.all_passed() ? kExitOk : kExitCheckFailed;
}

inline int cmd_check_assumptions(Context& ctx) {
  const RunConfig& c = ctx.cfg;
  const ModelSpec m = build_model(c, false);
  const ClaimSpec claim = build_claim(c, c.q_list.front());
  const AssumptionReport rep = check_assumptions(m, claim, c.pref, 2000, 200, c.seed);
  const auto h = ctx.header();
  {
    auto o = ctx.open("assumptions.txt");
    write_config_echo(o, h);
    rep.write_text(o);
  }
  {
    auto o = ctx.open("assumptions.csv");
    write_config_echo(o, h);
    rep.write_csv(o);
  }
  rep.write_text(*ctx.log);
  if (!rep.passes()) {
    for (const auto& e : rep.entries)
      if (e.gating && e.status == Status::Fails) *ctx.err << "assumption fails: " << e.id << ": " << e.witness << "\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- entry point

/// Parses argv and runs one subcommand. Output streams are injectable for in-process use.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Indifference pricing and default insurance under a factor model with default"};
  app.require_subcommand(1);
  std::string config_path, out_dir, mode = "full", grid;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> paths;
  double perturb_g = 0.0;
  app.add_option("--config", config_path, "config file")->required();
  app.add_option("--out", out_dir, "output directory (overrides output.dir)");
  app.add_option("--seed", seed, "base Monte Carlo seed");
  app.add_option("--paths", paths, "Monte Carlo paths per seed");
  app.add_option("--grid", grid, "grid size NX,NT");
  app.add_option("--mode", mode, "full | local:N | local | protected");
  app.add_option("--perturb-g", perturb_g, "debug: add a constant to G before the dual checks")->group("");
  for (const char* name : {"solve", "price-bond", "price-insurance", "verify", "check-assumptions"})
    app.add_subcommand(name)->fallthrough();  // options may follow the subcommand

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  Context ctx;
  ctx.command = command;
  ctx.log = &out;
  ctx.err = &err;
  ctx.perturb_g = perturb_g;
  try {
    ctx.cfg = load_config(config_path);
    if (seed) ctx.cfg.seed = *seed;
    if (paths) {
      if (*paths < 1) throw ConfigError("--paths must be positive");
      ctx.cfg.paths = *paths;
    }
    if (!grid.empty()) {
      const auto parts = detail::split_list(grid);
      if (parts.size() != 2) throw ConfigError("--grid expects NX,NT");
      ctx.cfg.n_space = static_cast<int>(detail::to_int("--grid", parts[0]));
      ctx.cfg.n_time = static_cast<int>(detail::to_int("--grid", parts[1]));
      if (ctx.cfg.n_space < 16 || ctx.cfg.n_time < 16) throw ConfigError("--grid sizes must be at least 16");
    }
    if (!(mode == "full" || mode == "protected" || mode == "local" || mode.rfind("local:", 0) == 0))
      throw ConfigError("--mode must be full, protected, local or local:N");
    if (mode.rfind("local:", 0) == 0 && detail::to_int("--mode", mode.substr(6)) < 2)
      throw ConfigError("--mode local:N needs N >= 2");
    ctx.mode = mode;
    ctx.out = out_dir.empty() ? std::filesystem::path(ctx.cfg.out_dir) : std::filesystem::path(out_dir);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (command == "solve") return cmd_solve(ctx);
    if (command == "price-bond") return cmd_price_bond(ctx);
    if (command == "price-insurance") return cmd_price_insurance(ctx);
    if (command == "verify") return cmd_verify(ctx);
    return cmd_check_assumptions(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParameterError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << command << " failed: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

}  // namespace defrisk::cli
