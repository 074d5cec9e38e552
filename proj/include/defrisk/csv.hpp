#pragma once

// Locale-independent CSV output.

#include <charconv>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "defrisk/grid.hpp"

namespace defrisk {

/// Shortest text that reads back to v exactly, independent of the global locale.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

inline void write_config_echo(std::ostream& os, const ConfigEcho& echo) {
  for (const auto& [k, v] : echo) os << "# " << k << " = " << v << '\n';
}

/// Header row "t,<x_0>,...,<x_n>" then one row per time node.
inline void write_field_csv(std::ostream& os, const Field& f, const ConfigEcho& echo = {}) {
  write_config_echo(os, echo);
  const GridSpec& g = f.grid;
  os << 't';
  for (int j = 0; j <= g.n_space; ++j) os << ',' << format_double(g.x(j));
  os << '\n';
  for (int i = 0; i <= g.n_time; ++i) {
    os << format_double(g.t(i));
    for (double v : f.row(i)) os << ',' << format_double(v);
    os << '\n';
  }
}

/// Column table: header names then rows of equal length.
inline void write_columns_csv(std::ostream& os, const std::vector<std::string>& names,
                              const std::vector<std::vector<double>>& cols, const ConfigEcho& echo = {}) {
  write_config_echo(os, echo);
  for (std::size_t c = 0; c < names.size(); ++c) os << (c ? "," : "") << names[c];
  os << '\n';
  const std::size_t n = cols.empty() ? 0 : cols.front().size();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << format_double(cols[c][r]);
    os << '\n';
  }
}

}  // namespace defrisk
