#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "defrisk/errors.hpp"

namespace defrisk {

/// Uniform (time x space) grid on [t_start, t_end] x [x_min, x_max].
struct GridSpec {
  double x_min = 0.0;
  double x_max = 1.0;
  int n_space = 200;
  int n_time = 200;
  double t_start = 0.0;
  double t_end = 1.0;

  double dx() const noexcept { return (x_max - x_min) / n_space; }
  double dt() const noexcept { return (t_end - t_start) / n_time; }
  double x(int j) const noexcept { return j == n_space ? x_max : x_min + j * dx(); }
  double t(int i) const noexcept { return i == n_time ? t_end : t_start + i * dt(); }
  std::size_t rows() const noexcept { return static_cast<std::size_t>(n_time) + 1; }
  std::size_t cols() const noexcept { return static_cast<std::size_t>(n_space) + 1; }
  std::size_t size() const noexcept { return rows() * cols(); }

  void validate() const {
    if (!(x_min < x_max)) throw ParameterError("grid: x_min must be below x_max");
    if (n_space < 16 || n_time < 16) throw ParameterError("grid: n_space and n_time must be at least 16");
    if (!(t_start >= 0.0 && t_start < t_end)) throw ParameterError("grid: need 0 <= t_start < t_end");
  }

  bool same_as(const GridSpec& o) const noexcept {
    return x_min == o.x_min && x_max == o.x_max && n_space == o.n_space && n_time == o.n_time &&
           t_start == o.t_start && t_end == o.t_end;
  }

  std::vector<double> x_nodes() const {
    std::vector<double> v(cols());
    for (int j = 0; j <= n_space; ++j) v[j] = x(j);
    return v;
  }
};

/// Grid-aligned scalar field, row i = time node t_i, column j = space node x_j.
struct Field {
  GridSpec grid;
  std::vector<double> data;

  Field() = default;
  explicit Field(const GridSpec& g, double fill = 0.0) : grid(g), data(g.size(), fill) {}

  double& operator()(int i, int j) noexcept { return data[static_cast<std::size_t>(i) * grid.cols() + j]; }
  double operator()(int i, int j) const noexcept { return data[static_cast<std::size_t>(i) * grid.cols() + j]; }

  std::span<double> row(int i) noexcept { return {data.data() + static_cast<std::size_t>(i) * grid.cols(), grid.cols()}; }
  std::span<const double> row(int i) const noexcept {
    return {data.data() + static_cast<std::size_t>(i) * grid.cols(), grid.cols()};
  }

  /// Bilinear interpolation; (t, x) outside the grid is clamped to the edge.
  double interpolate(double t, double x) const noexcept {
    const double ft = std::clamp((t - grid.t_start) / grid.dt(), 0.0, static_cast<double>(grid.n_time));
    const double fx = std::clamp((x - grid.x_min) / grid.dx(), 0.0, static_cast<double>(grid.n_space));
    const int i = std::min(static_cast<int>(ft), grid.n_time - 1);
    const int j = std::min(static_cast<int>(fx), grid.n_space - 1);
    const double wt = ft - i, wx = fx - j;
    const double a = (*this)(i, j) * (1.0 - wx) + (*this)(i, j + 1) * wx;
    const double b = (*this)(i + 1, j) * (1.0 - wx) + (*this)(i + 1, j + 1) * wx;
    return a * (1.0 - wt) + b * wt;
  }

  double max_abs() const noexcept {
    double m = 0.0;
    for (double v : data) m = std::max(m, std::abs(v));
    return m;
  }

  double min() const noexcept { return *std::min_element(data.begin(), data.end()); }
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b, const char* what) {
  if (!a.same_as(b)) throw GridMismatch(std::string(what) + ": grids differ");
}

}  // namespace defrisk
