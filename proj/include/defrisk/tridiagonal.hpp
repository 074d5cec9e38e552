#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace defrisk {

/// Tridiagonal system: lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i].
struct Tridiagonal {
  std::vector<double> lower, diag, upper;

  explicit Tridiagonal(std::size_t n = 0) : lower(n, 0.0), diag(n, 0.0), upper(n, 0.0) {}
  std::size_t size() const noexcept { return diag.size(); }

  /// Thomas algorithm; solves in place into rhs. Assumes the matrix needs no pivoting.
  void solve(std::span<double> rhs) const {
    const std::size_t n = size();
    scratch_.resize(n);
    double denom = diag[0];
    scratch_[0] = upper[0] / denom;
    rhs[0] /= denom;
    for (std::size_t i = 1; i < n; ++i) {
      denom = diag[i] - lower[i] * scratch_[i - 1];
      scratch_[i] = upper[i] / denom;
      rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= scratch_[i] * rhs[i + 1];
  }

 private:
  mutable std::vector<double> scratch_;
};

}  // namespace defrisk
