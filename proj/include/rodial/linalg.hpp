#pragma once

// Just enough dense linear algebra for the kernel solvers: an in-place
// Cholesky factorization and the matching triangular solves, on flat
// row-major double arrays.

#include <cmath>
#include <cstddef>
#include <vector>

#include "rodial/common.hpp"

namespace rodial {

struct CholeskyInfo {
  bool ok = true;
  std::size_t pivot_index = 0;  // first non-positive pivot when !ok
  double pivot_value = 0.0;
};

// Factors a symmetric positive definite matrix in place: on success the
// lower triangle holds L with A = L*L^T. The upper triangle is left stale.
inline CholeskyInfo cholesky_factor(std::vector<double>& a, std::size_t n) {
  CholeskyInfo info;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0) || !std::isfinite(d)) {
      info.ok = false;
      info.pivot_index = j;
      info.pivot_value = d;
      return info;
    }
    double ljj = std::sqrt(d);
    a[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / ljj;
    }
  }
  return info;
}

// Solves L*L^T x = b given the factor from cholesky_factor; x overwrites b.
inline void cholesky_solve(const std::vector<double>& l, std::size_t n,
                           std::vector<double>& b) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i * n + k] * b[k];
    b[i] = s / l[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l[k * n + ii] * b[k];
    b[ii] = s / l[ii * n + ii];
  }
}

}  // namespace rodial
