#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "pqdt/matrix.hpp"

namespace pqdt::test {

inline DenseMatrix random_simplex_rows(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  DenseMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (double& v : m.row(r)) s += (v = e(rng));
    for (double& v : m.row(r)) v /= s;
  }
  return m;
}

/// Random banded D x M matrix with rows on the simplex; every column is hit by at least one band.
inline BandedMatrix random_banded(std::size_t D, std::size_t M, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<std::size_t> starts(D), lengths(D);
  std::vector<double> values;
  for (std::size_t d = 0; d < D; ++d) {
    std::size_t lo = d * M / D, hi = std::min(M, (d + 1) * M / D + 2);
    if (d + 1 == D) hi = M;
    lo = lo > 0 ? lo - 1 : 0;
    starts[d] = lo;
    lengths[d] = hi - lo;
    double s = 0.0;
    std::vector<double> row(hi - lo);
    for (double& v : row) s += (v = u(rng));
    for (double v : row) values.push_back(v / s);
  }
  return BandedMatrix(D, M, std::move(starts), std::move(lengths), std::move(values));
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a.data()[k] - b.data()[k]));
  return d;
}

inline double max_abs(const DenseMatrix& a) {
  double d = 0.0;
  for (double v : a.values()) d = std::max(d, std::abs(v));
  return d;
}

}  // namespace pqdt::test
