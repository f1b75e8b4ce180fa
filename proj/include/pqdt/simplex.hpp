#pragma once

#include <span>
#include <vector>

#include "pqdt/matrix.hpp"

namespace pqdt {

class Engine;

/// Euclidean projection onto {y : y >= 0, sum(y) = 1} (Condat's algorithm,
/// expected O(n)). Writes into `out`, which may alias `x`.
void project_simplex(std::span<const double> x, std::span<double> out);
std::vector<double> project_simplex(std::span<const double> x);

/// O(n log n) sort-and-threshold projection, kept as the reference for the above.
std::vector<double> project_simplex_reference(std::span<const double> x);

/// Projects every row of an M x N matrix onto the simplex (in place).
/// Rows are distributed over the engine's workers when one is given.
void project_rows_inplace(DenseMatrix& m, const Engine* engine = nullptr);
PovmMatrix project_rows(DenseMatrix m, const Engine* engine = nullptr);

/// Elementwise max(0, x).
DenseMatrix clamp_nonneg(DenseMatrix m);

}  // namespace pqdt
