#pragma once

#include <cstdint>

namespace pqdt {

/// Bytes to hold Pi (M x N), F (D x M) and P (D x N) as doubles.
std::uint64_t mem_storage(std::uint64_t M, std::uint64_t N, std::uint64_t D);

struct SolverMemory {
  /// (2ND + 6NM + MD) * 8 bytes: inputs, iterates, gradient, residual and CG work matrices.
  std::uint64_t main_bytes = 0;
  /// One unit of the O(M) + O(N) per-row/per-column bookkeeping, i.e. (M + N) * 8 bytes.
  /// The true constant is implementation dependent and reported separately.
  std::uint64_t slack_unit_bytes = 0;
};

SolverMemory mem_solver(std::uint64_t M, std::uint64_t N, std::uint64_t D);

/// Largest Hilbert-space dimension that fits the distributed solver:
/// (nodes / 6) * (mem_node / (8 N) - 2 D ranks_per_node), clamped at 0.
double max_hilbert_dim(std::uint64_t N, std::uint64_t D, std::uint64_t ranks_per_node,
                       std::uint64_t n_nodes, double mem_node_bytes);

}  // namespace pqdt
