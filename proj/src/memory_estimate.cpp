#include "pqdt/memory_estimate.hpp"

#include <algorithm>
#include <string>

#include "pqdt/matrix.hpp"

namespace pqdt {
namespace {

struct Checked {
  std::uint64_t v;
  Checked operator*(Checked o) const {
    std::uint64_t r;
    if (__builtin_mul_overflow(v, o.v, &r)) throw ValidationError("memory estimate overflows 64 bits");
    return {r};
  }
  Checked operator+(Checked o) const {
    std::uint64_t r;
    if (__builtin_add_overflow(v, o.v, &r)) throw ValidationError("memory estimate overflows 64 bits");
    return {r};
  }
};

void require_positive(std::uint64_t M, std::uint64_t N, std::uint64_t D) {
  if (M == 0 || N == 0 || D == 0) {
    throw ValidationError("memory estimate needs positive dims, got M=" + std::to_string(M) +
                          " N=" + std::to_string(N) + " D=" + std::to_string(D));
  }
}

}  // namespace

std::uint64_t mem_storage(std::uint64_t M, std::uint64_t N, std::uint64_t D) {
  require_positive(M, N, D);
  Checked m{M}, n{N}, d{D}, eight{8};
  return (eight * (m * n + d * m + d * n)).v;
}

SolverMemory mem_solver(std::uint64_t M, std::uint64_t N, std::uint64_t D) {
  require_positive(M, N, D);
  Checked m{M}, n{N}, d{D}, two{2}, six{6}, eight{8};
  SolverMemory out;
  out.main_bytes = (eight * (two * n * d + six * n * m + m * d)).v;
  out.slack_unit_bytes = (eight * (m + n)).v;
  return out;
}

double max_hilbert_dim(std::uint64_t N, std::uint64_t D, std::uint64_t ranks_per_node,
                       std::uint64_t n_nodes, double mem_node_bytes) {
  if (N == 0) return 0.0;
  double per_rank = mem_node_bytes / (static_cast<double>(N) * 8.0) -
                    2.0 * static_cast<double>(D) * static_cast<double>(ranks_per_node);
  return std::max(0.0, static_cast<double>(n_nodes) / 6.0 * per_rank);
}

}  // namespace pqdt
