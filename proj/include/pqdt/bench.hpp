#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pqdt {

struct BenchOptions {
  std::size_t M = 100000;
  std::size_t N = 26;
  std::size_t D = 101;
  std::vector<std::size_t> workers{1};
  std::size_t reps = 1;
  std::uint64_t seed = 1;
  bool deterministic = true;
  double gamma = 1e-5;
  std::uint64_t memory_budget_bytes = 4ull << 30;
};

struct BenchRow {
  std::string op;  // objective | gradient | hessian_product | scalar_product
  std::size_t M = 0, N = 0, D = 0, workers = 0, rep = 0;
  double wall_ms = 0.0;
};

struct BenchResult {
  std::vector<BenchRow> rows;
  /// Largest elementwise difference of any kernel output between worker counts.
  double max_worker_deviation = 0.0;
};

/// Times objective, gradient, Hessian-vector product and scalar product kernels on a random
/// feasible Pi and a quadratic-probe F fitted to M. Refuses to allocate beyond the memory budget.
BenchResult bench_ops(const BenchOptions& options);

double median_ms(const std::vector<BenchRow>& rows, const std::string& op, std::size_t M, std::size_t workers);

void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& os);

}  // namespace pqdt
