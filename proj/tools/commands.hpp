#pragma once

#include <cstdint>
#include <iosfwd>

#include "run_config.hpp"

namespace pqdt::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitGate = 1,
  kExitInvalid = 2,
  kExitIterationCap = 3,
  kExitLineSearch = 4,
};

struct MemEstimateArgs {
  std::uint64_t M = 0, N = 0, D = 0;
  std::uint64_t nodes = 1;
  std::uint64_t ranks = 1;
  double mem_node_bytes = 0.0;
};

/// Refuses with the estimate when the solver working set of (M, N, D) exceeds the budget.
void memory_guard(const RunConfig& c, std::size_t D);

// Each command returns its exit code; ValidationError and IoError propagate to the caller.
// Diagnostics go to `log`, data meant for piping to `out`.
int cmd_simulate(const RunConfig& c, std::ostream& log);
int cmd_reconstruct(const RunConfig& c, std::ostream& log);
int cmd_fidelity(const RunConfig& c, std::ostream& out, std::ostream& log);
int cmd_wigner(const RunConfig& c, std::ostream& out, std::ostream& log);
int cmd_mem_estimate(const MemEstimateArgs& a, std::ostream& out);
int cmd_bench_ops(const RunConfig& c, std::ostream& log);

/// CLI entry point shared by the executable and the tests.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace pqdt::cli
