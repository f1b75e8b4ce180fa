#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "pqdt/engine.hpp"
#include "pqdt/matrix.hpp"

namespace pqdt {

struct SmoothingConfig {
  bool enabled = false;
  std::size_t divisor = 50;
  std::size_t i_min = 100;
};

struct SolverConfig {
  double gamma = 0.0;
  double beta = 0.75;
  double c_armijo = 0.1;
  double eps_active = 1e-8;
  double eps_stage1 = 1e-4;
  double eps_kkt = 1e-6;
  std::size_t cg_max_iters = 50;
  double cg_rel_tol = 1e-2;
  std::size_t max_newton_stage1 = 100;
  std::size_t max_newton_stage2 = 2000;
  std::size_t max_backoffs = 60;
  bool use_stage1 = true;
  SmoothingConfig smoothing;

  void validate() const;
};

/// Stage-2 metric: implicit coordinate m(i) per row and the active set I.
/// `active` is M x N, row-major; entries in column m(i) are never active.
struct Stage2Mask {
  std::vector<std::size_t> row_max;
  std::vector<std::uint8_t> active;
};

/// ||P - F Pi||^2 + gamma * sum_n sum_i (Pi(i,n) - Pi(i+1,n))^2
double objective(const DenseMatrix& Pi, const ProblemInstance& inst, double gamma, const Engine* engine = nullptr);
DenseMatrix gradient(const DenseMatrix& Pi, const ProblemInstance& inst, double gamma, const Engine* engine = nullptr);

/// Unmasked: H d with H = 2 F^T F + 2 gamma L acting columnwise. With a mask, d is read in the
/// reduced coordinates (entries in column m(i) ignored) and the result is the masked reduced product.
DenseMatrix hessian_product(const DenseMatrix& d, const ProblemInstance& inst, double gamma,
                            const Stage2Mask* mask = nullptr, const Engine* engine = nullptr);
DenseMatrix hessian_diag(const ProblemInstance& inst, double gamma);

struct PcgResult {
  DenseMatrix step;
  std::size_t iterations = 0;
  double rel_residual = 0.0;
};

/// Approximately solves D x = rhs with Jacobi-preconditioned CG. Rows whose Hessian diagonal is
/// zero (unprobed photon numbers with gamma = 0) are frozen: their step is 0.
PcgResult pcg_solve(const DenseMatrix& rhs, const ProblemInstance& inst, double gamma, const Stage2Mask* mask,
                    const SolverConfig& config, const Engine* engine = nullptr);

/// sqrt(1/(NM) sum (Pi (G + lambda))^2), lambda_i = max(0, -min_n G(i,n)).
double kkt_residual(const DenseMatrix& Pi, const DenseMatrix& G, const Engine* engine = nullptr);

/// Current iterate plus the cached residual O = F Pi - P and gradient.
class SolverState {
 public:
  SolverState(const ProblemInstance& inst, DenseMatrix Pi, double gamma, const Engine& engine);

  const ProblemInstance& instance() const noexcept { return inst_; }
  const Engine& engine() const noexcept { return engine_; }
  double gamma() const noexcept { return gamma_; }
  const DenseMatrix& Pi() const noexcept { return Pi_; }
  const DenseMatrix& residual() const noexcept { return O_; }
  const DenseMatrix& grad() const noexcept { return G_; }
  double objective() const noexcept { return f_; }
  double kkt() const { return kkt_residual(Pi_, G_, &engine_); }
  std::size_t frozen_rows() const noexcept { return frozen_rows_; }

  /// Objective at a trial point; leaves the state untouched.
  double evaluate(const DenseMatrix& trial) const;
  /// Makes `next` the current iterate and refreshes the cached residual and gradient.
  void accept(DenseMatrix next);

 private:
  void refresh();

  const ProblemInstance& inst_;
  const Engine& engine_;
  double gamma_;
  DenseMatrix Pi_, O_, G_;
  mutable DenseMatrix scratch_;
  double f_ = 0.0;
  std::size_t frozen_rows_ = 0;
};

enum class StepStatus { accepted, stationary, line_search_failure };

struct StepResult {
  StepStatus status = StepStatus::stationary;
  double alpha = 0.0;
  std::size_t cg_iterations = 0;
  double slope = 0.0;  // derivative of f along the search path at alpha = 0
};

/// Derivative of f along alpha -> P_S(Pi + alpha step) at alpha = 0, by a one-sided difference.
double projected_path_slope(const SolverState& state, const DenseMatrix& step);
bool stage_transition_check(double path_slope, double eps_stage1 = 1e-4);

/// Simplex-projected Newton step. `stationary` means the transition criterion holds (no step taken).
StepResult stage1_iterate(SolverState& state, const SolverConfig& config);
/// Bertsekas two-metric step with implicit row maxima. `stationary` means no descent direction remains.
StepResult stage2_iterate(SolverState& state, const SolverConfig& config);

Stage2Mask stage2_mask(const DenseMatrix& Pi, const DenseMatrix& G, double eps_active);

enum class SolverStatus { converged, iteration_cap, line_search_failure };
const char* to_string(SolverStatus s);

struct IterationRecord {
  int stage = 1;
  int pass = 0;  // 0: main solve, 1: stage-2 rerun after smoothing
  std::size_t k = 0;
  double objective = 0.0;
  double kkt = 0.0;
  double alpha = 0.0;
  std::size_t cg_iters = 0;
  double wall_ms = 0.0;
};

struct ConvergenceReport {
  std::vector<IterationRecord> iterations;
  SolverStatus status = SolverStatus::converged;
  std::vector<SolverStatus> pass_status;
  double stage1_ms = 0.0;
  double stage2_ms = 0.0;
  double smoothing_ms = 0.0;
  double final_objective = 0.0;
  double final_kkt = 0.0;
  std::size_t frozen_rows = 0;

  std::size_t newton_iterations(int stage, int pass = 0) const;
  void write_jsonl(std::ostream& os) const;
};

/// False for an empty report; otherwise stage-1 count <= 30 and stage-2 count <= 400 in the main pass.
bool newton_iteration_budget_check(const ConvergenceReport& report);

/// Called after every accepted step with the record and the new iterate.
using IterationObserver = std::function<void(const IterationRecord&, const DenseMatrix&)>;

struct SolveResult {
  PovmMatrix Pi;
  ConvergenceReport report;
};

/// Stage 1 until the transition criterion, then stage 2 to eps_kkt; with smoothing enabled the
/// result is smoothed and refined by a stage-2-only pass. Starts from the uniform POVM by default.
SolveResult solve_two_stage(const ProblemInstance& inst, const SolverConfig& config,
                            std::optional<DenseMatrix> initial = std::nullopt, EngineConfig engine = {},
                            const IterationObserver& observer = {});

/// Windowed average over [i - floor(i/divisor), i + floor(i/divisor)] (clipped) for rows i >= i_min;
/// smoothed rows are re-projected onto the simplex, rows below i_min are copied unchanged.
PovmMatrix smooth_povm(const DenseMatrix& Pi, std::size_t divisor, std::size_t i_min, const Engine* engine = nullptr);

}  // namespace pqdt
