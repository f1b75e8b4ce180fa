#pragma once

#include <condition_variable>
#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "pqdt/matrix.hpp"

namespace pqdt {

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  bool empty() const noexcept { return begin == end; }
  friend bool operator==(const RowRange&, const RowRange&) = default;
};

/// Contiguous, near-equal blocks of Pi's rows, one per worker.
struct Partition {
  std::vector<RowRange> ranges;
  std::size_t n_workers() const noexcept { return ranges.size(); }
};

Partition partition_rows(std::size_t M, std::size_t n_workers);

/// The part of a banded F whose columns fall into one worker's row block of Pi.
struct FSlice {
  struct Segment {
    std::size_t d;          // probe row of F
    std::size_t col_begin;  // first column of F (= row of Pi) covered
    std::size_t col_end;
    const double* values;   // values[k] = F(d, col_begin + k)
  };
  RowRange columns;
  std::size_t D = 0;
  std::vector<Segment> segments;
};

FSlice slice_columns(const BandedMatrix& F, RowRange columns);

/// Local contribution to F * X from the rows of X in the slice:
/// partial(d, n) = sum_{i in slice} F(d, i) X(i, n). `partial` is D x N and overwritten.
void spmm_local(const FSlice& slice, const DenseMatrix& X, DenseMatrix& partial);
DenseMatrix spmm_local(const FSlice& slice, const DenseMatrix& X);

/// Binary combining tree: at level l, worker w += worker w + 2^l for w a multiple of 2^(l+1).
struct ReductionPlan {
  std::size_t n_workers = 1;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> levels;  // (dst, src)
  std::size_t depth() const noexcept { return levels.size(); }
};

ReductionPlan butterfly_plan(std::size_t n_workers);

/// Fixed-size pool; worker 0 is the calling thread. run() returns once every
/// worker has finished the task and rethrows the first worker exception.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t n_workers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const noexcept { return n_workers_; }
  void run(const std::function<void(std::size_t)>& task);

 private:
  void loop(std::size_t id);

  std::size_t n_workers_;
  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* task_ = nullptr;
  std::uint64_t generation_ = 0;
  std::size_t pending_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
};

/// Sums the partials into one D x N matrix. Deterministic mode applies the
/// plan's tree to every element, so the result depends only on the plan;
/// otherwise partials are folded in whatever order workers reach the lock.
DenseMatrix reduce_partials(std::span<const DenseMatrix> partials, const ReductionPlan& plan,
                            bool deterministic, WorkerPool* pool = nullptr);

enum class ReduceOp { sum, max };

/// Combines one value per worker. Sums follow the plan's tree when given, a left fold otherwise.
double allreduce_scalar(std::span<const double> values, ReduceOp op, const ReductionPlan* plan = nullptr);

struct EngineConfig {
  std::size_t n_workers = 1;
  bool deterministic = true;
};

/// Shared-memory stand-in for distributed ranks: Pi is split into row blocks,
/// each worker owns its block and the matching columns of F, and D x N
/// partial products are combined by reduce_partials.
class Engine {
 public:
  Engine(const BandedMatrix& F, EngineConfig config = {});

  std::size_t n_workers() const noexcept { return partition_.n_workers(); }
  bool deterministic() const noexcept { return config_.deterministic; }
  const Partition& partition() const noexcept { return partition_; }
  const ReductionPlan& plan() const noexcept { return plan_; }
  const BandedMatrix& F() const noexcept { return F_; }
  std::size_t M() const noexcept { return F_.cols(); }

  /// Runs fn(worker, rows) for every worker's block of Pi rows and waits.
  void for_each_block(const std::function<void(std::size_t, RowRange)>& fn) const;

  /// Per-worker partial values combined with allreduce_scalar.
  double reduce(const std::function<double(std::size_t, RowRange)>& fn, ReduceOp op = ReduceOp::sum) const;

  /// out (D x N) = F * X, X is M x N.
  void multiply(const DenseMatrix& X, DenseMatrix& out) const;
  /// out (M x N) = scale * F^T * R, R is D x N.
  void multiply_transposed(const DenseMatrix& R, double scale, DenseMatrix& out) const;

  double dot(const DenseMatrix& a, const DenseMatrix& b) const;

 private:
  const BandedMatrix& F_;
  EngineConfig config_;
  Partition partition_;
  ReductionPlan plan_;
  std::vector<FSlice> slices_;
  mutable std::vector<DenseMatrix> partials_;
  mutable std::vector<double> scalars_;
  mutable std::mutex fold_mu_;
  mutable WorkerPool pool_;
};

}  // namespace pqdt
