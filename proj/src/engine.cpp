#include "pqdt/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pqdt {

Partition partition_rows(std::size_t M, std::size_t n_workers) {
  if (n_workers < 1) throw ValidationError("partition needs at least one worker");
  Partition p;
  p.ranges.reserve(n_workers);
  const std::size_t base = M / n_workers, extra = M % n_workers;
  std::size_t start = 0;
  for (std::size_t w = 0; w < n_workers; ++w) {
    std::size_t len = base + (w < extra ? 1 : 0);
    p.ranges.push_back({start, start + len});
    start += len;
  }
  return p;
}

FSlice slice_columns(const BandedMatrix& F, RowRange columns) {
  FSlice slice;
  slice.columns = columns;
  slice.D = F.rows();
  if (columns.empty()) return slice;
  for (std::size_t d = 0; d < F.rows(); ++d) {
    std::size_t lo = std::max(F.band_start(d), columns.begin);
    std::size_t hi = std::min(F.band_end(d), columns.end);
    if (lo >= hi) continue;
    slice.segments.push_back({d, lo, hi, F.band(d).data() + (lo - F.band_start(d))});
  }
  return slice;
}

void spmm_local(const FSlice& slice, const DenseMatrix& X, DenseMatrix& partial) {
  const std::size_t N = X.cols();
  if (partial.rows() != slice.D || partial.cols() != N) partial = DenseMatrix(slice.D, N);
  partial.fill(0.0);
  for (const auto& seg : slice.segments) {
    double* dst = partial.row(seg.d).data();
    for (std::size_t i = seg.col_begin; i < seg.col_end; ++i) {
      const double f = seg.values[i - seg.col_begin];
      const double* src = X.row(i).data();
      for (std::size_t n = 0; n < N; ++n) dst[n] += f * src[n];
    }
  }
}

DenseMatrix spmm_local(const FSlice& slice, const DenseMatrix& X) {
  DenseMatrix partial(slice.D, X.cols());
  spmm_local(slice, X, partial);
  return partial;
}

ReductionPlan butterfly_plan(std::size_t n_workers) {
  if (n_workers < 1) throw ValidationError("reduction plan needs at least one worker");
  ReductionPlan plan;
  plan.n_workers = n_workers;
  for (std::size_t stride = 1; stride < n_workers; stride *= 2) {
    std::vector<std::pair<std::size_t, std::size_t>> level;
    for (std::size_t w = 0; w + stride < n_workers; w += 2 * stride) level.emplace_back(w, w + stride);
    plan.levels.push_back(std::move(level));
  }
  return plan;
}

WorkerPool::WorkerPool(std::size_t n_workers) : n_workers_(std::max<std::size_t>(1, n_workers)) {
  for (std::size_t id = 1; id < n_workers_; ++id) threads_.emplace_back([this, id] { loop(id); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::loop(std::size_t id) {
  std::uint64_t seen = 0;
  for (;;) {
    const std::function<void(std::size_t)>* task;
    {
      std::unique_lock lock(mu_);
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      task = task_;
    }
    std::exception_ptr err;
    try {
      (*task)(id);
    } catch (...) {
      err = std::current_exception();
    }
    std::lock_guard lock(mu_);
    if (err && !error_) error_ = err;
    if (--pending_ == 0) done_cv_.notify_one();
  }
}

void WorkerPool::run(const std::function<void(std::size_t)>& task) {
  if (n_workers_ == 1) {
    task(0);
    return;
  }
  {
    std::lock_guard lock(mu_);
    task_ = &task;
    pending_ = n_workers_ - 1;
    error_ = nullptr;
    ++generation_;
  }
  start_cv_.notify_all();
  std::exception_ptr err;
  try {
    task(0);
  } catch (...) {
    err = std::current_exception();
  }
  std::unique_lock lock(mu_);
  done_cv_.wait(lock, [&] { return pending_ == 0; });
  if (!err) err = error_;
  task_ = nullptr;
  if (err) std::rethrow_exception(err);
}

namespace {

// Applies the tree to the element range [lo, hi) of every buffer, result lands in out.
void tree_reduce_range(std::span<const DenseMatrix> partials, const ReductionPlan& plan,
                       std::vector<double>& scratch, std::size_t lo, std::size_t hi, double* out) {
  const std::size_t W = partials.size();
  const std::size_t len = hi - lo;
  scratch.resize(W * len);
  for (std::size_t w = 0; w < W; ++w) {
    std::copy_n(partials[w].data() + lo, len, scratch.data() + w * len);
  }
  for (const auto& level : plan.levels) {
    for (auto [dst, src] : level) {
      double* a = scratch.data() + dst * len;
      const double* b = scratch.data() + src * len;
      for (std::size_t k = 0; k < len; ++k) a[k] += b[k];
    }
  }
  std::copy_n(scratch.data(), len, out + lo);
}

}  // namespace

DenseMatrix reduce_partials(std::span<const DenseMatrix> partials, const ReductionPlan& plan,
                            bool deterministic, WorkerPool* pool) {
  if (partials.empty()) throw ValidationError("reduce_partials: no partials");
  if (plan.n_workers != partials.size()) {
    throw ValidationError("reduce_partials: plan is for " + std::to_string(plan.n_workers) +
                          " workers, got " + std::to_string(partials.size()) + " partials");
  }
  for (const auto& p : partials) {
    if (!p.same_shape(partials[0])) throw ValidationError("reduce_partials: partial shapes differ");
  }
  DenseMatrix out(partials[0].rows(), partials[0].cols());
  const std::size_t total = out.size();
  const std::size_t n_tasks = pool ? pool->size() : 1;

  if (deterministic) {
    auto task = [&](std::size_t t) {
      thread_local std::vector<double> scratch;
      std::size_t lo = total * t / n_tasks, hi = total * (t + 1) / n_tasks;
      if (lo < hi) tree_reduce_range(partials, plan, scratch, lo, hi, out.data());
    };
    if (pool) {
      pool->run(task);
    } else {
      task(0);
    }
    return out;
  }

  std::mutex mu;
  auto fold = [&](std::size_t t) {
    for (std::size_t w = t; w < partials.size(); w += n_tasks) {
      std::lock_guard lock(mu);
      for (std::size_t k = 0; k < total; ++k) out.data()[k] += partials[w].data()[k];
    }
  };
  if (pool) {
    pool->run(fold);
  } else {
    fold(0);
  }
  return out;
}

double allreduce_scalar(std::span<const double> values, ReduceOp op, const ReductionPlan* plan) {
  if (values.empty()) throw ValidationError("allreduce of zero values");
  if (op == ReduceOp::max) return *std::max_element(values.begin(), values.end());
  if (plan) {
    if (plan->n_workers != values.size()) throw ValidationError("allreduce: plan size mismatch");
    std::vector<double> buf(values.begin(), values.end());
    for (const auto& level : plan->levels) {
      for (auto [dst, src] : level) buf[dst] += buf[src];
    }
    return buf[0];
  }
  double acc = 0.0;
  for (double v : values) acc += v;
  return acc;
}

Engine::Engine(const BandedMatrix& F, EngineConfig config)
    : F_(F),
      config_(config),
      partition_(partition_rows(F.cols(), std::max<std::size_t>(1, config.n_workers))),
      plan_(butterfly_plan(partition_.n_workers())),
      partials_(partition_.n_workers()),
      scalars_(partition_.n_workers()),
      pool_(partition_.n_workers()) {
  slices_.reserve(n_workers());
  for (const auto& r : partition_.ranges) slices_.push_back(slice_columns(F_, r));
}

void Engine::for_each_block(const std::function<void(std::size_t, RowRange)>& fn) const {
  pool_.run([&](std::size_t w) { fn(w, partition_.ranges[w]); });
}

double Engine::reduce(const std::function<double(std::size_t, RowRange)>& fn, ReduceOp op) const {
  pool_.run([&](std::size_t w) { scalars_[w] = fn(w, partition_.ranges[w]); });
  return allreduce_scalar(scalars_, op, config_.deterministic ? &plan_ : nullptr);
}

void Engine::multiply(const DenseMatrix& X, DenseMatrix& out) const {
  if (X.rows() != M()) throw ValidationError("engine: operand has wrong row count");
  const std::size_t N = X.cols();
  if (out.rows() != F_.rows() || out.cols() != N) out = DenseMatrix(F_.rows(), N);
  if (n_workers() == 1) {
    spmm_local(slices_[0], X, out);
    return;
  }
  if (config_.deterministic) {
    pool_.run([&](std::size_t w) { spmm_local(slices_[w], X, partials_[w]); });
    const std::size_t total = out.size();
    pool_.run([&](std::size_t t) {
      thread_local std::vector<double> scratch;
      std::size_t lo = total * t / n_workers(), hi = total * (t + 1) / n_workers();
      if (lo < hi) tree_reduce_range(partials_, plan_, scratch, lo, hi, out.data());
    });
    return;
  }
  out.fill(0.0);
  pool_.run([&](std::size_t w) {
    spmm_local(slices_[w], X, partials_[w]);
    std::lock_guard lock(fold_mu_);
    const double* src = partials_[w].data();
    double* dst = out.data();
    for (std::size_t k = 0; k < out.size(); ++k) dst[k] += src[k];
  });
}

void Engine::multiply_transposed(const DenseMatrix& R, double scale, DenseMatrix& out) const {
  if (R.rows() != F_.rows()) throw ValidationError("engine: residual has wrong row count");
  const std::size_t N = R.cols();
  if (out.rows() != M() || out.cols() != N) out = DenseMatrix(M(), N);
  pool_.run([&](std::size_t w) {
    const RowRange rows = partition_.ranges[w];
    std::fill(out.data() + rows.begin * N, out.data() + rows.end * N, 0.0);
    for (const auto& seg : slices_[w].segments) {
      const double* r = R.row(seg.d).data();
      for (std::size_t i = seg.col_begin; i < seg.col_end; ++i) {
        const double f = scale * seg.values[i - seg.col_begin];
        double* dst = out.row(i).data();
        for (std::size_t n = 0; n < N; ++n) dst[n] += f * r[n];
      }
    }
  });
}

double Engine::dot(const DenseMatrix& a, const DenseMatrix& b) const {
  const std::size_t N = a.cols();
  return reduce([&](std::size_t, RowRange rows) {
    double acc = 0.0;
    const double* pa = a.data() + rows.begin * N;
    const double* pb = b.data() + rows.begin * N;
    for (std::size_t k = 0; k < rows.size() * N; ++k) acc += pa[k] * pb[k];
    return acc;
  });
}

}  // namespace pqdt
