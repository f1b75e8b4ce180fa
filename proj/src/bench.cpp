#include "pqdt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <random>

#include "pqdt/detector_model.hpp"
#include "pqdt/engine.hpp"
#include "pqdt/memory_estimate.hpp"
#include "pqdt/solver.hpp"

namespace pqdt {
namespace {

DenseMatrix random_rows_on_simplex(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DenseMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (double& v : m.row(r)) sum += (v = u(rng));
    for (double& v : m.row(r)) v /= sum;
  }
  return m;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a.data()[k] - b.data()[k]));
  return d;
}

}  // namespace

BenchResult bench_ops(const BenchOptions& o) {
  if (o.M == 0 || o.N == 0 || o.D == 0 || o.reps == 0 || o.workers.empty()) {
    throw ValidationError("bench-ops needs positive M, N, D, reps and at least one worker count");
  }
  const SolverMemory need = mem_solver(o.M, o.N, o.D);
  if (need.main_bytes > o.memory_budget_bytes) {
    throw ValidationError("bench-ops needs " + std::to_string(need.main_bytes) + " bytes, budget is " +
                          std::to_string(o.memory_budget_bytes));
  }

  const double scale = fit_quadratic_scale(o.D, o.M, kDefaultTailMassCutoff);
  std::mt19937_64 rng(o.seed);
  ProblemInstance inst(build_probe_matrix(probe_schedule_quadratic(o.D, scale), o.M),
                       random_rows_on_simplex(o.D, o.N, rng));
  const DenseMatrix Pi = random_rows_on_simplex(o.M, o.N, rng);
  DenseMatrix dir(o.M, o.N);
  std::normal_distribution<double> g;
  for (double& v : dir.values()) v = g(rng);

  using Clock = std::chrono::steady_clock;
  BenchResult res;
  struct Outputs {
    double f, dot;
    DenseMatrix G, H;
  };
  std::optional<Outputs> first;
  for (std::size_t w : o.workers) {
    Engine engine(inst.F, {w, o.deterministic});
    for (std::size_t rep = 0; rep < o.reps; ++rep) {
      auto time = [&](const char* op, auto&& fn) {
        const auto t0 = Clock::now();
        auto out = fn();
        res.rows.push_back({op, o.M, o.N, o.D, w, rep, std::chrono::duration<double, std::milli>(Clock::now() - t0).count()});
        return out;
      };
      Outputs out;
      out.f = time("objective", [&] { return objective(Pi, inst, o.gamma, &engine); });
      out.G = time("gradient", [&] { return gradient(Pi, inst, o.gamma, &engine); });
      out.H = time("hessian_product", [&] { return hessian_product(dir, inst, o.gamma, nullptr, &engine); });
      out.dot = time("scalar_product", [&] { return engine.dot(Pi, out.G); });
      if (!first) {
        first = std::move(out);
        continue;
      }
      res.max_worker_deviation = std::max({res.max_worker_deviation, std::abs(out.f - first->f),
                                           std::abs(out.dot - first->dot), max_abs_diff(out.G, first->G),
                                           max_abs_diff(out.H, first->H)});
    }
  }
  return res;
}

double median_ms(const std::vector<BenchRow>& rows, const std::string& op, std::size_t M, std::size_t workers) {
  std::vector<double> t;
  for (const auto& r : rows) {
    if (r.op == op && r.M == M && r.workers == workers) t.push_back(r.wall_ms);
  }
  if (t.empty()) throw ValidationError("no timings for " + op);
  std::sort(t.begin(), t.end());
  return t.size() % 2 ? t[t.size() / 2] : 0.5 * (t[t.size() / 2 - 1] + t[t.size() / 2]);
}

void write_bench_csv(const std::vector<BenchRow>& rows, std::ostream& os) {
  os << "op,M,N,D,workers,rep,wall_ms\n";
  for (const auto& r : rows) {
    os << r.op << ',' << r.M << ',' << r.N << ',' << r.D << ',' << r.workers << ',' << r.rep << ',' << r.wall_ms
       << '\n';
  }
}

}  // namespace pqdt
