#include "pqdt/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "pqdt/simplex.hpp"

namespace pqdt {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

template <class Fn>
auto with_engine(const ProblemInstance& inst, const Engine* engine, Fn&& fn) {
  if (engine) {
    if (engine->M() != inst.M() || engine->F().rows() != inst.D()) {
      throw ValidationError("engine was built for a different probe matrix");
    }
    return fn(*engine);
  }
  Engine local(inst.F);
  return fn(local);
}

void check_shape(const DenseMatrix& X, const ProblemInstance& inst, const char* what) {
  if (X.rows() != inst.M() || X.cols() != inst.N()) {
    throw ValidationError(std::string(what) + " must be " + std::to_string(inst.M()) + " x " +
                          std::to_string(inst.N()) + ", got " + std::to_string(X.rows()) + " x " +
                          std::to_string(X.cols()));
  }
}

// 2 sum_d F(d,i)^2 + regulariser diagonal, one value per row of Pi.
std::vector<double> row_hessian_diag(const ProblemInstance& inst, double gamma) {
  const std::size_t M = inst.M();
  std::vector<double> h(M, 0.0);
  const BandedMatrix& F = inst.F;
  for (std::size_t d = 0; d < F.rows(); ++d) {
    auto band = F.band(d);
    for (std::size_t k = 0; k < band.size(); ++k) h[F.band_start(d) + k] += band[k] * band[k];
  }
  for (std::size_t i = 0; i < M; ++i) {
    h[i] *= 2.0;
    if (M > 1) h[i] += (i == 0 || i == M - 1) ? 2.0 * gamma : 4.0 * gamma;
  }
  return h;
}

// out += scale * L x, L the second-difference stencil with free ends (rows of L sum to zero).
void add_laplacian(const DenseMatrix& x, double scale, DenseMatrix& out, const Engine& engine) {
  const std::size_t M = x.rows(), N = x.cols();
  if (M < 2 || scale == 0.0) return;
  engine.for_each_block([&](std::size_t, RowRange rows) {
    for (std::size_t i = rows.begin; i < rows.end; ++i) {
      const double* xi = x.row(i).data();
      double* o = out.row(i).data();
      if (i > 0) {
        const double* up = x.row(i - 1).data();
        for (std::size_t n = 0; n < N; ++n) o[n] += scale * (xi[n] - up[n]);
      }
      if (i + 1 < M) {
        const double* down = x.row(i + 1).data();
        for (std::size_t n = 0; n < N; ++n) o[n] += scale * (xi[n] - down[n]);
      }
    }
  });
}

double regulariser(const DenseMatrix& Pi, const Engine& engine) {
  const std::size_t M = Pi.rows(), N = Pi.cols();
  if (M < 2) return 0.0;
  return engine.reduce([&](std::size_t, RowRange rows) {
    double acc = 0.0;
    for (std::size_t i = rows.begin; i < rows.end && i + 1 < M; ++i) {
      const double* a = Pi.row(i).data();
      const double* b = Pi.row(i + 1).data();
      for (std::size_t n = 0; n < N; ++n) {
        double t = a[n] - b[n];
        acc += t * t;
      }
    }
    return acc;
  });
}

double sum_squares(const DenseMatrix& X) {
  double acc = 0.0;
  for (double v : X.values()) acc += v * v;
  return acc;
}

// O = F Pi - P
void compute_residual(const DenseMatrix& Pi, const ProblemInstance& inst, const Engine& engine, DenseMatrix& O) {
  engine.multiply(Pi, O);
  const double* p = inst.P.data();
  double* o = O.data();
  for (std::size_t k = 0; k < O.size(); ++k) o[k] -= p[k];
}

void gradient_from_residual(const DenseMatrix& Pi, const DenseMatrix& O, double gamma, const Engine& engine,
                            DenseMatrix& G) {
  engine.multiply_transposed(O, 2.0, G);
  add_laplacian(Pi, 2.0 * gamma, G, engine);
}

struct HessianWork {
  DenseMatrix FD;     // D x N
  DenseMatrix full;   // M x N, expanded direction (masked case)
  DenseMatrix Hfull;  // M x N
};

void apply_hessian(const DenseMatrix& d, const ProblemInstance&, double gamma, const Engine& engine,
                   HessianWork& w, DenseMatrix& out) {
  engine.multiply(d, w.FD);
  engine.multiply_transposed(w.FD, 2.0, out);
  add_laplacian(d, 2.0 * gamma, out, engine);
}

void apply_masked_hessian(const DenseMatrix& d, const ProblemInstance& inst, double gamma, const Stage2Mask& mask,
                          const std::vector<double>& hrow, const Engine& engine, HessianWork& w, DenseMatrix& out) {
  const std::size_t M = d.rows(), N = d.cols();
  if (w.full.rows() != M || w.full.cols() != N) w.full = DenseMatrix(M, N);
  engine.for_each_block([&](std::size_t, RowRange rows) {
    for (std::size_t i = rows.begin; i < rows.end; ++i) {
      const std::size_t m = mask.row_max[i];
      double sum = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        if (n == m) continue;
        double v = mask.active[i * N + n] ? 0.0 : d(i, n);
        w.full(i, n) = v;
        sum += v;
      }
      w.full(i, m) = -sum;
    }
  });
  apply_hessian(w.full, inst, gamma, engine, w, w.Hfull);
  if (out.rows() != M || out.cols() != N) out = DenseMatrix(M, N);
  engine.for_each_block([&](std::size_t, RowRange rows) {
    for (std::size_t i = rows.begin; i < rows.end; ++i) {
      const std::size_t m = mask.row_max[i];
      const double hm = w.Hfull(i, m);
      for (std::size_t n = 0; n < N; ++n) {
        if (n == m) {
          out(i, n) = 0.0;
        } else if (mask.active[i * N + n]) {
          out(i, n) = 2.0 * hrow[i] * d(i, n);
        } else {
          out(i, n) = w.Hfull(i, n) - hm;
        }
      }
    }
  });
}

void check_mask(const Stage2Mask& mask, const ProblemInstance& inst) {
  if (mask.row_max.size() != inst.M() || mask.active.size() != inst.M() * inst.N()) {
    throw ValidationError("stage-2 mask does not match the problem dimensions");
  }
  for (std::size_t m : mask.row_max) {
    if (m >= inst.N()) throw ValidationError("stage-2 mask: row maximum index out of range");
  }
}

}  // namespace

void SolverConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " must be > 0");
  };
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("gamma must be >= 0");
  if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("beta must lie in (0,1)");
  if (!(c_armijo > 0.0 && c_armijo < 1.0)) throw ValidationError("c_armijo must lie in (0,1)");
  positive(eps_active, "eps_active");
  positive(eps_stage1, "eps_stage1");
  positive(eps_kkt, "eps_kkt");
  positive(cg_rel_tol, "cg_rel_tol");
  if (cg_max_iters == 0) throw ValidationError("cg_max_iters must be >= 1");
  if (max_newton_stage2 == 0) throw ValidationError("max_newton_stage2 must be >= 1");
  if (smoothing.divisor == 0) throw ValidationError("smoothing divisor must be >= 1");
}

double objective(const DenseMatrix& Pi, const ProblemInstance& inst, double gamma, const Engine* engine) {
  check_shape(Pi, inst, "Pi");
  return with_engine(inst, engine, [&](const Engine& e) {
    DenseMatrix O;
    compute_residual(Pi, inst, e, O);
    double f = sum_squares(O);
    if (gamma != 0.0) f += gamma * regulariser(Pi, e);
    return f;
  });
}

DenseMatrix gradient(const DenseMatrix& Pi, const ProblemInstance& inst, double gamma, const Engine* engine) {
  check_shape(Pi, inst, "Pi");
  return with_engine(inst, engine, [&](const Engine& e) {
    DenseMatrix O, G;
    compute_residual(Pi, inst, e, O);
    gradient_from_residual(Pi, O, gamma, e, G);
    return G;
  });
}

DenseMatrix hessian_product(const DenseMatrix& d, const ProblemInstance& inst, double gamma, const Stage2Mask* mask,
                            const Engine* engine) {
  check_shape(d, inst, "direction");
  if (!d.all_finite()) throw ValidationError("Hessian product of a non-finite direction");
  if (mask) check_mask(*mask, inst);
  return with_engine(inst, engine, [&](const Engine& e) {
    HessianWork w;
    DenseMatrix out;
    if (mask) {
      apply_masked_hessian(d, inst, gamma, *mask, row_hessian_diag(inst, gamma), e, w, out);
    } else {
      apply_hessian(d, inst, gamma, e, w, out);
    }
    return out;
  });
}

DenseMatrix hessian_diag(const ProblemInstance& inst, double gamma) {
  auto h = row_hessian_diag(inst, gamma);
  DenseMatrix out(inst.M(), inst.N());
  for (std::size_t i = 0; i < inst.M(); ++i) {
    for (std::size_t n = 0; n < inst.N(); ++n) out(i, n) = h[i];
  }
  return out;
}

PcgResult pcg_solve(const DenseMatrix& rhs, const ProblemInstance& inst, double gamma, const Stage2Mask* mask,
                    const SolverConfig& config, const Engine* engine) {
  check_shape(rhs, inst, "CG right-hand side");
  if (!rhs.all_finite()) throw ValidationError("CG right-hand side is not finite");
  if (mask) check_mask(*mask, inst);
  return with_engine(inst, engine, [&](const Engine& e) {
    const std::size_t M = inst.M(), N = inst.N();
    const auto hrow = row_hessian_diag(inst, gamma);

    // Inverse preconditioner; zero on frozen rows and on implicit coordinates.
    DenseMatrix inv_prec(M, N);
    DenseMatrix r = rhs;
    for (std::size_t i = 0; i < M; ++i) {
      double h = mask ? 2.0 * hrow[i] : hrow[i];
      for (std::size_t n = 0; n < N; ++n) {
        bool skip = h == 0.0 || (mask && n == mask->row_max[i]);
        inv_prec(i, n) = skip ? 0.0 : 1.0 / h;
        if (skip) r(i, n) = 0.0;
      }
    }

    PcgResult res;
    res.step = DenseMatrix(M, N);
    const double bnorm = std::sqrt(e.dot(r, r));
    if (bnorm == 0.0) return res;

    DenseMatrix z(M, N), p(M, N), Ap(M, N);
    HessianWork w;
    auto precondition = [&] {
      e.for_each_block([&](std::size_t, RowRange rows) {
        for (std::size_t k = rows.begin * N; k < rows.end * N; ++k) z.data()[k] = inv_prec.data()[k] * r.data()[k];
      });
    };
    precondition();
    p = z;
    double rz = e.dot(r, z);
    double rnorm = bnorm;
    for (std::size_t it = 1; it <= config.cg_max_iters; ++it) {
      if (mask) {
        apply_masked_hessian(p, inst, gamma, *mask, hrow, e, w, Ap);
      } else {
        apply_hessian(p, inst, gamma, e, w, Ap);
      }
      const double pAp = e.dot(p, Ap);
      if (!std::isfinite(pAp)) throw Error("CG produced a non-finite curvature (ill-conditioned system)");
      if (pAp <= 0.0) {
        if (it == 1) res.step = z;
        break;
      }
      const double a = rz / pAp;
      e.for_each_block([&](std::size_t, RowRange rows) {
        for (std::size_t k = rows.begin * N; k < rows.end * N; ++k) {
          res.step.data()[k] += a * p.data()[k];
          r.data()[k] -= a * Ap.data()[k];
        }
      });
      res.iterations = it;
      rnorm = std::sqrt(e.dot(r, r));
      if (!std::isfinite(rnorm)) throw Error("CG produced a non-finite residual (ill-conditioned system)");
      if (rnorm <= config.cg_rel_tol * bnorm) break;
      precondition();
      const double rz_new = e.dot(r, z);
      const double b = rz_new / rz;
      rz = rz_new;
      e.for_each_block([&](std::size_t, RowRange rows) {
        for (std::size_t k = rows.begin * N; k < rows.end * N; ++k) p.data()[k] = z.data()[k] + b * p.data()[k];
      });
    }
    res.rel_residual = rnorm / bnorm;
    return res;
  });
}

double kkt_residual(const DenseMatrix& Pi, const DenseMatrix& G, const Engine* engine) {
  if (!Pi.same_shape(G)) throw ValidationError("kkt_residual: Pi and gradient shapes differ");
  const std::size_t M = Pi.rows(), N = Pi.cols();
  auto block = [&](RowRange rows) {
    double acc = 0.0;
    for (std::size_t i = rows.begin; i < rows.end; ++i) {
      const double* g = G.row(i).data();
      const double* x = Pi.row(i).data();
      double lambda = std::max(0.0, -*std::min_element(g, g + N));
      for (std::size_t n = 0; n < N; ++n) {
        double t = x[n] * (g[n] + lambda);
        acc += t * t;
      }
    }
    return acc;
  };
  double sum = engine && engine->M() == M ? engine->reduce([&](std::size_t, RowRange rows) { return block(rows); })
                                          : block({0, M});
  return std::sqrt(sum / static_cast<double>(N * M));
}

SolverState::SolverState(const ProblemInstance& inst, DenseMatrix Pi, double gamma, const Engine& engine)
    : inst_(inst), engine_(engine), gamma_(gamma), Pi_(std::move(Pi)) {
  check_shape(Pi_, inst_, "Pi");
  if (engine_.M() != inst_.M()) throw ValidationError("engine was built for a different probe matrix");
  for (double h : row_hessian_diag(inst_, gamma_)) frozen_rows_ += h == 0.0;
  refresh();
}

void SolverState::refresh() {
  compute_residual(Pi_, inst_, engine_, O_);
  f_ = sum_squares(O_);
  if (gamma_ != 0.0) f_ += gamma_ * regulariser(Pi_, engine_);
  gradient_from_residual(Pi_, O_, gamma_, engine_, G_);
}

double SolverState::evaluate(const DenseMatrix& trial) const {
  compute_residual(trial, inst_, engine_, scratch_);
  double f = sum_squares(scratch_);
  if (gamma_ != 0.0) f += gamma_ * regulariser(trial, engine_);
  return f;
}

void SolverState::accept(DenseMatrix next) {
  Pi_ = std::move(next);
  refresh();
}

double projected_path_slope(const SolverState& state, const DenseMatrix& step) {
  const Engine& e = state.engine();
  const DenseMatrix& Pi = state.Pi();
  const double h = 1e-7 * (1.0 + std::sqrt(e.dot(Pi, Pi)));
  const std::size_t N = Pi.cols();
  DenseMatrix trial(Pi.rows(), N);
  e.for_each_block([&](std::size_t, RowRange rows) {
    for (std::size_t k = rows.begin * N; k < rows.end * N; ++k) trial.data()[k] = Pi.data()[k] + h * step.data()[k];
  });
  project_rows_inplace(trial, &e);
  const DenseMatrix& G = state.grad();
  return e.reduce([&](std::size_t, RowRange rows) {
           double acc = 0.0;
           for (std::size_t k = rows.begin * N; k < rows.end * N; ++k) {
             acc += G.data()[k] * (trial.data()[k] - Pi.data()[k]);
           }
           return acc;
         }) /
         h;
}

bool stage_transition_check(double path_slope, double eps_stage1) { return std::abs(path_slope) <= eps_stage1; }

StepResult stage1_iterate(SolverState& state, const SolverConfig& config) {
  const Engine& e = state.engine();
  const ProblemInstance& inst = state.instance();
  const std::size_t N = inst.N();
  DenseMatrix rhs = state.grad();
  for (double& v : rhs.values()) v = -v;
  PcgResult cg = pcg_solve(rhs, inst, state.gamma(), nullptr, config, &e);

  StepResult res;
  res.cg_iterations = cg.iterations;
  res.slope = projected_path_slope(state, cg.step);
  if (stage_transition_check(res.slope, config.eps_stage1) || !(res.slope < 0.0)) {
    res.status = StepStatus::stationary;
    return res;
  }
  const DenseMatrix& Pi = state.Pi();
  const double f0 = state.objective();
  DenseMatrix trial(inst.M(), N);
  double alpha = 1.0;
  for (std::size_t l = 0; l <= config.max_backoffs; ++l, alpha *= config.beta) {
    e.for_each_block([&](std::size_t, RowRange rows) {
      for (std::size_t k = rows.begin * N; k < rows.end * N; ++k) {
        trial.data()[k] = Pi.data()[k] + alpha * cg.step.data()[k];
      }
    });
    project_rows_inplace(trial, &e);
    if (state.evaluate(trial) <= f0 + config.c_armijo * alpha * res.slope) {
      state.accept(std::move(trial));
      res.status = StepStatus::accepted;
      res.alpha = alpha;
      return res;
    }
  }
  res.status = StepStatus::line_search_failure;
  return res;
}

Stage2Mask stage2_mask(const DenseMatrix& Pi, const DenseMatrix& G, double eps_active) {
  if (!Pi.same_shape(G)) throw ValidationError("stage2_mask: Pi and gradient shapes differ");
  const std::size_t M = Pi.rows(), N = Pi.cols();
  Stage2Mask mask;
  mask.row_max.resize(M);
  mask.active.assign(M * N, 0);
  for (std::size_t i = 0; i < M; ++i) {
    auto row = Pi.row(i);
    const std::size_t m = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    mask.row_max[i] = m;
    for (std::size_t n = 0; n < N; ++n) {
      if (n != m && row[n] <= eps_active && G(i, n) - G(i, m) > 0.0) mask.active[i * N + n] = 1;
    }
  }
  return mask;
}

StepResult stage2_iterate(SolverState& state, const SolverConfig& config) {
  const Engine& e = state.engine();
  const ProblemInstance& inst = state.instance();
  const std::size_t M = inst.M(), N = inst.N();
  const DenseMatrix& Pi = state.Pi();
  const DenseMatrix& G = state.grad();
  const Stage2Mask mask = stage2_mask(Pi, G, config.eps_active);

  DenseMatrix rhs(M, N);
  for (std::size_t i = 0; i < M; ++i) {
    const std::size_t m = mask.row_max[i];
    for (std::size_t n = 0; n < N; ++n) rhs(i, n) = n == m ? 0.0 : -(G(i, n) - G(i, m));
  }
  PcgResult cg = pcg_solve(rhs, inst, state.gamma(), &mask, config, &e);
  const DenseMatrix& step = cg.step;

  StepResult res;
  res.cg_iterations = cg.iterations;
  // Path derivative at alpha = 0: coordinates sitting at zero only move if the step is positive.
  res.slope = e.reduce([&](std::size_t, RowRange rows) {
    double acc = 0.0;
    for (std::size_t i = rows.begin; i < rows.end; ++i) {
      const std::size_t m = mask.row_max[i];
      for (std::size_t n = 0; n < N; ++n) {
        if (n == m) continue;
        double p = step(i, n);
        if (Pi(i, n) > 0.0 || p > 0.0) acc -= rhs(i, n) * p;
      }
    }
    return acc;
  });
  if (!(res.slope < 0.0)) {
    res.status = StepStatus::stationary;
    return res;
  }

  const double f0 = state.objective();
  DenseMatrix trial(M, N);
  double alpha = 1.0;
  for (std::size_t l = 0; l <= config.max_backoffs; ++l, alpha *= config.beta) {
    const double infeasible_rows = e.reduce([&](std::size_t, RowRange rows) {
          double bad = 0.0;
          for (std::size_t i = rows.begin; i < rows.end; ++i) {
            const std::size_t m = mask.row_max[i];
            double sum = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
              if (n == m) continue;
              double v = std::max(0.0, Pi(i, n) + alpha * step(i, n));
              trial(i, n) = v;
              sum += v;
            }
            trial(i, m) = 1.0 - sum;
            if (!(trial(i, m) >= 0.0)) bad += 1.0;
          }
          return bad;
        });
    if (infeasible_rows > 0.0) continue;
    if (state.evaluate(trial) <= f0 + config.c_armijo * alpha * res.slope) {
      state.accept(std::move(trial));
      res.status = StepStatus::accepted;
      res.alpha = alpha;
      return res;
    }
  }
  res.status = StepStatus::line_search_failure;
  return res;
}

const char* to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::converged: return "converged";
    case SolverStatus::iteration_cap: return "iteration_cap";
    case SolverStatus::line_search_failure: return "line_search_failure";
  }
  return "unknown";
}

std::size_t ConvergenceReport::newton_iterations(int stage, int pass) const {
  return static_cast<std::size_t>(std::count_if(iterations.begin(), iterations.end(), [&](const IterationRecord& r) {
    return r.stage == stage && r.pass == pass;
  }));
}

void ConvergenceReport::write_jsonl(std::ostream& os) const {
  for (const auto& r : iterations) {
    nlohmann::json j = {{"stage", r.stage},       {"pass", r.pass},        {"k", r.k},
                        {"objective", r.objective}, {"kkt", r.kkt},        {"alpha", r.alpha},
                        {"cg_iters", r.cg_iters},  {"wall_ms", r.wall_ms}};
    os << j.dump() << '\n';
  }
}

bool newton_iteration_budget_check(const ConvergenceReport& report) {
  if (report.iterations.empty()) return false;
  return report.newton_iterations(1) <= 30 && report.newton_iterations(2) <= 400;
}

namespace {

struct PassOutcome {
  DenseMatrix Pi;
  SolverStatus status;
  double objective;
  double kkt;
};

PassOutcome run_pass(const ProblemInstance& inst, const SolverConfig& config, const Engine& engine, DenseMatrix Pi,
                     int pass, bool use_stage1, ConvergenceReport& report, const IterationObserver& observer) {
  SolverState state(inst, std::move(Pi), config.gamma, engine);
  double kkt = state.kkt();
  std::size_t k = 0;
  auto record = [&](int stage, const StepResult& step, Clock::time_point t0) {
    kkt = state.kkt();
    IterationRecord rec{stage, pass, k++, state.objective(), kkt, step.alpha, step.cg_iterations, ms_since(t0)};
    report.iterations.push_back(rec);
    if (observer) observer(rec, state.Pi());
  };

  if (use_stage1) {
    const auto t_stage = Clock::now();
    for (std::size_t it = 0; it < config.max_newton_stage1 && kkt > config.eps_kkt; ++it) {
      const auto t0 = Clock::now();
      StepResult step = stage1_iterate(state, config);
      // Transition criterion, non-descent or a failed line search all hand over to stage 2.
      if (step.status != StepStatus::accepted) break;
      record(1, step, t0);
    }
    report.stage1_ms += ms_since(t_stage);
  }

  const auto t_stage = Clock::now();
  SolverStatus status = SolverStatus::iteration_cap;
  for (std::size_t it = 0;; ++it) {
    if (kkt <= config.eps_kkt) {
      status = SolverStatus::converged;
      break;
    }
    if (it == config.max_newton_stage2) break;
    const auto t0 = Clock::now();
    StepResult step = stage2_iterate(state, config);
    if (step.status != StepStatus::accepted) {
      status = SolverStatus::line_search_failure;
      break;
    }
    record(2, step, t0);
  }
  report.stage2_ms += ms_since(t_stage);
  return {state.Pi(), status, state.objective(), kkt};
}

}  // namespace

SolveResult solve_two_stage(const ProblemInstance& inst, const SolverConfig& config, std::optional<DenseMatrix> initial,
                            EngineConfig engine_config, const IterationObserver& observer) {
  config.validate();
  DenseMatrix Pi = initial ? std::move(*initial) : PovmMatrix::uniform(inst.M(), inst.N()).matrix();
  check_shape(Pi, inst, "initial Pi");
  check_povm(Pi);
  Engine engine(inst.F, engine_config);

  ConvergenceReport report;
  PassOutcome out = run_pass(inst, config, engine, std::move(Pi), 0, config.use_stage1, report, observer);
  report.pass_status.push_back(out.status);
  if (config.smoothing.enabled) {
    const auto t0 = Clock::now();
    PovmMatrix smoothed = smooth_povm(out.Pi, config.smoothing.divisor, config.smoothing.i_min, &engine);
    report.smoothing_ms = ms_since(t0);
    out = run_pass(inst, config, engine, std::move(smoothed).release(), 1, false, report, observer);
    report.pass_status.push_back(out.status);
  }
  report.status = out.status;
  report.final_objective = out.objective;
  report.final_kkt = out.kkt;
  for (double h : row_hessian_diag(inst, config.gamma)) report.frozen_rows += h == 0.0;
  return {PovmMatrix(std::move(out.Pi)), std::move(report)};
}

}  // namespace pqdt
