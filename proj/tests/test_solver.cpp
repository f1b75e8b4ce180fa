#include <doctest.h>

#include <random>

#include "pqdt/detector_model.hpp"
#include "pqdt/solver.hpp"
#include "test_util.hpp"

using namespace pqdt;

namespace {

struct RandomProblem {
  ProblemInstance inst;
  DenseMatrix Pi;
  double gamma;
};

RandomProblem random_problem(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> Md(2, 12), Nd(2, 4), Dd(1, 8);
  const std::size_t M = Md(rng), N = Nd(rng), D = std::min(Dd(rng), M);
  BandedMatrix F = test::random_banded(D, M, rng);
  DenseMatrix P = test::random_simplex_rows(D, N, rng);
  DenseMatrix Pi = test::random_simplex_rows(M, N, rng);
  const double gamma = std::uniform_real_distribution<double>(0.0, 0.5)(rng);
  return {ProblemInstance(std::move(F), std::move(P)), std::move(Pi), gamma};
}

double rel_err(const DenseMatrix& a, const DenseMatrix& b) {
  return test::max_abs_diff(a, b) / std::max(1e-300, test::max_abs(b));
}

// Dense H for a single column pattern: H = 2 F^T F + 2 gamma L, same for every outcome n.
std::vector<std::vector<double>> dense_hessian(const ProblemInstance& inst, double gamma) {
  const DenseMatrix F = inst.F.to_dense();
  const std::size_t M = inst.M();
  std::vector<std::vector<double>> H(M, std::vector<double>(M, 0.0));
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < M; ++j)
      for (std::size_t d = 0; d < inst.D(); ++d) H[i][j] += 2.0 * F(d, i) * F(d, j);
  for (std::size_t i = 0; i + 1 < M; ++i) {
    H[i][i] += 2.0 * gamma;
    H[i + 1][i + 1] += 2.0 * gamma;
    H[i][i + 1] -= 2.0 * gamma;
    H[i + 1][i] -= 2.0 * gamma;
  }
  return H;
}

std::vector<double> gauss_solve(std::vector<std::vector<double>> A, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = A[r][c] / A[c][c];
      for (std::size_t k = c; k < n; ++k) A[r][k] -= f * A[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= A[r][k] * x[k];
    x[r] = s / A[r][r];
  }
  return x;
}

}  // namespace

TEST_CASE("gradient matches central differences") {
  std::mt19937_64 rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    auto [inst, Pi, gamma] = random_problem(rng);
    const DenseMatrix G = gradient(Pi, inst, gamma);
    DenseMatrix fd(Pi.rows(), Pi.cols());
    const double h = 1e-5;
    for (std::size_t k = 0; k < Pi.size(); ++k) {
      DenseMatrix a = Pi, b = Pi;
      a.data()[k] += h;
      b.data()[k] -= h;
      fd.data()[k] = (objective(a, inst, gamma) - objective(b, inst, gamma)) / (2 * h);
    }
    CHECK(rel_err(G, fd) <= 1e-6);
  }
}

TEST_CASE("Hessian product matches differenced gradients") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 20; ++rep) {
    auto [inst, Pi, gamma] = random_problem(rng);
    DenseMatrix dir(Pi.rows(), Pi.cols());
    for (double& v : dir.values()) v = g(rng);
    const double h = 1e-4;
    DenseMatrix a = Pi, b = Pi;
    for (std::size_t k = 0; k < Pi.size(); ++k) {
      a.data()[k] += h * dir.data()[k];
      b.data()[k] -= h * dir.data()[k];
    }
    const DenseMatrix Ga = gradient(a, inst, gamma), Gb = gradient(b, inst, gamma);
    DenseMatrix fd(Pi.rows(), Pi.cols());
    for (std::size_t k = 0; k < Pi.size(); ++k) fd.data()[k] = (Ga.data()[k] - Gb.data()[k]) / (2 * h);
    CHECK(rel_err(hessian_product(dir, inst, gamma), fd) <= 1e-5);
  }
}

TEST_CASE("Hessian diagonal matches unit-vector products") {
  std::mt19937_64 rng(43);
  auto [inst, Pi, gamma] = random_problem(rng);
  const DenseMatrix diag = hessian_diag(inst, gamma);
  for (std::size_t k = 0; k < Pi.size(); ++k) {
    DenseMatrix e(Pi.rows(), Pi.cols());
    e.data()[k] = 1.0;
    CHECK(hessian_product(e, inst, gamma).data()[k] == doctest::Approx(diag.data()[k]).epsilon(1e-13));
  }
}

TEST_CASE("masked reduced Hessian is the Hessian of the implicit-coordinate objective") {
  std::mt19937_64 rng(44);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 10; ++rep) {
    auto [inst, Pi, gamma] = random_problem(rng);
    const std::size_t M = Pi.rows(), N = Pi.cols();
    Stage2Mask mask = stage2_mask(Pi, gradient(Pi, inst, gamma), 1e-8);
    std::fill(mask.active.begin(), mask.active.end(), 0);
    DenseMatrix y(M, N);
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t n = 0; n < N; ++n)
        if (n != mask.row_max[i]) y(i, n) = g(rng);
    // Reduced gradient along the expanded direction, differenced.
    auto reduced_grad = [&](double t) {
      DenseMatrix X = Pi;
      for (std::size_t i = 0; i < M; ++i) {
        double s = 0.0;
        for (std::size_t n = 0; n < N; ++n) {
          if (n == mask.row_max[i]) continue;
          X(i, n) += t * y(i, n);
          s += y(i, n);
        }
        X(i, mask.row_max[i]) -= t * s;
      }
      DenseMatrix G = gradient(X, inst, gamma), R(M, N);
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t n = 0; n < N; ++n)
          if (n != mask.row_max[i]) R(i, n) = G(i, n) - G(i, mask.row_max[i]);
      return R;
    };
    const double h = 1e-4;
    DenseMatrix a = reduced_grad(h), b = reduced_grad(-h), fd(M, N);
    for (std::size_t k = 0; k < fd.size(); ++k) fd.data()[k] = (a.data()[k] - b.data()[k]) / (2 * h);
    DenseMatrix Hy = hessian_product(y, inst, gamma, &mask);
    for (std::size_t i = 0; i < M; ++i) Hy(i, mask.row_max[i]) = 0.0;
    CHECK(rel_err(Hy, fd) <= 1e-5);
  }
}

TEST_CASE("regulariser adds gamma times squared neighbour differences") {
  std::mt19937_64 rng(45);
  auto [inst, Pi, gamma] = random_problem(rng);
  double reg = 0.0;
  for (std::size_t i = 0; i + 1 < Pi.rows(); ++i)
    for (std::size_t n = 0; n < Pi.cols(); ++n) reg += (Pi(i, n) - Pi(i + 1, n)) * (Pi(i, n) - Pi(i + 1, n));
  const double diff = objective(Pi, inst, gamma) - objective(Pi, inst, 0.0);
  CHECK(diff == doctest::Approx(gamma * reg).epsilon(1e-12));
}

TEST_CASE("preconditioned CG solves the Hessian system") {
  std::mt19937_64 rng(46);
  auto [inst, Pi, gamma] = random_problem(rng);
  gamma = 0.3;
  std::normal_distribution<double> g;
  DenseMatrix rhs(Pi.rows(), Pi.cols());
  for (double& v : rhs.values()) v = g(rng);
  SolverConfig cfg;
  cfg.cg_rel_tol = 1e-13;
  cfg.cg_max_iters = 500;
  const PcgResult r = pcg_solve(rhs, inst, gamma, nullptr, cfg);
  const auto H = dense_hessian(inst, gamma);
  for (std::size_t n = 0; n < Pi.cols(); ++n) {
    std::vector<double> b(Pi.rows());
    for (std::size_t i = 0; i < Pi.rows(); ++i) b[i] = rhs(i, n);
    const auto x = gauss_solve(H, b);
    for (std::size_t i = 0; i < Pi.rows(); ++i) CHECK(r.step(i, n) == doctest::Approx(x[i]).epsilon(1e-8));
  }
}

TEST_CASE("unprobed photon numbers are frozen") {
  BandedMatrix F(1, 3, {0}, {2}, {0.5, 0.5});
  ProblemInstance inst(F, DenseMatrix(1, 2, std::vector<double>{0.2, 0.8}));
  DenseMatrix rhs(3, 2, 1.0);
  const PcgResult r = pcg_solve(rhs, inst, 0.0, nullptr, SolverConfig{});
  CHECK(r.step(2, 0) == 0.0);
  CHECK(r.step(2, 1) == 0.0);
  const SolveResult res = solve_two_stage(inst, SolverConfig{});
  CHECK(res.report.frozen_rows == 1);
  CHECK(res.Pi(2, 0) == 0.5);
}

TEST_CASE("KKT residual vanishes at a stationary point") {
  DenseMatrix Pi(2, 3, std::vector<double>{0.5, 0.5, 0.0, 1.0, 0.0, 0.0});
  DenseMatrix G(2, 3, std::vector<double>{-1.0, -1.0, 4.0, -2.0, 0.0, 1.0});
  CHECK(kkt_residual(Pi, G) == 0.0);
  G(0, 0) = -0.5;
  CHECK(kkt_residual(Pi, G) == doctest::Approx(std::sqrt(0.25 * 0.25 / 6.0)));
}

TEST_CASE("transition criterion and config validation") {
  CHECK(stage_transition_check(5e-5));
  CHECK(stage_transition_check(-1e-4));
  CHECK_FALSE(stage_transition_check(-2e-4));
  SolverConfig c;
  CHECK_NOTHROW(c.validate());
  c.beta = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.gamma = -1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK_FALSE(newton_iteration_budget_check(ConvergenceReport{}));
}

TEST_CASE("exact single-probe fit") {
  BandedMatrix F(1, 1, {0}, {1}, {1.0});
  ProblemInstance inst(F, DenseMatrix(1, 2, std::vector<double>{0.3, 0.7}));
  const SolveResult r = solve_two_stage(inst, SolverConfig{});
  CHECK(r.report.status == SolverStatus::converged);
  CHECK(r.Pi(0, 0) == doctest::Approx(0.3).epsilon(1e-9));
  CHECK(r.report.final_objective <= 1e-18);
}

TEST_CASE("identity probes return P") {
  BandedMatrix F(2, 2, {0, 1}, {1, 1}, {1.0, 1.0});
  DenseMatrix P(2, 2, std::vector<double>{0.9, 0.1, 0.25, 0.75});
  ProblemInstance inst(F, P);
  SolverConfig cfg;
  cfg.eps_kkt = 1e-12;
  const SolveResult r = solve_two_stage(inst, cfg);
  CHECK(r.report.status == SolverStatus::converged);
  CHECK(test::max_abs_diff(r.Pi.matrix(), P) <= 1e-9);
}

TEST_CASE("iterates stay feasible and descend") {
  DetectorParams params;
  params.J = 6;
  const std::size_t M = 120, N = 7, D = 12;
  const BandedMatrix F = build_probe_matrix(probe_schedule_quadratic(D, fit_quadratic_scale(D, M, 1e-12)), M);
  const PovmMatrix theo = analytic_povm(params, M, N);
  ProblemInstance inst(F, simulate_outcomes(F, theo, 20000, 3));
  SolverConfig cfg;
  cfg.gamma = 1e-3;
  cfg.eps_kkt = 1e-9;
  cfg.smoothing.enabled = true;
  cfg.smoothing.i_min = 20;

  double worst_neg = 0.0, worst_sum = 0.0;
  bool monotone = true;
  int last_stage = 0, last_pass = -1;
  double last_f = 0.0;
  auto obs = [&](const IterationRecord& r, const DenseMatrix& Pi) {
    for (std::size_t i = 0; i < Pi.rows(); ++i) {
      double s = 0.0;
      for (double v : Pi.row(i)) {
        worst_neg = std::min(worst_neg, v);
        s += v;
      }
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
    if (r.stage == last_stage && r.pass == last_pass && r.objective > last_f) monotone = false;
    last_stage = r.stage;
    last_pass = r.pass;
    last_f = r.objective;
  };
  const SolveResult r = solve_two_stage(inst, cfg, std::nullopt, {}, obs);
  CHECK(worst_neg == 0.0);
  CHECK(worst_sum <= 1e-9);
  CHECK(monotone);
  CHECK(r.report.newton_iterations(1) > 0);
  CHECK(r.report.iterations.back().pass == 1);
}

TEST_CASE("deterministic reductions give bit-identical reconstructions") {
  std::mt19937_64 rng(47);
  BandedMatrix F = test::random_banded(6, 40, rng);
  ProblemInstance inst(F, test::random_simplex_rows(6, 3, rng));
  SolverConfig cfg;
  cfg.gamma = 1e-2;
  const SolveResult a = solve_two_stage(inst, cfg, std::nullopt, {3, true});
  const SolveResult b = solve_two_stage(inst, cfg, std::nullopt, {3, true});
  CHECK(a.Pi.matrix().bit_equal(b.Pi.matrix()));
  const SolveResult c = solve_two_stage(inst, cfg, std::nullopt, {1, true});
  CHECK(test::max_abs_diff(a.Pi.matrix(), c.Pi.matrix()) <= 1e-8);
}

TEST_CASE("smoothing windows and the untouched low rows") {
  const std::size_t M = 600;
  DenseMatrix Pi(M, 2);
  for (std::size_t i = 0; i < M; ++i) Pi(i, 1) = 1.0;
  Pi(500, 0) = 1.0;
  Pi(500, 1) = 0.0;
  Pi(3, 0) = 0.25;
  Pi(3, 1) = 0.75;
  const PovmMatrix s = smooth_povm(Pi, 50, 100);
  // Row i averages 2 floor(i/50) + 1 neighbours: 19 for i < 500, 21 from 500 to 549.
  for (std::size_t i = 100; i < M; ++i) {
    const std::size_t ns = i / 50;
    const bool covers = i <= 500 + ns && i + ns >= 500;
    const double expect = covers ? 1.0 / static_cast<double>(2 * ns + 1) : 0.0;
    CAPTURE(i);
    CHECK(s(i, 0) == doctest::Approx(expect).epsilon(1e-15));
  }
  for (std::size_t i = 491; i < 500; ++i) CHECK(s(i, 0) == doctest::Approx(1.0 / 19.0).epsilon(1e-15));
  for (std::size_t i = 500; i <= 510; ++i) CHECK(s(i, 0) == doctest::Approx(1.0 / 21.0).epsilon(1e-15));
  CHECK(s(490, 0) == 0.0);
  CHECK(s(511, 0) == 0.0);
  for (std::size_t i = 0; i < 100; ++i) {
    CHECK(s(i, 0) == Pi(i, 0));
    CHECK(s(i, 1) == Pi(i, 1));
  }
}

TEST_CASE("smoothing clips windows at the last row") {
  DenseMatrix Pi(30, 2);
  for (std::size_t i = 0; i < 30; ++i) Pi(i, i % 2) = 1.0;
  const PovmMatrix s = smooth_povm(Pi, 5, 0);
  // Row 29: window [24, 29] clipped from [24, 34], three even and three odd rows.
  CHECK(s(29, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_NOTHROW(PovmMatrix(s.matrix(), 1e-12));
}
