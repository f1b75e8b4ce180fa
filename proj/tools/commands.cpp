#include "commands.hpp"

#include <CLI11.hpp>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "pqdt/analysis.hpp"
#include "pqdt/bench.hpp"
#include "pqdt/matrix_io.hpp"
#include "pqdt/memory_estimate.hpp"

namespace pqdt::cli {
namespace {

using nlohmann::json;

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
  if (!os.flush()) throw IoError("write to " + path.string() + " failed");
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string gib(std::uint64_t bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f GiB", static_cast<double>(bytes) / (1024.0 * 1024.0 * 1024.0));
  return buf;
}

void guard(std::uint64_t M, std::uint64_t N, std::uint64_t D, std::uint64_t budget) {
  const auto need = mem_solver(M, N, D).main_bytes;
  if (need > budget) {
    throw ValidationError("memory guard: M=" + std::to_string(M) + " N=" + std::to_string(N) + " D=" +
                          std::to_string(D) + " needs " + gib(need) + ", budget is " + gib(budget));
  }
}

std::filesystem::path wigner_source(const RunConfig& c) {
  if (c.wigner.source == "Pi_theo") return c.path_Pi_theo();
  if (c.wigner.source == "Pi_rec") return c.path_Pi_rec();
  return c.wigner.source;
}

// "200GB", "1KB", "3.5 GiB", "1024": decimal units for kB/MB/GB/TB, binary for KiB/MiB/GiB/TiB.
double parse_bytes(const std::string& text) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw ValidationError("bad memory size '" + text + "'");
  }
  std::string unit;
  for (char ch : text.substr(pos)) {
    if (!std::isspace(static_cast<unsigned char>(ch))) unit += static_cast<char>(std::toupper(ch));
  }
  static const std::pair<const char*, double> units[] = {
      {"", 1.0},      {"B", 1.0},       {"KB", 1e3},          {"MB", 1e6},          {"GB", 1e9},
      {"TB", 1e12},   {"KIB", 1024.0},  {"MIB", 1048576.0},   {"GIB", 1073741824.0}, {"TIB", 1099511627776.0}};
  for (const auto& [name, factor] : units) {
    if (unit == name) return v * factor;
  }
  throw ValidationError("unknown memory unit in '" + text + "'");
}

int exit_for(SolverStatus s) {
  switch (s) {
    case SolverStatus::converged: return kExitOk;
    case SolverStatus::iteration_cap: return kExitIterationCap;
    case SolverStatus::line_search_failure: return kExitLineSearch;
  }
  return kExitInvalid;
}

}  // namespace

void memory_guard(const RunConfig& c, std::size_t D) { guard(c.M, c.N, D, c.memory_budget_bytes()); }

int cmd_simulate(const RunConfig& c, std::ostream& log) {
  c.validate();
  const ProbeSchedule schedule = c.schedule();
  memory_guard(c, schedule.size());
  ensure_dir(c.paths.workdir);

  const BandedMatrix F = build_probe_matrix(schedule, c.M, c.probes.tail_mass_cutoff);
  const PovmMatrix theo = analytic_povm(c.detector, c.M, c.N, c.truncation);
  const DenseMatrix P = simulate_outcomes(F, theo, c.trials, c.seed);

  double worst = 0.0;
  for (std::size_t d = 0; d < P.rows(); ++d) {
    double s = 0.0;
    for (double v : P.row(d)) s += v;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  save_matrix(F, c.path_F());
  save_matrix(P, c.path_P());
  save_matrix(theo.matrix(), c.path_Pi_theo());
  json meta = {{"command", "simulate"},
               {"config", config_to_json(c)},
               {"truncation_policy", to_string(c.truncation)},
               {"seed", c.seed},
               {"files",
                {{"F", c.path_F().string()}, {"P", c.path_P().string()}, {"Pi_theo", c.path_Pi_theo().string()}}},
               {"P_row_sum_max_deviation", worst}};
  write_json(meta, c.paths.workdir / "meta.json");
  log << "simulate: M=" << c.M << " N=" << c.N << " D=" << schedule.size() << " trials=" << c.trials
      << " seed=" << c.seed << " -> " << c.paths.workdir.string() << '\n';
  return kExitOk;
}

int cmd_reconstruct(const RunConfig& c, std::ostream& log) {
  c.validate();
  BandedMatrix F = load_banded(c.path_F());
  DenseMatrix P = load_dense(c.path_P());
  guard(F.cols(), P.cols(), F.rows(), c.memory_budget_bytes());
  ProblemInstance inst(std::move(F), std::move(P));
  ensure_dir(c.paths.workdir);

  auto progress = [&](const IterationRecord& r, const DenseMatrix&) {
    if (r.k % 10 == 0) {
      log << "pass " << r.pass << " stage " << r.stage << " k=" << r.k << " f=" << r.objective << " kkt=" << r.kkt
          << " alpha=" << r.alpha << '\n';
    }
  };
  SolveResult res = solve_two_stage(inst, c.solver, std::nullopt, c.engine, progress);
  save_matrix(res.Pi.matrix(), c.path_Pi_rec());

  const auto report_path = c.paths.workdir / "report.jsonl";
  std::ofstream os(report_path);
  if (!os) throw IoError("cannot open " + report_path.string() + " for writing");
  res.report.write_jsonl(os);
  if (!os.flush()) throw IoError("write to " + report_path.string() + " failed");

  json meta = {{"command", "reconstruct"},
               {"config", config_to_json(c)},
               {"dims", {{"M", inst.M()}, {"N", inst.N()}, {"D", inst.D()}}},
               {"status", to_string(res.report.status)},
               {"final_objective", res.report.final_objective},
               {"final_kkt", res.report.final_kkt},
               {"newton_iterations_stage1", res.report.newton_iterations(1)},
               {"newton_iterations_stage2", res.report.newton_iterations(2)},
               {"frozen_rows", res.report.frozen_rows},
               {"eps_kkt", c.solver.eps_kkt},
               {"smoothing_reprojected", c.solver.smoothing.enabled}};
  write_json(meta, c.paths.workdir / "meta_reconstruct.json");
  log << "reconstruct: " << to_string(res.report.status) << " f=" << res.report.final_objective
      << " kkt=" << res.report.final_kkt << '\n';
  return exit_for(res.report.status);
}

int cmd_fidelity(const RunConfig& c, std::ostream& out, std::ostream& log) {
  c.validate();
  const DenseMatrix rec = load_dense(c.path_Pi_rec());
  const DenseMatrix ref = load_dense(c.path_Pi_theo());
  const FidelityReport r = infidelity_report(rec, ref, c.fidelity.occupancy);

  bool pass = r.n_occupied > 0;
  json per = json::array();
  for (std::size_t n = 0; n < r.fidelity.size(); ++n) {
    per.push_back({{"n", n}, {"fidelity", r.fidelity[n]}, {"infidelity", r.infidelity[n]},
                   {"occupied", static_cast<bool>(r.occupied[n])}});
    if (r.occupied[n] && r.fidelity[n] < c.fidelity.threshold) pass = false;
  }
  ensure_dir(c.paths.workdir);
  write_json({{"threshold", c.fidelity.threshold},
              {"occupancy_threshold", c.fidelity.occupancy},
              {"n_occupied", r.n_occupied},
              {"mean_occupied", r.mean_occupied},
              {"min_occupied", r.min_occupied},
              {"pass", pass},
              {"outcomes", per}},
             c.paths.workdir / "fidelity.json");
  out << "occupied " << r.n_occupied << "\nmean " << r.mean_occupied << "\nmin " << r.min_occupied << '\n';
  log << "fidelity gate " << (pass ? "passed" : "failed") << " at " << c.fidelity.threshold << '\n';
  return pass ? kExitOk : kExitGate;
}

int cmd_wigner(const RunConfig& c, std::ostream& out, std::ostream& log) {
  const DenseMatrix Pi = load_dense(wigner_source(c));
  const std::size_t n = c.wigner.outcome;
  if (n >= Pi.cols()) {
    throw ValidationError("outcome " + std::to_string(n) + " out of range, N=" + std::to_string(Pi.cols()));
  }
  std::vector<double> theta(Pi.rows());
  for (std::size_t i = 0; i < Pi.rows(); ++i) theta[i] = Pi(i, n);
  const WignerGrid grid = wigner_diag(theta, c.wigner.x, c.wigner.p, c.wigner.bits, c.engine.n_workers);
  ensure_dir(c.paths.workdir);
  const auto path = c.paths.workdir / ("wigner_" + std::to_string(n) + ".csv");
  write_wigner_csv(grid, path);
  const auto [x, p] = grid.argmin();
  char buf[128];
  std::snprintf(buf, sizeof buf, "min %.17g x %.17g p %.17g\n", grid.min_value(), x, p);
  out << buf;
  log << "wigner: wrote " << path.string() << '\n';
  return kExitOk;
}

int cmd_mem_estimate(const MemEstimateArgs& a, std::ostream& out) {
  if (a.M == 0 || a.N == 0 || a.D == 0 || a.nodes == 0 || a.ranks == 0 || !(a.mem_node_bytes > 0.0)) {
    throw ValidationError("mem-estimate: all arguments must be positive");
  }
  const SolverMemory s = mem_solver(a.M, a.N, a.D);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6e", max_hilbert_dim(a.N, a.D, a.ranks, a.nodes, a.mem_node_bytes));
  out << "mem_storage_bytes " << mem_storage(a.M, a.N, a.D) << '\n'
      << "mem_solver_bytes " << s.main_bytes << '\n'
      << "mem_solver_slack_unit_bytes " << s.slack_unit_bytes << '\n'
      << "max_hilbert_dim " << buf << '\n';
  return kExitOk;
}

int cmd_bench_ops(const RunConfig& c, std::ostream& log) {
  if (c.bench.M_list.empty()) throw ValidationError("bench.M_list is empty");
  std::vector<BenchRow> rows;
  double deviation = 0.0;
  for (std::size_t M : c.bench.M_list) {
    BenchOptions o;
    o.M = M;
    o.N = c.bench.N;
    o.D = c.bench.D;
    o.workers = c.bench.workers;
    o.reps = c.bench.reps;
    o.seed = c.seed;
    o.deterministic = c.engine.deterministic;
    o.gamma = c.solver.gamma;
    o.memory_budget_bytes = c.memory_budget_bytes();
    BenchResult r = bench_ops(o);
    deviation = std::max(deviation, r.max_worker_deviation);
    rows.insert(rows.end(), r.rows.begin(), r.rows.end());
    log << "bench-ops: M=" << M << " done\n";
  }
  ensure_dir(c.paths.workdir);
  const auto path = c.paths.workdir / "bench.csv";
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_bench_csv(rows, os);
  if (!os.flush()) throw IoError("write to " + path.string() + " failed");
  log << "bench-ops: max deviation across worker counts " << deviation << '\n';
  return kExitOk;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Detector tomography toolkit"};
  app.require_subcommand(1);

  std::string config_path, workdir;
  std::optional<std::size_t> workers;
  std::optional<std::uint64_t> seed;
  std::optional<bool> deterministic;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--workers", workers, "engine worker count");
  app.add_option("--seed", seed, "sampling seed");
  app.add_option("--deterministic", deterministic, "fixed-order reductions (true/false)");
  app.add_option("--workdir", workdir, "directory for inputs and outputs");

  auto* sim = app.add_subcommand("simulate", "write F, P, analytic POVM and meta.json");
  auto* rec = app.add_subcommand("reconstruct", "reconstruct the POVM from F and P");
  auto* fid = app.add_subcommand("fidelity", "compare the reconstruction with the analytic POVM");
  auto* wig = app.add_subcommand("wigner", "Wigner function of one POVM element");
  std::optional<std::size_t> outcome;
  std::optional<unsigned> bits;
  std::string source;
  wig->add_option("--outcome,-n", outcome, "outcome index");
  wig->add_option("--bits", bits, "mantissa bits");
  wig->add_option("--source", source, "Pi_theo, Pi_rec or a matrix file");
  auto* mem = app.add_subcommand("mem-estimate", "print storage and solver memory estimates");
  MemEstimateArgs ma;
  std::string mem_node = "200GB";
  mem->add_option("--M", ma.M)->required();
  mem->add_option("--N", ma.N)->required();
  mem->add_option("--D", ma.D)->required();
  mem->add_option("--nodes", ma.nodes);
  mem->add_option("--ranks", ma.ranks);
  mem->add_option("--mem-node", mem_node, "memory per node, e.g. 200GB");
  auto* bench = app.add_subcommand("bench-ops", "time solver kernels over a worker sweep");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (mem->parsed()) {
      ma.mem_node_bytes = parse_bytes(mem_node);
      return cmd_mem_estimate(ma, out);
    }
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (workers) c.engine.n_workers = *workers;
    if (seed) c.seed = *seed;
    if (deterministic) c.engine.deterministic = *deterministic;
    if (!workdir.empty()) c.paths.workdir = workdir;
    if (outcome) c.wigner.outcome = *outcome;
    if (bits) c.wigner.bits = *bits;
    if (!source.empty()) c.wigner.source = source;

    if (sim->parsed()) return cmd_simulate(c, err);
    if (rec->parsed()) return cmd_reconstruct(c, err);
    if (fid->parsed()) return cmd_fidelity(c, out, err);
    if (wig->parsed()) return cmd_wigner(c, out, err);
    if (bench->parsed()) return cmd_bench_ops(c, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::bad_alloc&) {
    err << "error: out of memory\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}

}  // namespace pqdt::cli
