#include "run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace pqdt::cli {
namespace {

using nlohmann::json;

void only_keys(const json& j, const char* section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ValidationError(std::string("config: '") + section + "' must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ValidationError(std::string("config: unknown key '") + k + "' in " + section);
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

template <class T>
void read_opt(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T v{};
  read(j, key, v);
  out = v;
}

void read_path(const json& j, const char* key, std::optional<std::filesystem::path>& out) {
  std::optional<std::string> s;
  read_opt(j, key, s);
  if (s) out = *s;
}

GridAxis read_axis(const json& j, const char* section, GridAxis axis) {
  only_keys(j, section, {"min", "max", "points"});
  read(j, "min", axis.min);
  read(j, "max", axis.max);
  read(j, "points", axis.points);
  return axis;
}

json axis_json(const GridAxis& a) { return {{"min", a.min}, {"max", a.max}, {"points", a.points}}; }

TruncationPolicy parse_truncation(const std::string& s) {
  if (s == "drop_renormalize") return TruncationPolicy::drop_renormalize;
  if (s == "accumulate_last") return TruncationPolicy::accumulate_last;
  throw ValidationError("config: truncation must be drop_renormalize or accumulate_last, got '" + s + "'");
}

}  // namespace

const char* to_string(TruncationPolicy p) {
  return p == TruncationPolicy::drop_renormalize ? "drop_renormalize" : "accumulate_last";
}

SolverConfig RunConfig::desk_scale_solver() {
  SolverConfig s;
  s.gamma = 1e-3;
  // The unprobed top rows only converge with near-exact inner solves and a tight KKT target.
  s.eps_kkt = 1e-11;
  s.cg_max_iters = 1000;
  s.cg_rel_tol = 1e-6;
  s.smoothing.enabled = true;
  return s;
}

std::uint64_t RunConfig::memory_budget_bytes() const {
  return static_cast<std::uint64_t>(memory_budget_gib * 1024.0 * 1024.0 * 1024.0);
}

double RunConfig::resolved_scale() const {
  if (probes.scale) return *probes.scale;
  return fit_quadratic_scale(probes.D, M, probes.tail_mass_cutoff);
}

ProbeSchedule RunConfig::schedule() const {
  if (probes.mode == "explicit") return ProbeSchedule(probes.list);
  return probe_schedule_quadratic(probes.D, resolved_scale());
}

void RunConfig::validate() const {
  detector.validate();
  solver.validate();
  if (M == 0 || N == 0) throw ValidationError("config: M and N must be positive");
  if (N > detector.J + 1) {
    throw ValidationError("config: N=" + std::to_string(N) + " exceeds J+1=" + std::to_string(detector.J + 1));
  }
  if (probes.mode != "quadratic" && probes.mode != "explicit") {
    throw ValidationError("config: probes.mode must be quadratic or explicit");
  }
  if (probes.mode == "explicit" && probes.list.empty()) throw ValidationError("config: explicit probe list is empty");
  if (probes.mode == "quadratic" && probes.D == 0) throw ValidationError("config: probes.D must be positive");
  if (trials == 0) throw ValidationError("config: trials must be positive");
  if (engine.n_workers == 0) throw ValidationError("config: engine.n_workers must be positive");
  if (!(memory_budget_gib > 0.0)) throw ValidationError("config: memory_budget_gib must be positive");
  if (!(fidelity.threshold >= 0.0 && fidelity.threshold <= 1.0)) {
    throw ValidationError("config: fidelity.threshold must lie in [0,1]");
  }
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  if (j.is_null()) return c;
  only_keys(j, "config",
            {"detector", "probes", "dims", "trials", "seed", "solver", "engine", "paths", "fidelity", "wigner",
             "bench", "memory_budget_gib"});
  if (j.contains("detector")) {
    const auto& d = j["detector"];
    only_keys(d, "detector", {"R", "eta_loop", "eta_det", "J", "p_dark", "truncation"});
    read(d, "R", c.detector.R);
    read(d, "eta_loop", c.detector.eta_loop);
    read(d, "eta_det", c.detector.eta_det);
    read(d, "J", c.detector.J);
    read(d, "p_dark", c.detector.p_dark);
    std::string t = to_string(c.truncation);
    read(d, "truncation", t);
    c.truncation = parse_truncation(t);
    if (!j.contains("dims") || !j["dims"].contains("N")) c.N = c.detector.J + 1;
  }
  if (j.contains("probes")) {
    const auto& p = j["probes"];
    only_keys(p, "probes", {"mode", "D", "scale", "list", "tail_mass_cutoff"});
    read(p, "mode", c.probes.mode);
    read(p, "D", c.probes.D);
    read(p, "list", c.probes.list);
    read(p, "tail_mass_cutoff", c.probes.tail_mass_cutoff);
    if (p.contains("scale") && !(p["scale"].is_string() && p["scale"] == "fit")) read_opt(p, "scale", c.probes.scale);
    if (c.probes.mode == "explicit") c.probes.D = c.probes.list.size();
  }
  if (j.contains("dims")) {
    only_keys(j["dims"], "dims", {"M", "N"});
    read(j["dims"], "M", c.M);
    read(j["dims"], "N", c.N);
  }
  read(j, "trials", c.trials);
  read(j, "seed", c.seed);
  read(j, "memory_budget_gib", c.memory_budget_gib);
  if (j.contains("solver")) {
    const auto& s = j["solver"];
    only_keys(s, "solver",
              {"gamma", "beta", "c_armijo", "eps_active", "eps_stage1", "eps_kkt", "cg_max_iters", "cg_rel_tol",
               "max_newton_stage1", "max_newton_stage2", "max_backoffs", "use_stage1", "smoothing"});
    read(s, "gamma", c.solver.gamma);
    read(s, "beta", c.solver.beta);
    read(s, "c_armijo", c.solver.c_armijo);
    read(s, "eps_active", c.solver.eps_active);
    read(s, "eps_stage1", c.solver.eps_stage1);
    read(s, "eps_kkt", c.solver.eps_kkt);
    read(s, "cg_max_iters", c.solver.cg_max_iters);
    read(s, "cg_rel_tol", c.solver.cg_rel_tol);
    read(s, "max_newton_stage1", c.solver.max_newton_stage1);
    read(s, "max_newton_stage2", c.solver.max_newton_stage2);
    read(s, "max_backoffs", c.solver.max_backoffs);
    read(s, "use_stage1", c.solver.use_stage1);
    if (s.contains("smoothing")) {
      const auto& sm = s["smoothing"];
      only_keys(sm, "solver.smoothing", {"enabled", "divisor", "i_min"});
      read(sm, "enabled", c.solver.smoothing.enabled);
      read(sm, "divisor", c.solver.smoothing.divisor);
      read(sm, "i_min", c.solver.smoothing.i_min);
    }
  }
  if (j.contains("engine")) {
    only_keys(j["engine"], "engine", {"n_workers", "deterministic"});
    read(j["engine"], "n_workers", c.engine.n_workers);
    read(j["engine"], "deterministic", c.engine.deterministic);
  }
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    only_keys(p, "paths", {"workdir", "F", "P", "Pi_theo", "Pi_rec"});
    std::string wd = c.paths.workdir.string();
    read(p, "workdir", wd);
    c.paths.workdir = wd;
    read_path(p, "F", c.paths.F);
    read_path(p, "P", c.paths.P);
    read_path(p, "Pi_theo", c.paths.Pi_theo);
    read_path(p, "Pi_rec", c.paths.Pi_rec);
  }
  if (j.contains("fidelity")) {
    only_keys(j["fidelity"], "fidelity", {"threshold", "occupancy"});
    read(j["fidelity"], "threshold", c.fidelity.threshold);
    read(j["fidelity"], "occupancy", c.fidelity.occupancy);
  }
  if (j.contains("wigner")) {
    const auto& w = j["wigner"];
    only_keys(w, "wigner", {"outcome", "source", "x", "p", "bits"});
    read(w, "outcome", c.wigner.outcome);
    read(w, "source", c.wigner.source);
    read(w, "bits", c.wigner.bits);
    if (w.contains("x")) c.wigner.x = read_axis(w["x"], "wigner.x", c.wigner.x);
    if (w.contains("p")) c.wigner.p = read_axis(w["p"], "wigner.p", c.wigner.p);
  }
  if (j.contains("bench")) {
    const auto& b = j["bench"];
    only_keys(b, "bench", {"M_list", "N", "D", "workers", "reps"});
    read(b, "M_list", c.bench.M_list);
    read(b, "N", c.bench.N);
    read(b, "D", c.bench.D);
    read(b, "workers", c.bench.workers);
    read(b, "reps", c.bench.reps);
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const RunConfig& c) {
  const auto& s = c.solver;
  json probes = {{"mode", c.probes.mode},
                 {"D", c.probes.D},
                 {"tail_mass_cutoff", c.probes.tail_mass_cutoff},
                 {"scale", c.probes.mode == "quadratic" ? json(c.resolved_scale()) : json(nullptr)},
                 {"scale_fitted", c.probes.mode == "quadratic" && !c.probes.scale}};
  if (c.probes.mode == "explicit") probes["list"] = c.probes.list;
  auto opt_path = [](const std::optional<std::filesystem::path>& p) { return p ? json(p->string()) : json(nullptr); };
  return {
      {"detector",
       {{"R", c.detector.R},
        {"eta_loop", c.detector.eta_loop},
        {"eta_det", c.detector.eta_det},
        {"J", c.detector.J},
        {"p_dark", c.detector.p_dark},
        {"truncation", to_string(c.truncation)}}},
      {"probes", probes},
      {"dims", {{"M", c.M}, {"N", c.N}}},
      {"trials", c.trials},
      {"seed", c.seed},
      {"solver",
       {{"gamma", s.gamma},
        {"beta", s.beta},
        {"c_armijo", s.c_armijo},
        {"eps_active", s.eps_active},
        {"eps_stage1", s.eps_stage1},
        {"eps_kkt", s.eps_kkt},
        {"cg_max_iters", s.cg_max_iters},
        {"cg_rel_tol", s.cg_rel_tol},
        {"max_newton_stage1", s.max_newton_stage1},
        {"max_newton_stage2", s.max_newton_stage2},
        {"max_backoffs", s.max_backoffs},
        {"use_stage1", s.use_stage1},
        {"smoothing",
         {{"enabled", s.smoothing.enabled},
          {"divisor", s.smoothing.divisor},
          {"i_min", s.smoothing.i_min},
          {"reproject_rows", true}}}}},
      {"engine", {{"n_workers", c.engine.n_workers}, {"deterministic", c.engine.deterministic}}},
      {"paths",
       {{"workdir", c.paths.workdir.string()},
        {"F", opt_path(c.paths.F)},
        {"P", opt_path(c.paths.P)},
        {"Pi_theo", opt_path(c.paths.Pi_theo)},
        {"Pi_rec", opt_path(c.paths.Pi_rec)}}},
      {"fidelity", {{"threshold", c.fidelity.threshold}, {"occupancy", c.fidelity.occupancy}}},
      {"wigner",
       {{"outcome", c.wigner.outcome},
        {"source", c.wigner.source},
        {"x", axis_json(c.wigner.x)},
        {"p", axis_json(c.wigner.p)},
        {"bits", c.wigner.bits}}},
      {"bench",
       {{"M_list", c.bench.M_list},
        {"N", c.bench.N},
        {"D", c.bench.D},
        {"workers", c.bench.workers},
        {"reps", c.bench.reps}}},
      {"memory_budget_gib", c.memory_budget_gib},
  };
}

}  // namespace pqdt::cli
