#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pqdt/analysis.hpp"
#include "pqdt/detector_model.hpp"
#include "pqdt/engine.hpp"
#include "pqdt/solver.hpp"

namespace pqdt::cli {

struct ProbeConfig {
  std::string mode = "quadratic";  // quadratic | explicit
  std::size_t D = 101;
  std::optional<double> scale;     // unset: largest scale <= 1 whose top band fits in M
  std::vector<double> list;        // explicit mean photon numbers
  double tail_mass_cutoff = kDefaultTailMassCutoff;
};

struct PathConfig {
  std::filesystem::path workdir = ".";
  std::optional<std::filesystem::path> F, P, Pi_theo, Pi_rec;
};

struct FidelityConfig {
  double threshold = 0.99;
  double occupancy = kDefaultOccupancyThreshold;
};

struct WignerConfig {
  std::size_t outcome = 1;
  std::string source = "Pi_theo";  // Pi_theo | Pi_rec | file path
  GridAxis x{-3.0, 3.0, 61};
  GridAxis p{-3.0, 3.0, 61};
  unsigned bits = kDefaultWignerBits;
};

struct BenchConfig {
  std::vector<std::size_t> M_list{100000};
  std::size_t N = 26;
  std::size_t D = 101;
  std::vector<std::size_t> workers{1, 2, 4, 8};
  std::size_t reps = 1;
};

struct RunConfig {
  DetectorParams detector;
  TruncationPolicy truncation = TruncationPolicy::drop_renormalize;
  ProbeConfig probes;
  std::size_t M = 10000;
  std::size_t N = 26;
  std::uint64_t trials = 500000;
  std::uint64_t seed = 1;
  SolverConfig solver = desk_scale_solver();
  EngineConfig engine;
  PathConfig paths;
  FidelityConfig fidelity;
  WignerConfig wigner;
  BenchConfig bench;
  double memory_budget_gib = 4.0;

  static SolverConfig desk_scale_solver();
  std::uint64_t memory_budget_bytes() const;
  std::filesystem::path path_F() const { return paths.F.value_or(paths.workdir / "F.pqdt"); }
  std::filesystem::path path_P() const { return paths.P.value_or(paths.workdir / "P.pqdt"); }
  std::filesystem::path path_Pi_theo() const { return paths.Pi_theo.value_or(paths.workdir / "Pi_theo.pqdt"); }
  std::filesystem::path path_Pi_rec() const { return paths.Pi_rec.value_or(paths.workdir / "Pi_rec.pqdt"); }

  /// Probe schedule for the configured mode; a fitted scale is resolved against M.
  ProbeSchedule schedule() const;
  double resolved_scale() const;
  void validate() const;
};

/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
/// Every field with its resolved value.
nlohmann::json config_to_json(const RunConfig& c);

const char* to_string(TruncationPolicy p);

}  // namespace pqdt::cli
