#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pqdt/big_float.hpp"
#include "pqdt/matrix.hpp"

namespace pqdt {

/// Fidelity of two diagonal operators: (sum sqrt(a_k b_k))^2 / (sum a_k * sum b_k), 0 if a trace is 0.
double fidelity(std::span<const double> a, std::span<const double> b);

inline constexpr double kDefaultOccupancyThreshold = 1e-3;

struct FidelityReport {
  std::vector<double> fidelity;
  std::vector<double> infidelity;
  std::vector<std::uint8_t> occupied;
  double mean_occupied = 0.0;
  double min_occupied = 0.0;
  std::size_t n_occupied = 0;
};

/// Per-outcome fidelity of reconstructed vs reference columns. Outcome n is occupied when the
/// reference column trace exceeds threshold * (largest reference column trace).
FidelityReport infidelity_report(const DenseMatrix& reconstructed, const DenseMatrix& reference,
                                 double occupancy_threshold = kDefaultOccupancyThreshold);

struct GridAxis {
  double min = 0.0;
  double max = 0.0;
  std::size_t points = 1;
  double at(std::size_t k) const noexcept {
    return points == 1 ? min : min + (max - min) * static_cast<double>(k) / static_cast<double>(points - 1);
  }
};

struct WignerGrid {
  GridAxis x, p;
  unsigned precision_bits = kDefaultWignerBits;
  std::vector<double> values;  // x-major: values[ix * p.points + ip]
  double operator()(std::size_t ix, std::size_t ip) const noexcept { return values[ix * p.points + ip]; }
  double min_value() const;
  std::pair<double, double> argmin() const;
};

/// W(x,p) = sum_k theta_k ((-1)^k / pi) exp(-(x^2+p^2)) L_k(2(x^2+p^2)), unit integral per Fock term.
/// Points are split across `n_workers` threads; points related by sign flips or x <-> p share one evaluation.
WignerGrid wigner_diag(std::span<const double> theta, const GridAxis& x, const GridAxis& p,
                       unsigned bits = kDefaultWignerBits, std::size_t n_workers = 1);

/// Trapezoidal integral of W over the grid.
double wigner_integral(const WignerGrid& grid);

struct PrecisionSweep {
  std::vector<unsigned> bits;
  std::vector<double> max_abs_deviation;  // vs the highest-precision run
  std::vector<bool> bit_identical;
  /// Smallest bits value from which every later run matches the reference bit for bit.
  std::optional<unsigned> stable_bits;
};

PrecisionSweep wigner_precision_sweep(std::span<const double> theta, const GridAxis& x, const GridAxis& p,
                                      std::span<const unsigned> bits_list, std::size_t n_workers = 1);

/// POVM heatmap as "i,n,value" rows. With log_bins > 0, rows are averaged over geometrically
/// growing bins of photon number and i is the first photon number of each bin.
void write_povm_csv(const DenseMatrix& Pi, const std::filesystem::path& path, std::size_t log_bins = 0);
void write_wigner_csv(const WignerGrid& grid, const std::filesystem::path& path);

}  // namespace pqdt
