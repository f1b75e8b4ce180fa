#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pqdt/matrix.hpp"

namespace pqdt {

/// Mean photon numbers |alpha_d|^2 of the coherent probes, strictly increasing.
class ProbeSchedule {
 public:
  ProbeSchedule() = default;
  explicit ProbeSchedule(std::vector<double> mean_photons);

  std::size_t size() const noexcept { return mean_photons_.size(); }
  double operator[](std::size_t d) const noexcept { return mean_photons_[d]; }
  const std::vector<double>& mean_photons() const noexcept { return mean_photons_; }

 private:
  std::vector<double> mean_photons_;
};

/// Time-multiplexed detector: a loop with out-coupling R and round-trip
/// efficiency eta_loop feeding J time bins of a click detector with
/// efficiency eta_det and per-bin dark-count probability p_dark.
struct DetectorParams {
  static constexpr double kDefaultDarkCount = 5e-8;

  double R = 0.91644;
  double eta_loop = 0.90524;
  double eta_det = 0.528;
  std::size_t J = 25;
  double p_dark = kDefaultDarkCount;

  void validate() const;
};

using BinClickVector = std::vector<double>;

/// Outcome-count handling when fewer than J + 1 outcomes are kept.
enum class TruncationPolicy { drop_renormalize, accumulate_last };

/// |alpha_d|^2 = scale * d^2 for d = 0..D-1.
ProbeSchedule probe_schedule_quadratic(std::size_t D, double scale = 1.0);

/// Largest scale <= 1 for which probe_schedule_quadratic(D, scale) fits into
/// M photon numbers at the given tail-mass cutoff.
double fit_quadratic_scale(std::size_t D, std::size_t M, double tail_mass_cutoff);

/// Contiguous run of the Poisson pmf holding all but `tail_mass_cutoff` of the mass.
struct PoissonBand {
  std::size_t start = 0;
  std::vector<double> values;
  std::size_t end() const noexcept { return start + values.size(); }
};
PoissonBand poisson_band(double mean, double tail_mass_cutoff);

inline constexpr double kDefaultTailMassCutoff = 1e-12;

/// Banded D x M matrix of photon-number distributions of the probes.
BandedMatrix build_probe_matrix(const ProbeSchedule& schedule, std::size_t M,
                                double tail_mass_cutoff = kDefaultTailMassCutoff);

/// Per-bin click probabilities for a coherent input of the given mean photon number.
BinClickVector bin_click_coherent(const DetectorParams& params, double mean_photons);

/// Per-bin click probabilities for an i-photon Fock input.
BinClickVector bin_click_fock(const DetectorParams& params, std::uint64_t photon_number);

/// Distribution of the number of clicks among independent bins, q_0..q_J.
/// Uses the DFT closed form above kConvolutionMaxBins bins, direct convolution otherwise.
std::vector<double> poisson_binomial(std::span<const double> p);
std::vector<double> poisson_binomial_dft(std::span<const double> p);
std::vector<double> poisson_binomial_convolution(std::span<const double> p);
inline constexpr std::size_t kConvolutionMaxBins = 20;

/// Theoretical POVM: row i is the click-count distribution for i photons.
/// N must not exceed J + 1; below J + 1 the tail outcomes are handled by `policy`.
PovmMatrix analytic_povm(const DetectorParams& params, std::size_t M, std::size_t N,
                         TruncationPolicy policy = TruncationPolicy::drop_renormalize);

/// Multinomial sampling of the exact outcome distributions F * Pi with
/// `trials` draws per probe; one RNG stream per probe row derived from (seed, d).
DenseMatrix simulate_outcomes(const BandedMatrix& F, const PovmMatrix& povm, std::uint64_t trials,
                              std::uint64_t seed);

/// F * Pi computed densely, rows renormalised to the probe mass they carry.
DenseMatrix exact_outcomes(const BandedMatrix& F, const DenseMatrix& povm);

struct DetectorFit {
  DetectorParams params;
  double residual = 0.0;  // sum of squared bin-click residuals
  int iterations = 0;
};

struct FitOptions {
  int max_iterations = 500;
  double step_tolerance = 1e-12;
};

/// Least-squares fit of (R, eta_loop, eta_det) to measured coherent bin-click
/// probabilities (one row per probe, J columns) with dark counts neglected.
DetectorFit fit_detector_params(const ProbeSchedule& schedule, const DenseMatrix& measured_bin_clicks,
                                const FitOptions& options = {});

/// Thrown by fit_detector_params when the iteration cap is hit; carries the best parameters found.
class FitError : public Error {
 public:
  FitError(const std::string& what, DetectorFit best) : Error(what), best_(std::move(best)) {}
  const DetectorFit& best() const noexcept { return best_; }

 private:
  DetectorFit best_;
};

}  // namespace pqdt
