#include <cfloat>
#include <cmath>
#include <complex>
#include <numbers>

#include "pqdt/detector_model.hpp"

namespace pqdt {
namespace {

void check_probabilities(std::span<const double> p) {
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("Poisson binomial: probability outside [0,1]");
  }
}

}  // namespace

std::vector<double> poisson_binomial_convolution(std::span<const double> p) {
  check_probabilities(p);
  std::vector<double> q(p.size() + 1, 0.0);
  q[0] = 1.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    for (std::size_t n = j + 1; n > 0; --n) q[n] = q[n] * (1.0 - p[j]) + q[n - 1] * p[j];
    q[0] *= 1.0 - p[j];
  }
  return q;
}

// q_n = 1/(J+1) sum_l w^{-ln} prod_j (1 + (w^l - 1) p_j),  w = exp(2 pi i / (J+1)).
std::vector<double> poisson_binomial_dft(std::span<const double> p) {
  check_probabilities(p);
  const std::size_t K = p.size() + 1;
  std::vector<std::complex<double>> roots(K);
  for (std::size_t l = 0; l < K; ++l) {
    roots[l] = std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(l) / static_cast<double>(K));
  }
  std::vector<std::complex<double>> z(K);
  for (std::size_t l = 0; l < K; ++l) {
    std::complex<double> prod = 1.0;
    const std::complex<double> wl_minus_1 = roots[l] - 1.0;
    for (double pj : p) prod *= 1.0 + wl_minus_1 * pj;
    z[l] = prod;
  }
  // Below this the transform cannot resolve a probability from round-off.
  const double floor = 4.0 * static_cast<double>(K) * DBL_EPSILON;
  std::vector<double> q(K);
  for (std::size_t n = 0; n < K; ++n) {
    double acc = 0.0;
    for (std::size_t l = 0; l < K; ++l) {
      acc += (z[l] * std::conj(roots[(l * n) % K])).real();
    }
    double v = acc / static_cast<double>(K);
    q[n] = v > floor ? v : 0.0;
  }
  return q;
}

std::vector<double> poisson_binomial(std::span<const double> p) {
  if (p.size() > kConvolutionMaxBins) return poisson_binomial_dft(p);
  return poisson_binomial_convolution(p);
}

}  // namespace pqdt
