#include <doctest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <random>

#include "pqdt/detector_model.hpp"
#include "test_util.hpp"

using namespace pqdt;
using big = boost::multiprecision::cpp_bin_float_50;

namespace {

big poisson_pmf(double mean, std::size_t i) {
  big m = mean, k = static_cast<double>(i);
  return exp(k * log(m) - m - boost::math::lgamma(k + 1));
}

// Independent oracle: sum over all 2^J click patterns.
std::vector<double> enumerate_clicks(const std::vector<double>& p) {
  const std::size_t J = p.size();
  std::vector<double> q(J + 1, 0.0);
  for (std::uint64_t mask = 0; mask < (1ull << J); ++mask) {
    double prob = 1.0;
    for (std::size_t j = 0; j < J; ++j) prob *= (mask >> j & 1) ? p[j] : 1.0 - p[j];
    q[static_cast<std::size_t>(__builtin_popcountll(mask))] += prob;
  }
  return q;
}

}  // namespace

TEST_CASE("Poisson bands hold all but the cutoff mass") {
  for (double mean : {1.0, 1e2, 1e4, 1e6}) {
    CAPTURE(mean);
    const PoissonBand band = poisson_band(mean, kDefaultTailMassCutoff);
    big kept = 0;
    double worst_rel = 0.0;
    for (std::size_t k = 0; k < band.values.size(); ++k) {
      big exact = poisson_pmf(mean, band.start + k);
      kept += exact;
      if (exact > 1e-300) {
        worst_rel = std::max(worst_rel, std::abs(static_cast<double>((band.values[k] - exact) / exact)));
      }
    }
    CHECK(static_cast<double>(1 - kept) <= kDefaultTailMassCutoff);
    CHECK(worst_rel < 1e-11);
    CHECK(band.start <= static_cast<std::size_t>(mean));
    CHECK(band.end() > static_cast<std::size_t>(mean));
  }
}

TEST_CASE("the 1e4 probe band is centred on its mean") {
  const PoissonBand band = poisson_band(1e4, kDefaultTailMassCutoff);
  const double centre = 0.5 * static_cast<double>(band.start + band.end());
  CHECK(std::abs(centre - 1e4) < 20.0);
  CHECK(band.values.size() / 2 > 300);
  CHECK(band.values.size() / 2 < 1000);
}

TEST_CASE("probe matrix rows and schedule") {
  const ProbeSchedule s = probe_schedule_quadratic(6);
  for (std::size_t d = 0; d < 6; ++d) CHECK(s[d] == static_cast<double>(d * d));
  CHECK_THROWS_AS(ProbeSchedule(std::vector<double>{1.0, 1.0}), ValidationError);

  const BandedMatrix F = build_probe_matrix(probe_schedule_quadratic(12), 300);
  for (std::size_t d = 0; d < F.rows(); ++d) {
    CHECK(F.row_sum(d) <= 1.0 + 1e-15);
    CHECK(F.row_sum(d) >= 1.0 - 2 * kDefaultTailMassCutoff);
  }
  CHECK(F.at(0, 0) == 1.0);
  CHECK_THROWS_AS(build_probe_matrix(probe_schedule_quadratic(12), 130), ValidationError);
  CHECK_THROWS_AS(build_probe_matrix(probe_schedule_quadratic(3), 30, 1e-5), ValidationError);
}

TEST_CASE("fitted quadratic scale is the largest that fits") {
  for (auto [D, M] : {std::pair<std::size_t, std::size_t>{8, 50}, {101, 10000}, {15, 200}}) {
    CAPTURE(D);
    const double s = fit_quadratic_scale(D, M, kDefaultTailMassCutoff);
    CHECK(s <= 1.0);
    CHECK_NOTHROW(build_probe_matrix(probe_schedule_quadratic(D, s), M));
    CHECK_THROWS_AS(build_probe_matrix(probe_schedule_quadratic(D, s * 1.01), M), ValidationError);
  }
  CHECK(fit_quadratic_scale(10, 1000, kDefaultTailMassCutoff) == 1.0);
}

TEST_CASE("Poisson binomial closed form matches subset enumeration") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t J = 1; J <= 15; ++J) {
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<double> p(J);
      for (double& v : p) v = u(rng);
      const auto ref = enumerate_clicks(p);
      const auto dft = poisson_binomial_dft(p);
      const auto conv = poisson_binomial_convolution(p);
      for (std::size_t n = 0; n <= J; ++n) {
        REQUIRE(std::abs(dft[n] - ref[n]) <= 1e-10);
        REQUIRE(std::abs(conv[n] - ref[n]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("Poisson binomial edge cases") {
  CHECK(poisson_binomial({}) == std::vector<double>{1.0});
  const auto q = poisson_binomial_dft(std::vector<double>{1.0, 0.0, 1.0});
  CHECK(q[2] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(q[0]) < 1e-14);
  std::vector<double> many(40, 0.3);
  double s = 0.0;
  for (double v : poisson_binomial(many)) {
    CHECK(v >= 0.0);
    s += v;
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("Fock click probabilities average to the coherent ones") {
  const DetectorParams params;
  for (double mean : {0.5, 5.0, 60.0}) {
    CAPTURE(mean);
    const PoissonBand band = poisson_band(mean, kDefaultTailMassCutoff);
    std::vector<double> mix(params.J, 0.0);
    for (std::size_t k = 0; k < band.values.size(); ++k) {
      const auto p = bin_click_fock(params, band.start + k);
      for (std::size_t j = 0; j < params.J; ++j) mix[j] += band.values[k] * (1.0 - p[j]);
    }
    const auto coh = bin_click_coherent(params, mean);
    for (std::size_t j = 0; j < params.J; ++j) CHECK(std::abs(mix[j] - (1.0 - coh[j])) <= 1e-10);
  }
}

TEST_CASE("analytic POVM rows and truncation policies") {
  DetectorParams params;
  params.J = 6;
  const PovmMatrix full = analytic_povm(params, 40, 7);
  CHECK(full(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  for (std::size_t i = 1; i < 40; ++i) CHECK(full(i, 0) < full(i - 1, 0));

  const PovmMatrix drop = analytic_povm(params, 40, 4, TruncationPolicy::drop_renormalize);
  const PovmMatrix acc = analytic_povm(params, 40, 4, TruncationPolicy::accumulate_last);
  for (std::size_t i = 0; i < 40; ++i) {
    double kept = 0.0, tail = 0.0;
    for (std::size_t n = 0; n < 7; ++n) (n < 4 ? kept : tail) += full(i, n);
    for (std::size_t n = 0; n < 4; ++n) CHECK(drop(i, n) == doctest::Approx(full(i, n) / kept).epsilon(1e-12));
    CHECK(acc(i, 3) == doctest::Approx(full(i, 3) + tail).epsilon(1e-12));
  }
  CHECK_THROWS_AS(analytic_povm(params, 40, 8), ValidationError);
}

TEST_CASE("simulation is reproducible and unbiased") {
  DetectorParams params;
  params.J = 4;
  const BandedMatrix F = build_probe_matrix(probe_schedule_quadratic(8, fit_quadratic_scale(8, 50, 1e-12)), 50);
  const PovmMatrix povm = analytic_povm(params, 50, 5);
  const DenseMatrix a = simulate_outcomes(F, povm, 100000, 9);
  const DenseMatrix b = simulate_outcomes(F, povm, 100000, 9);
  const DenseMatrix c = simulate_outcomes(F, povm, 100000, 10);
  CHECK(a.bit_equal(b));
  CHECK_FALSE(a.bit_equal(c));
  const DenseMatrix exact = exact_outcomes(F, povm.matrix());
  for (std::size_t d = 0; d < a.rows(); ++d) {
    double s = 0.0;
    for (std::size_t n = 0; n < a.cols(); ++n) {
      s += a(d, n);
      const double sigma = std::sqrt(exact(d, n) * (1 - exact(d, n)) / 1e5);
      CHECK(std::abs(a(d, n) - exact(d, n)) <= 6 * sigma + 1e-12);
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("detector fit recovers the generating parameters") {
  DetectorParams truth;
  truth.p_dark = 0.0;
  const ProbeSchedule s = probe_schedule_quadratic(20);
  DenseMatrix clicks(s.size(), truth.J);
  for (std::size_t d = 0; d < s.size(); ++d) {
    const auto p = bin_click_coherent(truth, s[d]);
    std::copy(p.begin(), p.end(), clicks.row(d).begin());
  }
  const DetectorFit fit = fit_detector_params(s, clicks);
  CHECK(fit.params.R == doctest::Approx(truth.R).epsilon(1e-6));
  CHECK(fit.params.eta_loop == doctest::Approx(truth.eta_loop).epsilon(1e-6));
  CHECK(fit.params.eta_det == doctest::Approx(truth.eta_det).epsilon(1e-6));
}
