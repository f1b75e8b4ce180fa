#include <doctest.h>

#include <boost/math/constants/constants.hpp>
#include <boost/math/special_functions/laguerre.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <fstream>
#include <random>

#include "pqdt/analysis.hpp"
#include "pqdt/detector_model.hpp"

using namespace pqdt;
using big = boost::multiprecision::cpp_bin_float_50;

namespace {

const double kPi = boost::math::constants::pi<double>();

double wigner_oracle(const std::vector<double>& theta, double x, double p) {
  const big z = 2 * (big(x) * x + big(p) * p);
  big acc = 0;
  for (unsigned k = 0; k < theta.size(); ++k) {
    const big term = theta[k] * boost::math::laguerre(k, z);
    acc += (k % 2 ? -term : term);
  }
  return static_cast<double>(acc * exp(-z / 2) / boost::math::constants::pi<big>());
}

std::string first_line(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::string s;
  std::getline(is, s);
  return s;
}

}  // namespace

TEST_CASE("fidelity of diagonal operators") {
  const std::vector<double> a{0.2, 0.3, 0.5}, b{0.5, 0.0, 0.5};
  CHECK(fidelity(a, a) == doctest::Approx(1.0));
  std::vector<double> scaled{0.4, 0.6, 1.0};
  CHECK(fidelity(a, scaled) == doctest::Approx(1.0));
  const double o = std::sqrt(0.1) + 0.5;
  CHECK(fidelity(a, b) == doctest::Approx(o * o));
  CHECK(fidelity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(fidelity(std::vector<double>{0, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK_THROWS_AS(fidelity(std::vector<double>{-1.0}, std::vector<double>{1.0}), ValidationError);
  CHECK_THROWS_AS(fidelity(a, std::vector<double>{1.0}), ValidationError);
}

TEST_CASE("infidelity report and occupancy") {
  DenseMatrix ref(4, 3, std::vector<double>{1, 0, 0, 0.5, 0.5, 0, 0.5, 0.4999, 1e-4, 0, 1, 0});
  const FidelityReport same = infidelity_report(ref, ref);
  CHECK(same.n_occupied == 2);
  CHECK_FALSE(same.occupied[2]);
  CHECK(same.mean_occupied == doctest::Approx(1.0));
  CHECK(same.min_occupied == doctest::Approx(1.0));

  DenseMatrix rec = ref;
  rec(0, 0) = 0.9;
  rec(0, 1) = 0.1;
  const FidelityReport r = infidelity_report(rec, ref);
  CHECK(r.fidelity[0] < 1.0);
  CHECK(r.infidelity[0] == doctest::Approx(1.0 - r.fidelity[0]));
  CHECK(r.min_occupied == doctest::Approx(std::min(r.fidelity[0], r.fidelity[1])));
  CHECK(infidelity_report(rec, ref, 1e-5).n_occupied == 3);
  CHECK_THROWS_AS(infidelity_report(DenseMatrix(3, 3), ref), ValidationError);
}

TEST_CASE("Wigner values at the origin for Fock states") {
  const GridAxis origin{0.0, 0.0, 1};
  CHECK(std::abs(wigner_diag(std::vector<double>{1.0}, origin, origin)(0, 0) - 1.0 / kPi) <= 1e-12);
  CHECK(std::abs(wigner_diag(std::vector<double>{0.0, 1.0}, origin, origin)(0, 0) + 1.0 / kPi) <= 1e-12);
  for (unsigned k = 0; k < 40; ++k) {
    std::vector<double> theta(k + 1, 0.0);
    theta[k] = 1.0;
    const double expect = (k % 2 ? -1.0 : 1.0) / kPi;
    CHECK(std::abs(wigner_series(theta, 0.0, 0.0, 70) - expect) <= 1e-12);
  }
}

TEST_CASE("Wigner series matches a 50-digit Laguerre oracle") {
  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(0.0, 1.0), pos(-4.0, 4.0);
  std::vector<double> theta(60);
  for (double& t : theta) t = u(rng);
  for (int rep = 0; rep < 30; ++rep) {
    const double x = pos(rng), p = pos(rng);
    CAPTURE(x);
    CAPTURE(p);
    CHECK(wigner_series(theta, x, p, 120) == doctest::Approx(wigner_oracle(theta, x, p)).epsilon(1e-12).scale(1e-15));
  }
}

TEST_CASE("Wigner grid symmetry, integral and negativity") {
  std::vector<double> theta(6, 0.0);
  theta[1] = 0.6;
  theta[3] = 0.4;
  const double r = 6.0 * std::sqrt(4.0);
  const GridAxis ax{-r, r, 121};
  const WignerGrid g = wigner_diag(theta, ax, ax, 70, 3);
  CHECK(g(10, 20) == g(20, 10));
  CHECK(g(10, 20) == g(110, 100));
  CHECK(wigner_integral(g) == doctest::Approx(1.0).epsilon(0.01));
  CHECK(g.min_value() < 0.0);
  const WignerGrid serial = wigner_diag(theta, ax, ax, 70, 1);
  CHECK(serial.values == g.values);

  CHECK_THROWS_AS(wigner_diag(theta, GridAxis{0, 1, 0}, ax), ValidationError);
  CHECK_THROWS_AS(wigner_diag(std::vector<double>{-0.1}, ax, ax), ValidationError);
  CHECK_THROWS_AS(wigner_diag(theta, ax, ax, 40), ValidationError);
}

TEST_CASE("analytic one-click element has a negative Wigner function") {
  const PovmMatrix povm = analytic_povm(DetectorParams{}, 200, 26);
  const GridAxis ax{-1.0, 1.0, 11};
  const WignerGrid g = wigner_diag(povm.column(1), ax, ax);
  CHECK(g.min_value() < 0.0);
  const auto [x, p] = g.argmin();
  CHECK(std::abs(x) < 0.5);
  CHECK(std::abs(p) < 0.5);
  // The no-click element of this lossy detector is close to classical.
  const WignerGrid g0 = wigner_diag(povm.column(0), ax, ax);
  double top = 0.0;
  for (double v : g0.values) top = std::max(top, v);
  CHECK(g0.min_value() >= -1e-6 * top);
}

TEST_CASE("precision sweep") {
  std::vector<double> theta(300, 0.0);
  for (std::size_t k = 0; k < theta.size(); ++k) theta[k] = std::exp(-0.02 * static_cast<double>(k));
  const GridAxis ax{0.0, 3.0, 4};
  const std::vector<unsigned> bits{53, 64, 70, 80, 96};
  const PrecisionSweep s = wigner_precision_sweep(theta, ax, ax, bits);
  CHECK(s.bits == bits);
  CHECK(s.max_abs_deviation.back() == 0.0);
  CHECK(s.bit_identical.back());
  REQUIRE(s.stable_bits.has_value());
  CHECK(*s.stable_bits <= 96);
  CHECK_THROWS_AS(wigner_precision_sweep(theta, ax, ax, std::vector<unsigned>{}), ValidationError);
  CHECK_THROWS_AS(wigner_precision_sweep(theta, ax, ax, std::vector<unsigned>{70, 64}), ValidationError);
}

TEST_CASE("CSV writers") {
  const auto dir = std::filesystem::temp_directory_path() / "pqdt_analysis_test";
  std::filesystem::create_directories(dir);
  DenseMatrix Pi(100, 2, 0.5);
  write_povm_csv(Pi, dir / "povm.csv", 4);
  CHECK(first_line(dir / "povm.csv") == "i,n,value");
  std::ifstream is(dir / "povm.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 1 + 2 * 4);

  const GridAxis origin{0.0, 0.0, 1};
  write_wigner_csv(wigner_diag(std::vector<double>{1.0}, origin, origin), dir / "w.csv");
  std::ifstream w(dir / "w.csv");
  std::getline(w, line);
  CHECK(line == "x,p,W");
  std::getline(w, line);
  CHECK(line.substr(0, 4) == "0,0,");
  CHECK(std::stod(line.substr(4)) == doctest::Approx(1.0 / kPi).epsilon(1e-15));
}
