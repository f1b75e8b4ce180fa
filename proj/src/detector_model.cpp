#include "pqdt/detector_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace pqdt {

ProbeSchedule::ProbeSchedule(std::vector<double> mean_photons) : mean_photons_(std::move(mean_photons)) {
  if (mean_photons_.empty()) throw ValidationError("probe schedule is empty");
  if (!(mean_photons_.front() >= 0.0)) throw ValidationError("probe schedule starts below zero");
  for (std::size_t d = 0; d < mean_photons_.size(); ++d) {
    if (!std::isfinite(mean_photons_[d])) throw ValidationError("probe schedule has a non-finite mean");
    if (d > 0 && !(mean_photons_[d] > mean_photons_[d - 1])) {
      throw ValidationError("probe schedule is not strictly increasing at d=" + std::to_string(d));
    }
  }
}

void DetectorParams::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!(R > 0.0 && R < 1.0)) throw ValidationError("detector: R must lie in (0,1)");
  if (!(eta_loop > 0.0 && eta_loop <= 1.0)) throw ValidationError("detector: eta_loop must lie in (0,1]");
  if (!(eta_det > 0.0 && eta_det <= 1.0)) throw ValidationError("detector: eta_det must lie in (0,1]");
  if (!in_unit(p_dark)) throw ValidationError("detector: p_dark must lie in [0,1]");
  if (J < 1) throw ValidationError("detector: need at least one time bin");
}

ProbeSchedule probe_schedule_quadratic(std::size_t D, double scale) {
  if (D < 1) throw ValidationError("probe schedule needs D >= 1");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ValidationError("probe schedule scale must be positive");
  std::vector<double> means(D);
  for (std::size_t d = 0; d < D; ++d) means[d] = scale * (static_cast<double>(d) * static_cast<double>(d));
  return ProbeSchedule(std::move(means));
}

PoissonBand poisson_band(double mean, double tail_mass_cutoff) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw ValidationError("Poisson mean must be finite and >= 0");
  if (!(tail_mass_cutoff > 0.0)) throw ValidationError("tail-mass cutoff must be positive");
  PoissonBand band;
  if (mean == 0.0) {
    band.values = {1.0};
    return band;
  }
  using ld = long double;
  const ld log_mean = std::log(static_cast<ld>(mean));
  auto pmf = [&](std::size_t i) -> ld {
    ld x = static_cast<ld>(i);
    return std::exp(x * log_mean - static_cast<ld>(mean) - std::lgamma(x + 1.0L));
  };
  auto mode = static_cast<std::size_t>(std::floor(mean));
  std::size_t lo = mode, hi = mode;
  std::vector<ld> left, right;  // left grows downward from mode-1, right upward from mode
  right.push_back(pmf(mode));
  ld mass = right.back();
  ld next_left = lo > 0 ? pmf(lo - 1) : 0.0L;
  ld next_right = pmf(hi + 1);
  const ld cutoff = tail_mass_cutoff;
  // Half the cutoff: leaves room for rounding in the long double pmf at large means.
  while (1.0L - mass > 0.5L * cutoff) {
    if (lo > 0 && next_left >= next_right) {
      --lo;
      left.push_back(next_left);
      mass += next_left;
      next_left = lo > 0 ? pmf(lo - 1) : 0.0L;
    } else {
      ++hi;
      right.push_back(next_right);
      mass += next_right;
      next_right = pmf(hi + 1);
    }
    if (next_left == 0.0L && next_right == 0.0L) break;  // underflow: nothing left to add
  }
  band.start = lo;
  band.values.reserve(left.size() + right.size());
  for (auto it = left.rbegin(); it != left.rend(); ++it) band.values.push_back(static_cast<double>(*it));
  for (ld v : right) band.values.push_back(static_cast<double>(v));
  return band;
}

double fit_quadratic_scale(std::size_t D, std::size_t M, double tail_mass_cutoff) {
  if (D <= 1) return 1.0;
  const double top = static_cast<double>(D - 1) * static_cast<double>(D - 1);
  auto fits = [&](double s) { return poisson_band(s * top, tail_mass_cutoff).end() <= M; };
  if (fits(1.0)) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 60; ++it) {
    double mid = 0.5 * (lo + hi);
    (fits(mid) ? lo : hi) = mid;
  }
  if (lo == 0.0) {
    throw ValidationError("M=" + std::to_string(M) + " cannot hold any quadratic schedule with D=" +
                          std::to_string(D));
  }
  return lo;
}

BandedMatrix build_probe_matrix(const ProbeSchedule& schedule, std::size_t M, double tail_mass_cutoff) {
  if (M < 1) throw ValidationError("probe matrix needs M >= 1");
  if (!(tail_mass_cutoff > 0.0 && tail_mass_cutoff <= 1e-6)) {
    throw ValidationError("tail-mass cutoff must lie in (0, 1e-6]");
  }
  const std::size_t D = schedule.size();
  std::vector<std::size_t> starts(D), lengths(D);
  std::vector<double> values;
  for (std::size_t d = 0; d < D; ++d) {
    PoissonBand band = poisson_band(schedule[d], tail_mass_cutoff);
    if (band.end() > M) {
      throw ValidationError("probe row d=" + std::to_string(d) + " (mean " + std::to_string(schedule[d]) +
                            ") needs photon numbers up to " + std::to_string(band.end() - 1) +
                            " but M=" + std::to_string(M));
    }
    starts[d] = band.start;
    lengths[d] = band.values.size();
    values.insert(values.end(), band.values.begin(), band.values.end());
  }
  return BandedMatrix(D, M, std::move(starts), std::move(lengths), std::move(values));
}

namespace {

// Per-photon click probability of bin j (1-based): R*eta_det for the first
// bin, (1-R)^2/R * (R*eta_loop)^(j-1) * eta_det afterwards.
double bin_coupling(const DetectorParams& p, std::size_t j) {
  if (j == 1) return p.R * p.eta_det;
  return (1.0 - p.R) * (1.0 - p.R) / p.R * std::pow(p.R * p.eta_loop, static_cast<double>(j - 1)) * p.eta_det;
}

double with_dark_counts(double p, double p_dark) { return p + p_dark - p * p_dark; }

}  // namespace

BinClickVector bin_click_coherent(const DetectorParams& params, double mean_photons) {
  if (!(mean_photons >= 0.0)) throw ValidationError("mean photon number must be >= 0");
  BinClickVector p(params.J);
  for (std::size_t j = 1; j <= params.J; ++j) {
    double click = -std::expm1(-bin_coupling(params, j) * mean_photons);
    p[j - 1] = with_dark_counts(click, params.p_dark);
  }
  return p;
}

BinClickVector bin_click_fock(const DetectorParams& params, std::uint64_t photon_number) {
  BinClickVector p(params.J, 0.0);
  const double i = static_cast<double>(photon_number);
  for (std::size_t j = 1; j <= params.J; ++j) {
    double click = 0.0;
    if (photon_number > 0) {
      double x = bin_coupling(params, j);
      click = x >= 1.0 ? 1.0 : -std::expm1(i * std::log1p(-x));
    }
    p[j - 1] = with_dark_counts(click, params.p_dark);
  }
  return p;
}

PovmMatrix analytic_povm(const DetectorParams& params, std::size_t M, std::size_t N, TruncationPolicy policy) {
  params.validate();
  if (M < 1) throw ValidationError("analytic POVM needs M >= 1");
  if (N < 1 || N > params.J + 1) {
    throw ValidationError("analytic POVM: N=" + std::to_string(N) + " is inconsistent with J=" +
                          std::to_string(params.J) + " bins (need 1 <= N <= J+1)");
  }
  DenseMatrix out(M, N);
  for (std::size_t i = 0; i < M; ++i) {
    std::vector<double> q = poisson_binomial(bin_click_fock(params, i));
    auto row = out.row(i);
    std::copy_n(q.begin(), N, row.begin());
    if (N == q.size()) continue;
    double tail = 0.0;
    for (std::size_t n = N; n < q.size(); ++n) tail += q[n];
    double kept = 0.0;
    for (double v : row) kept += v;
    if (policy == TruncationPolicy::accumulate_last || kept == 0.0) {
      row[N - 1] += tail;
    } else {
      for (double& v : row) v /= kept;
    }
  }
  return PovmMatrix(std::move(out), 1e-12);
}

DenseMatrix exact_outcomes(const BandedMatrix& F, const DenseMatrix& povm) {
  if (F.cols() != povm.rows()) {
    throw ValidationError("F has " + std::to_string(F.cols()) + " photon numbers, POVM has " +
                          std::to_string(povm.rows()));
  }
  DenseMatrix out(F.rows(), povm.cols());
  for (std::size_t d = 0; d < F.rows(); ++d) {
    auto band = F.band(d);
    auto dst = out.row(d);
    for (std::size_t k = 0; k < band.size(); ++k) {
      auto src = povm.row(F.band_start(d) + k);
      for (std::size_t n = 0; n < dst.size(); ++n) dst[n] += band[k] * src[n];
    }
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

DenseMatrix simulate_outcomes(const BandedMatrix& F, const PovmMatrix& povm, std::uint64_t trials,
                              std::uint64_t seed) {
  if (trials < 1) throw ValidationError("simulation needs at least one trial");
  DenseMatrix exact = exact_outcomes(F, povm.matrix());
  DenseMatrix out(exact.rows(), exact.cols());
  const double inv_trials = 1.0 / static_cast<double>(trials);
  for (std::size_t d = 0; d < exact.rows(); ++d) {
    auto p = exact.row(d);
    double total = 0.0;
    for (double v : p) total += v;
    if (std::abs(total - 1.0) > 1e-9) {
      throw ValidationError("probe d=" + std::to_string(d) + ": outcome distribution sums to " +
                            std::to_string(total) + " (probe matrix truncated too aggressively?)");
    }
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(d + 1)));
    std::uint64_t remaining = trials;
    double remaining_mass = total;
    auto dst = out.row(d);
    for (std::size_t n = 0; n + 1 < p.size() && remaining > 0; ++n) {
      double q = remaining_mass > 0.0 ? std::clamp(p[n] / remaining_mass, 0.0, 1.0) : 0.0;
      std::binomial_distribution<std::uint64_t> draw(remaining, q);
      std::uint64_t k = q >= 1.0 ? remaining : (q <= 0.0 ? 0 : draw(rng));
      dst[n] = static_cast<double>(k) * inv_trials;
      remaining -= k;
      remaining_mass -= p[n];
    }
    dst[p.size() - 1] = static_cast<double>(remaining) * inv_trials;
  }
  return out;
}

namespace {

struct FitModel {
  const std::vector<double>& means;
  const DenseMatrix& measured;
  std::vector<std::size_t> rows;  // probes with light

  // Residuals r = model - measured and Jacobian w.r.t. the logits.
  double evaluate(const std::array<double, 3>& theta, std::vector<double>* r,
                  std::vector<std::array<double, 3>>* jac) const {
    const auto [R, eta_loop, eta_det] = theta;
    const std::size_t J = measured.cols();
    double sse = 0.0;
    std::size_t k = 0;
    for (std::size_t d : rows) {
      const double mu = means[d];
      for (std::size_t j = 1; j <= J; ++j, ++k) {
        double a, da_dR, da_dloop, da_ddet;
        if (j == 1) {
          a = R * eta_det * mu;
          da_dR = eta_det * mu;
          da_dloop = 0.0;
          da_ddet = R * mu;
        } else {
          a = (1.0 - R) * (1.0 - R) * std::pow(R, static_cast<double>(j) - 2.0) *
              std::pow(eta_loop, static_cast<double>(j) - 1.0) * eta_det * mu;
          da_dR = a * (-2.0 / (1.0 - R) + (static_cast<double>(j) - 2.0) / R);
          da_dloop = a * (static_cast<double>(j) - 1.0) / eta_loop;
          da_ddet = a / eta_det;
        }
        const double survive = std::exp(-a);
        const double res = (1.0 - survive) - measured(d, j - 1);
        sse += res * res;
        if (r) (*r)[k] = res;
        if (jac) {
          (*jac)[k] = {survive * da_dR * R * (1.0 - R), survive * da_dloop * eta_loop * (1.0 - eta_loop),
                       survive * da_ddet * eta_det * (1.0 - eta_det)};
        }
      }
    }
    return sse;
  }
};

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }
double logit(double t) { return std::log(t / (1.0 - t)); }

std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> A, std::array<double, 3> b) {
  for (int c = 0; c < 3; ++c) {
    int piv = c;
    for (int r = c + 1; r < 3; ++r) {
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    }
    std::swap(A[c], A[piv]);
    std::swap(b[c], b[piv]);
    if (A[c][c] == 0.0) return {0.0, 0.0, 0.0};
    for (int r = c + 1; r < 3; ++r) {
      double f = A[r][c] / A[c][c];
      for (int k = c; k < 3; ++k) A[r][k] -= f * A[c][k];
      b[r] -= f * b[c];
    }
  }
  std::array<double, 3> x{};
  for (int r = 2; r >= 0; --r) {
    double s = b[r];
    for (int k = r + 1; k < 3; ++k) s -= A[r][k] * x[k];
    x[r] = s / A[r][r];
  }
  return x;
}

}  // namespace

DetectorFit fit_detector_params(const ProbeSchedule& schedule, const DenseMatrix& measured,
                                const FitOptions& options) {
  if (measured.rows() != schedule.size()) {
    throw ValidationError("fit: " + std::to_string(measured.rows()) + " measured rows for " +
                          std::to_string(schedule.size()) + " probes");
  }
  if (measured.cols() < 1) throw ValidationError("fit: need at least one time bin");
  FitModel model{schedule.mean_photons(), measured, {}};
  for (std::size_t d = 0; d < schedule.size(); ++d) {
    if (schedule[d] > 0.0) model.rows.push_back(d);
  }
  if (model.rows.size() < 3) {
    throw ValidationError("fit: need at least 3 probe states with nonzero light, got " +
                          std::to_string(model.rows.size()));
  }

  const std::size_t n_res = model.rows.size() * measured.cols();
  std::vector<double> r(n_res);
  std::vector<std::array<double, 3>> jac(n_res);

  std::array<double, 3> u{logit(0.9), logit(0.9), logit(0.5)};
  auto to_theta = [](const std::array<double, 3>& x) {
    return std::array<double, 3>{logistic(x[0]), logistic(x[1]), logistic(x[2])};
  };
  auto make_fit = [&](const std::array<double, 3>& theta, double sse, int it) {
    DetectorFit fit;
    fit.params.R = theta[0];
    fit.params.eta_loop = theta[1];
    fit.params.eta_det = theta[2];
    fit.params.J = measured.cols();
    fit.params.p_dark = 0.0;
    fit.residual = sse;
    fit.iterations = it;
    return fit;
  };

  std::array<double, 3> theta = to_theta(u);
  double sse = model.evaluate(theta, &r, &jac);
  for (int it = 1; it <= options.max_iterations; ++it) {
    std::array<std::array<double, 3>, 3> JtJ{};
    std::array<double, 3> Jtr{};
    for (std::size_t k = 0; k < n_res; ++k) {
      for (int a = 0; a < 3; ++a) {
        Jtr[a] -= jac[k][a] * r[k];
        for (int b = 0; b < 3; ++b) JtJ[a][b] += jac[k][a] * jac[k][b];
      }
    }
    const double ridge = 1e-14 * (JtJ[0][0] + JtJ[1][1] + JtJ[2][2]);
    for (int a = 0; a < 3; ++a) JtJ[a][a] += ridge;
    std::array<double, 3> step = solve3(JtJ, Jtr);

    double t = 1.0;
    bool improved = false;
    std::array<double, 3> u_new{}, theta_new{};
    double sse_new = sse;
    for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
      for (int a = 0; a < 3; ++a) u_new[a] = u[a] + t * step[a];
      theta_new = to_theta(u_new);
      sse_new = model.evaluate(theta_new, nullptr, nullptr);
      if (std::isfinite(sse_new) && sse_new < sse) {
        improved = true;
        break;
      }
    }
    if (!improved) return make_fit(theta, sse, it);  // no descent left at double precision

    double change = 0.0;
    for (int a = 0; a < 3; ++a) change = std::max(change, std::abs(theta_new[a] - theta[a]));
    u = u_new;
    theta = theta_new;
    sse = model.evaluate(theta, &r, &jac);
    if (change < options.step_tolerance || sse == 0.0) return make_fit(theta, sse, it);
  }
  throw FitError("detector fit did not converge within " + std::to_string(options.max_iterations) +
                     " iterations",
                 make_fit(theta, sse, options.max_iterations));
}

}  // namespace pqdt
