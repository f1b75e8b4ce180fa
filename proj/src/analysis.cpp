#include "pqdt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "pqdt/engine.hpp"

namespace pqdt {
namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  return os;
}

void finish(std::ofstream& os, const std::filesystem::path& path) {
  os.flush();
  if (!os) throw IoError("write to " + path.string() + " failed");
}

void check_axis(const GridAxis& a, const char* name) {
  if (a.points == 0) throw ValidationError(std::string("Wigner grid axis ") + name + " has no points");
  if (!std::isfinite(a.min) || !std::isfinite(a.max)) {
    throw ValidationError(std::string("Wigner grid axis ") + name + " is not finite");
  }
}

}  // namespace

double fidelity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("fidelity: operators differ in dimension");
  double overlap = 0.0, ta = 0.0, tb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!(a[k] >= 0.0) || !(b[k] >= 0.0)) throw ValidationError("fidelity: negative or NaN weight");
    overlap += std::sqrt(a[k] * b[k]);
    ta += a[k];
    tb += b[k];
  }
  if (ta == 0.0 || tb == 0.0) return 0.0;
  return std::min(1.0, overlap * overlap / (ta * tb));
}

FidelityReport infidelity_report(const DenseMatrix& rec, const DenseMatrix& ref, double threshold) {
  if (!rec.same_shape(ref)) throw ValidationError("infidelity_report: shapes differ");
  const std::size_t M = ref.rows(), N = ref.cols();
  FidelityReport out;
  out.fidelity.resize(N);
  out.infidelity.resize(N);
  out.occupied.resize(N);
  std::vector<double> trace(N, 0.0);
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t n = 0; n < N; ++n) trace[n] += ref(i, n);
  }
  const double max_trace = N ? *std::max_element(trace.begin(), trace.end()) : 0.0;
  std::vector<double> a(M), b(M);
  double sum = 0.0;
  out.min_occupied = 1.0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t i = 0; i < M; ++i) {
      a[i] = rec(i, n);
      b[i] = ref(i, n);
    }
    out.fidelity[n] = fidelity(a, b);
    out.infidelity[n] = 1.0 - out.fidelity[n];
    out.occupied[n] = trace[n] > threshold * max_trace;
    if (out.occupied[n]) {
      ++out.n_occupied;
      sum += out.fidelity[n];
      out.min_occupied = std::min(out.min_occupied, out.fidelity[n]);
    }
  }
  out.mean_occupied = out.n_occupied ? sum / static_cast<double>(out.n_occupied) : 0.0;
  if (!out.n_occupied) out.min_occupied = 0.0;
  return out;
}

double WignerGrid::min_value() const {
  if (values.empty()) throw ValidationError("empty Wigner grid");
  return *std::min_element(values.begin(), values.end());
}

std::pair<double, double> WignerGrid::argmin() const {
  if (values.empty()) throw ValidationError("empty Wigner grid");
  const std::size_t k = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
  return {x.at(k / p.points), p.at(k % p.points)};
}

WignerGrid wigner_diag(std::span<const double> theta, const GridAxis& x, const GridAxis& p, unsigned bits,
                       std::size_t n_workers) {
  check_axis(x, "x");
  check_axis(p, "p");
  for (double t : theta) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("Wigner weights must be finite and non-negative");
  }
  if (bits < kMinWignerBits) throw ValidationError("Wigner precision must be at least 53 bits");

  WignerGrid grid{x, p, bits, std::vector<double>(x.points * p.points)};
  // W depends on (x, p) only through {|x|, |p|}; evaluate each such pair once.
  std::map<std::pair<double, double>, std::size_t> index;
  std::vector<std::pair<double, double>> unique;
  std::vector<std::size_t> slot(grid.values.size());
  for (std::size_t ix = 0; ix < x.points; ++ix) {
    for (std::size_t ip = 0; ip < p.points; ++ip) {
      double a = std::abs(x.at(ix)), b = std::abs(p.at(ip));
      auto key = std::minmax(a, b);
      auto [it, inserted] = index.try_emplace(key, unique.size());
      if (inserted) unique.push_back(key);
      slot[ix * p.points + ip] = it->second;
    }
  }
  std::vector<double> value(unique.size());
  WorkerPool pool(std::max<std::size_t>(1, n_workers));
  pool.run([&](std::size_t w) {
    for (std::size_t k = w; k < unique.size(); k += pool.size()) {
      value[k] = wigner_series(theta, unique[k].first, unique[k].second, bits);
    }
  });
  for (std::size_t k = 0; k < slot.size(); ++k) grid.values[k] = value[slot[k]];
  return grid;
}

double wigner_integral(const WignerGrid& g) {
  auto weights = [](const GridAxis& a) {
    std::vector<double> w(a.points, 0.0);
    if (a.points < 2) return w;
    const double h = (a.max - a.min) / static_cast<double>(a.points - 1);
    for (std::size_t k = 0; k < a.points; ++k) w[k] = (k == 0 || k + 1 == a.points) ? h / 2 : h;
    return w;
  };
  const auto wx = weights(g.x), wp = weights(g.p);
  double acc = 0.0;
  for (std::size_t ix = 0; ix < g.x.points; ++ix) {
    for (std::size_t ip = 0; ip < g.p.points; ++ip) acc += wx[ix] * wp[ip] * g(ix, ip);
  }
  return acc;
}

PrecisionSweep wigner_precision_sweep(std::span<const double> theta, const GridAxis& x, const GridAxis& p,
                                      std::span<const unsigned> bits_list, std::size_t n_workers) {
  if (bits_list.empty()) throw ValidationError("precision sweep needs at least one precision");
  if (!std::is_sorted(bits_list.begin(), bits_list.end()) ||
      std::adjacent_find(bits_list.begin(), bits_list.end()) != bits_list.end()) {
    throw ValidationError("precision sweep bits must be strictly ascending");
  }
  std::vector<WignerGrid> runs;
  runs.reserve(bits_list.size());
  for (unsigned b : bits_list) runs.push_back(wigner_diag(theta, x, p, b, n_workers));
  const auto& ref = runs.back().values;

  PrecisionSweep out;
  out.bits.assign(bits_list.begin(), bits_list.end());
  for (const auto& r : runs) {
    double dev = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k) dev = std::max(dev, std::abs(r.values[k] - ref[k]));
    out.max_abs_deviation.push_back(dev);
    out.bit_identical.push_back(DenseMatrix(1, ref.size(), r.values).bit_equal(DenseMatrix(1, ref.size(), ref)));
  }
  for (std::size_t k = out.bits.size(); k-- > 0;) {
    if (!out.bit_identical[k]) break;
    out.stable_bits = out.bits[k];
  }
  return out;
}

void write_povm_csv(const DenseMatrix& Pi, const std::filesystem::path& path, std::size_t log_bins) {
  const std::size_t M = Pi.rows(), N = Pi.cols();
  std::vector<std::size_t> edges;
  if (log_bins == 0) {
    for (std::size_t i = 0; i <= M; ++i) edges.push_back(i);
  } else {
    edges.push_back(0);
    for (std::size_t b = 1; b <= log_bins; ++b) {
      auto e = static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(M), static_cast<double>(b) / log_bins)));
      e = std::min(e, M);
      if (e > edges.back()) edges.push_back(e);
    }
    if (edges.back() != M) edges.push_back(M);
  }
  auto os = open_for_write(path);
  os << "i,n,value\n";
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    const std::size_t lo = edges[b], hi = edges[b + 1];
    for (std::size_t n = 0; n < N; ++n) {
      double acc = 0.0;
      for (std::size_t i = lo; i < hi; ++i) acc += Pi(i, n);
      os << lo << ',' << n << ',' << fmt17(acc / static_cast<double>(hi - lo)) << '\n';
    }
  }
  finish(os, path);
}

void write_wigner_csv(const WignerGrid& grid, const std::filesystem::path& path) {
  auto os = open_for_write(path);
  os << "x,p,W\n";
  for (std::size_t ix = 0; ix < grid.x.points; ++ix) {
    for (std::size_t ip = 0; ip < grid.p.points; ++ip) {
      os << fmt17(grid.x.at(ix)) << ',' << fmt17(grid.p.at(ip)) << ',' << fmt17(grid(ix, ip)) << '\n';
    }
  }
  finish(os, path);
}

}  // namespace pqdt
