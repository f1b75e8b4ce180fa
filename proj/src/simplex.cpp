#include "pqdt/simplex.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <functional>

#include "pqdt/engine.hpp"

namespace pqdt {
namespace {

bool already_feasible(std::span<const double> x) {
  double sum = 0.0;
  for (double v : x) {
    if (!(v >= 0.0)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= 4.0 * static_cast<double>(x.size()) * DBL_EPSILON;
}

void check_input(std::span<const double> x) {
  if (x.empty()) throw ValidationError("simplex projection of an empty vector");
  for (double v : x) {
    if (!std::isfinite(v)) throw ValidationError("simplex projection of a non-finite vector");
  }
}

// Condat (2016), "Fast projection onto the simplex and the l1 ball", Algorithm 3 with
// the Michelot-style cleanup pass. `aux` needs room for x.size() values.
double condat_threshold(std::span<const double> y, std::vector<double>& aux) {
  const std::size_t n = y.size();
  aux.resize(n);
  std::ptrdiff_t len = 1;
  std::ptrdiff_t len_old = -1;
  std::size_t base = 0;
  aux[0] = y[0];
  double tau = y[0] - 1.0;
  for (std::size_t i = 1; i < n; ++i) {
    if (y[i] > tau) {
      aux[static_cast<std::size_t>(len)] = y[i];
      tau += (y[i] - tau) / static_cast<double>(len - len_old);
      if (tau <= y[i] - 1.0) {
        tau = y[i] - 1.0;
        len_old = len - 1;
      }
      ++len;
    }
  }
  if (len_old >= 0) {
    ++len_old;
    len -= len_old;
    base = static_cast<std::size_t>(len_old);
    while (--len_old >= 0) {
      double v = aux[static_cast<std::size_t>(len_old)];
      if (v > tau) {
        aux[--base] = v;
        ++len;
        tau += (v - tau) / static_cast<double>(len);
      }
    }
  }
  double* a = aux.data() + base;
  do {
    len_old = len - 1;
    len = 0;
    for (std::ptrdiff_t i = 0; i <= len_old; ++i) {
      if (a[i] > tau) {
        a[len++] = a[i];
      } else {
        tau += (tau - a[i]) / static_cast<double>(len - i + len_old);
      }
    }
  } while (len <= len_old);
  return tau;
}

void project_with(std::span<const double> x, std::span<double> out, std::vector<double>& aux) {
  if (already_feasible(x)) {
    if (out.data() != x.data()) std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  if (x.size() == 1) {
    out[0] = 1.0;
    return;
  }
  // Work relative to the largest entry: surviving entries then lie in (-1, 0], and an exactly
  // representable shift of x gives the same z bit for bit.
  thread_local std::vector<double> z;
  const double top = *std::max_element(x.begin(), x.end());
  z.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] - top;
  const double tau = condat_threshold(z, aux);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::max(z[i] - tau, 0.0);
}

}  // namespace

void project_simplex(std::span<const double> x, std::span<double> out) {
  check_input(x);
  if (out.size() != x.size()) throw ValidationError("simplex projection: output size mismatch");
  thread_local std::vector<double> aux;
  project_with(x, out, aux);
}

std::vector<double> project_simplex(std::span<const double> x) {
  std::vector<double> out(x.size());
  project_simplex(x, out);
  return out;
}

std::vector<double> project_simplex_reference(std::span<const double> x) {
  check_input(x);
  std::vector<double> u(x.begin(), x.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0, tau = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cumsum += u[k];
    double t = (cumsum - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) tau = t;
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::max(x[i] - tau, 0.0);
  return out;
}

void project_rows_inplace(DenseMatrix& m, const Engine* engine) {
  if (!m.all_finite()) throw ValidationError("row projection of a matrix with non-finite entries");
  if (m.cols() == 0) throw ValidationError("row projection of a matrix without columns");
  auto work = [&m](RowRange rows) {
    thread_local std::vector<double> aux;
    for (std::size_t i = rows.begin; i < rows.end; ++i) project_with(m.row(i), m.row(i), aux);
  };
  if (engine && engine->partition().ranges.back().end == m.rows()) {
    engine->for_each_block([&](std::size_t, RowRange rows) { work(rows); });
  } else {
    work({0, m.rows()});
  }
}

PovmMatrix project_rows(DenseMatrix m, const Engine* engine) {
  project_rows_inplace(m, engine);
  return PovmMatrix(std::move(m));
}

DenseMatrix clamp_nonneg(DenseMatrix m) {
  for (double& v : m.values()) v = std::max(v, 0.0);
  return m;
}

}  // namespace pqdt
