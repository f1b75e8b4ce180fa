#include "pqdt/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace pqdt {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::span<const double> values)
    : rows_(rows), cols_(cols), values_(values.begin(), values.end()) {
  if (values.size() != rows * cols) {
    throw ValidationError("dense matrix: " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " needs " + std::to_string(rows * cols) + " values, got " +
                          std::to_string(values.size()));
  }
}

void DenseMatrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool DenseMatrix::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

bool DenseMatrix::bit_equal(const DenseMatrix& other) const noexcept {
  return same_shape(other) &&
         std::memcmp(values_.data(), other.values_.data(), values_.size() * sizeof(double)) == 0;
}

BandedMatrix::BandedMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> band_starts,
                           std::vector<std::size_t> band_lengths, std::vector<double> values)
    : rows_(rows), cols_(cols), starts_(std::move(band_starts)), values_(std::move(values)) {
  if (starts_.size() != rows || band_lengths.size() != rows) {
    throw ValidationError("banded matrix: band table has " + std::to_string(starts_.size()) +
                          " rows, expected " + std::to_string(rows));
  }
  offsets_.assign(rows + 1, 0);
  for (std::size_t r = 0; r < rows; ++r) offsets_[r + 1] = offsets_[r] + band_lengths[r];
  if (offsets_[rows] != values_.size()) {
    throw ValidationError("banded matrix: band lengths sum to " + std::to_string(offsets_[rows]) +
                          " but " + std::to_string(values_.size()) + " values were given");
  }
  validate();
}

BandedMatrix BandedMatrix::from_dense(const DenseMatrix& dense) {
  std::vector<std::size_t> starts(dense.rows(), 0), lengths(dense.rows(), 0);
  std::vector<double> values;
  for (std::size_t r = 0; r < dense.rows(); ++r) {
    auto row = dense.row(r);
    auto first = std::find_if(row.begin(), row.end(), [](double v) { return v != 0.0; });
    if (first == row.end()) continue;
    auto last = std::find_if(row.rbegin(), row.rend(), [](double v) { return v != 0.0; }).base();
    starts[r] = static_cast<std::size_t>(first - row.begin());
    lengths[r] = static_cast<std::size_t>(last - first);
    values.insert(values.end(), first, last);
  }
  return BandedMatrix(dense.rows(), dense.cols(), std::move(starts), std::move(lengths),
                      std::move(values));
}

double BandedMatrix::at(std::size_t r, std::size_t c) const noexcept {
  if (c < starts_[r] || c >= band_end(r)) return 0.0;
  return values_[offsets_[r] + (c - starts_[r])];
}

double BandedMatrix::row_sum(std::size_t r) const noexcept {
  auto b = band(r);
  return std::accumulate(b.begin(), b.end(), 0.0);
}

DenseMatrix BandedMatrix::to_dense() const {
  DenseMatrix out(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    auto b = band(r);
    std::copy(b.begin(), b.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(starts_[r]));
  }
  return out;
}

void BandedMatrix::validate() const {
  for (std::size_t r = 0; r < rows_; ++r) {
    if (band_length(r) > 0 && starts_[r] + band_length(r) > cols_) {
      throw ValidationError("banded matrix: row " + std::to_string(r) + " band [" +
                            std::to_string(starts_[r]) + ", " + std::to_string(band_end(r)) +
                            ") exceeds " + std::to_string(cols_) + " columns");
    }
    for (double v : band(r)) {
      if (!std::isfinite(v)) {
        throw ValidationError("banded matrix: non-finite entry in row " + std::to_string(r));
      }
      if (v < 0.0) {
        throw ValidationError("banded matrix: negative entry in row " + std::to_string(r));
      }
    }
  }
}

void check_povm(const DenseMatrix& values, double tol) {
  for (std::size_t i = 0; i < values.rows(); ++i) {
    double sum = 0.0;
    for (double v : values.row(i)) {
      if (!(v >= 0.0)) {
        throw ValidationError("POVM row " + std::to_string(i) + " has a negative or NaN entry");
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol) {
      throw ValidationError("POVM row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
  }
}

PovmMatrix::PovmMatrix(DenseMatrix values, double row_sum_tol) : values_(std::move(values)) {
  check_povm(values_, row_sum_tol);
}

PovmMatrix PovmMatrix::uniform(std::size_t M, std::size_t N) {
  if (M == 0 || N == 0) throw ValidationError("POVM needs M >= 1 and N >= 1");
  return PovmMatrix(DenseMatrix(M, N, 1.0 / static_cast<double>(N)));
}

std::vector<double> PovmMatrix::column(std::size_t n) const {
  std::vector<double> col(M());
  for (std::size_t i = 0; i < M(); ++i) col[i] = values_(i, n);
  return col;
}

ProblemInstance::ProblemInstance(BandedMatrix F_, DenseMatrix P_) : F(std::move(F_)), P(std::move(P_)) {
  if (F.rows() != P.rows()) {
    throw ValidationError("instance: F has " + std::to_string(F.rows()) + " probe rows, P has " +
                          std::to_string(P.rows()));
  }
  if (F.rows() == 0 || F.cols() == 0 || P.cols() == 0) {
    throw ValidationError("instance: empty dimension");
  }
  if (!P.all_finite()) throw ValidationError("instance: P has non-finite entries");
  for (std::size_t d = 0; d < P.rows(); ++d) {
    double sum = 0.0;
    for (double v : P.row(d)) sum += v;
    if (std::abs(sum - 1.0) > kOutcomeRowSumTolerance) {
      throw ValidationError("instance: row " + std::to_string(d) + " of P sums to " +
                            std::to_string(sum));
    }
  }
}

}  // namespace pqdt
