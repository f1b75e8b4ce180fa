#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pqdt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data: bad dimensions, non-finite values, broken invariants.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Allocator handing out 64-byte aligned blocks padded to whole cache lines, so
/// that per-worker buffers never share a line.
template <class T>
struct CacheAlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;

  CacheAlignedAllocator() noexcept = default;
  template <class U>
  CacheAlignedAllocator(const CacheAlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    std::size_t bytes = (n * sizeof(T) + kAlign - 1) / kAlign * kAlign;
    if (bytes == 0) bytes = kAlign;
    return static_cast<T*>(::operator new(bytes, std::align_val_t{kAlign}));
  }
  void deallocate(T* p, std::size_t) noexcept {
    ::operator delete(p, std::align_val_t{kAlign});
  }
  template <class U>
  bool operator==(const CacheAlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using AlignedVector = std::vector<double, CacheAlignedAllocator<double>>;

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols_, cols_};
  }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  void fill(double v);
  bool all_finite() const noexcept;
  bool same_shape(const DenseMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  /// Bitwise comparison (distinguishes -0.0 from 0.0).
  bool bit_equal(const DenseMatrix& other) const noexcept;
  friend bool operator==(const DenseMatrix& a, const DenseMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.values_ == b.values_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  AlignedVector values_;
};

/// Row-banded matrix: row r stores a contiguous run of columns
/// [band_start(r), band_start(r) + band_length(r)); everything else is zero.
/// Values live in one buffer addressed through a per-row offset table.
class BandedMatrix {
 public:
  BandedMatrix() = default;
  BandedMatrix(std::size_t rows, std::size_t cols, std::vector<std::size_t> band_starts,
               std::vector<std::size_t> band_lengths, std::vector<double> values);

  /// Keeps, per row, the span between the first and last nonzero entry.
  static BandedMatrix from_dense(const DenseMatrix& dense);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t band_start(std::size_t r) const noexcept { return starts_[r]; }
  std::size_t band_length(std::size_t r) const noexcept { return offsets_[r + 1] - offsets_[r]; }
  std::size_t band_end(std::size_t r) const noexcept { return starts_[r] + band_length(r); }
  std::span<const double> band(std::size_t r) const noexcept {
    return {values_.data() + offsets_[r], band_length(r)};
  }
  std::size_t nnz() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }

  double at(std::size_t r, std::size_t c) const noexcept;
  double row_sum(std::size_t r) const noexcept;
  DenseMatrix to_dense() const;

  /// Throws ValidationError on a broken band layout, non-finite or negative entries.
  void validate() const;

  friend bool operator==(const BandedMatrix&, const BandedMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> starts_;
  std::vector<std::size_t> offsets_{0};
  std::vector<double> values_;
};

/// The POVM matrix of a phase-insensitive detector: M photon numbers by N
/// outcomes, each row a probability distribution over outcomes.
class PovmMatrix {
 public:
  static constexpr double kRowSumTolerance = 1e-9;

  PovmMatrix() = default;
  /// Validates non-negativity and unit row sums.
  explicit PovmMatrix(DenseMatrix values, double row_sum_tol = kRowSumTolerance);

  static PovmMatrix uniform(std::size_t M, std::size_t N);

  std::size_t M() const noexcept { return values_.rows(); }
  std::size_t N() const noexcept { return values_.cols(); }
  double operator()(std::size_t i, std::size_t n) const noexcept { return values_(i, n); }
  const DenseMatrix& matrix() const noexcept { return values_; }
  DenseMatrix release() && { return std::move(values_); }

  std::vector<double> column(std::size_t n) const;

 private:
  DenseMatrix values_;
};

/// Probe matrix F (D x M), outcome matrix P (D x N).
struct ProblemInstance {
  static constexpr double kOutcomeRowSumTolerance = 1e-6;

  BandedMatrix F;
  DenseMatrix P;

  ProblemInstance() = default;
  /// Validates shapes and that every row of P is a distribution within 1e-6.
  ProblemInstance(BandedMatrix F, DenseMatrix P);

  std::size_t D() const noexcept { return F.rows(); }
  std::size_t M() const noexcept { return F.cols(); }
  std::size_t N() const noexcept { return P.cols(); }
};

/// Throws ValidationError unless every entry is >= 0 and rows sum to 1 within `tol`.
void check_povm(const DenseMatrix& values, double tol = PovmMatrix::kRowSumTolerance);

}  // namespace pqdt
