#pragma once

#include <filesystem>
#include <variant>

#include "pqdt/matrix.hpp"

namespace pqdt {

// Binary layout (little-endian):
//   "PQDT" | u32 version = 1 | u8 kind (0 dense, 1 banded) | 3 reserved bytes
//   u64 rows | u64 cols
//   dense:  rows*cols f64, row-major
//   banded: rows x (u64 band_start, u64 band_len), then the concatenated f64 bands
// CSV is a debug format: comma-separated rows, no header, always dense.

enum class MatrixFormat { binary, csv };

using AnyMatrix = std::variant<DenseMatrix, BandedMatrix>;

inline constexpr std::uint32_t kBinaryFormatVersion = 1;

/// Picks csv for a ".csv" extension, binary otherwise.
MatrixFormat format_from_path(const std::filesystem::path& path);

AnyMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format);
AnyMatrix load_matrix(const std::filesystem::path& path);

/// Loads and requires a dense matrix (a banded file is densified).
DenseMatrix load_dense(const std::filesystem::path& path);
/// Loads and requires a banded matrix (a dense or CSV file is converted).
BandedMatrix load_banded(const std::filesystem::path& path);

void save_matrix(const DenseMatrix& m, const std::filesystem::path& path, MatrixFormat format);
void save_matrix(const BandedMatrix& m, const std::filesystem::path& path, MatrixFormat format);
void save_matrix(const DenseMatrix& m, const std::filesystem::path& path);
void save_matrix(const BandedMatrix& m, const std::filesystem::path& path);

}  // namespace pqdt
