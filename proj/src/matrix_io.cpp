#include "pqdt/matrix_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pqdt {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary matrix I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic{'P', 'Q', 'D', 'T'};
constexpr std::uint8_t kKindDense = 0;
constexpr std::uint8_t kKindBanded = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 1 + 3 + 8 + 8;

std::string describe(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

class Reader {
 public:
  Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + describe(path));
    in_.seekg(0, std::ios::end);
    remaining_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0);
  }

  template <class T>
  T read() {
    T v;
    read_bytes(&v, sizeof(T));
    return v;
  }

  void read_bytes(void* dst, std::uint64_t n) {
    if (n > remaining_) {
      throw ValidationError(describe(path_) + ": truncated payload (needs " + std::to_string(n) +
                            " more bytes, " + std::to_string(remaining_) + " left)");
    }
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw IoError("read failure on " + describe(path_));
    remaining_ -= n;
  }

  std::uint64_t remaining() const { return remaining_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t remaining_ = 0;
};

std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b, const std::filesystem::path& path) {
  std::uint64_t out;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw ValidationError(describe(path) + ": dimensions overflow");
  }
  return out;
}

void require_finite(std::span<const double> values, const std::filesystem::path& path) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      throw ValidationError(describe(path) + ": non-finite value at flat index " + std::to_string(k));
    }
  }
}

AnyMatrix load_binary(const std::filesystem::path& path) {
  Reader in(path);
  if (in.remaining() < kHeaderBytes) throw ValidationError(describe(path) + ": header too short");
  std::array<char, 4> magic;
  in.read_bytes(magic.data(), 4);
  if (magic != kMagic) throw ValidationError(describe(path) + ": bad magic, not a PQDT file");
  auto version = in.read<std::uint32_t>();
  if (version != kBinaryFormatVersion) {
    throw ValidationError(describe(path) + ": unsupported format version " + std::to_string(version));
  }
  auto kind = in.read<std::uint8_t>();
  std::array<std::uint8_t, 3> reserved;
  in.read_bytes(reserved.data(), 3);
  auto rows = in.read<std::uint64_t>();
  auto cols = in.read<std::uint64_t>();

  if (kind == kKindDense) {
    std::uint64_t count = checked_mul(rows, cols, path);
    if (checked_mul(count, 8, path) != in.remaining()) {
      throw ValidationError(describe(path) + ": " + std::to_string(rows) + "x" + std::to_string(cols) +
                            " needs " + std::to_string(count * 8) + " payload bytes, found " +
                            std::to_string(in.remaining()));
    }
    std::vector<double> values(count);
    in.read_bytes(values.data(), count * 8);
    require_finite(values, path);
    return DenseMatrix(rows, cols, values);
  }
  if (kind == kKindBanded) {
    if (checked_mul(rows, 16, path) > in.remaining()) {
      throw ValidationError(describe(path) + ": band table truncated");
    }
    std::vector<std::size_t> starts(rows), lengths(rows);
    std::uint64_t total = 0;
    for (std::uint64_t r = 0; r < rows; ++r) {
      starts[r] = in.read<std::uint64_t>();
      lengths[r] = in.read<std::uint64_t>();
      if (__builtin_add_overflow(total, lengths[r], &total)) {
        throw ValidationError(describe(path) + ": band lengths overflow");
      }
    }
    if (checked_mul(total, 8, path) != in.remaining()) {
      throw ValidationError(describe(path) + ": band lengths need " + std::to_string(total * 8) +
                            " payload bytes, found " + std::to_string(in.remaining()));
    }
    std::vector<double> values(total);
    in.read_bytes(values.data(), total * 8);
    require_finite(values, path);
    return BandedMatrix(rows, cols, std::move(starts), std::move(lengths), std::move(values));
  }
  throw ValidationError(describe(path) + ": unknown matrix kind " + std::to_string(kind));
}

DenseMatrix load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + describe(path));
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t count = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      auto b = cell.find_first_not_of(" \t");
      auto e = cell.find_last_not_of(" \t");
      if (b == std::string::npos) {
        throw ValidationError(describe(path) + ": empty cell in row " + std::to_string(rows));
      }
      double v = 0.0;
      const char* first = cell.data() + b;
      const char* last = cell.data() + e + 1;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last) {
        throw ValidationError(describe(path) + ": cannot parse '" + cell + "' in row " +
                              std::to_string(rows));
      }
      values.push_back(v);
      ++count;
    }
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      throw ValidationError(describe(path) + ": row " + std::to_string(rows) + " has " +
                            std::to_string(count) + " columns, expected " + std::to_string(cols));
    }
    ++rows;
  }
  require_finite(values, path);
  return DenseMatrix(rows, cols, values);
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + describe(path) + " for writing");
  }
  template <class T>
  void write(const T& v) {
    write_bytes(&v, sizeof(T));
  }
  void write_bytes(const void* src, std::size_t n) {
    out_.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
  }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("write failure on " + describe(path_));
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

void write_header(Writer& w, std::uint8_t kind, std::uint64_t rows, std::uint64_t cols) {
  w.write_bytes(kMagic.data(), 4);
  w.write(kBinaryFormatVersion);
  w.write(kind);
  const std::array<std::uint8_t, 3> reserved{0, 0, 0};
  w.write_bytes(reserved.data(), 3);
  w.write(rows);
  w.write(cols);
}

void write_csv(const DenseMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + describe(path) + " for writing");
  std::array<char, 32> buf;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      auto res = std::to_chars(buf.data(), buf.data() + buf.size(), m(r, c));
      out.write(buf.data(), res.ptr - buf.data());
    }
    out << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failure on " + describe(path));
}

}  // namespace

MatrixFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? MatrixFormat::csv : MatrixFormat::binary;
}

AnyMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format) {
  if (format == MatrixFormat::csv) return load_csv(path);
  return load_binary(path);
}

AnyMatrix load_matrix(const std::filesystem::path& path) {
  return load_matrix(path, format_from_path(path));
}

DenseMatrix load_dense(const std::filesystem::path& path) {
  auto m = load_matrix(path);
  if (auto* banded = std::get_if<BandedMatrix>(&m)) return banded->to_dense();
  return std::get<DenseMatrix>(std::move(m));
}

BandedMatrix load_banded(const std::filesystem::path& path) {
  auto m = load_matrix(path);
  if (auto* dense = std::get_if<DenseMatrix>(&m)) return BandedMatrix::from_dense(*dense);
  return std::get<BandedMatrix>(std::move(m));
}

void save_matrix(const DenseMatrix& m, const std::filesystem::path& path, MatrixFormat format) {
  if (!m.all_finite()) {
    throw ValidationError("refusing to save " + describe(path) + ": matrix has non-finite entries");
  }
  if (format == MatrixFormat::csv) {
    write_csv(m, path);
    return;
  }
  Writer w(path);
  write_header(w, kKindDense, m.rows(), m.cols());
  w.write_bytes(m.data(), m.size() * sizeof(double));
  w.finish();
}

void save_matrix(const BandedMatrix& m, const std::filesystem::path& path, MatrixFormat format) {
  m.validate();
  if (format == MatrixFormat::csv) {
    write_csv(m.to_dense(), path);
    return;
  }
  Writer w(path);
  write_header(w, kKindBanded, m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    w.write(static_cast<std::uint64_t>(m.band_start(r)));
    w.write(static_cast<std::uint64_t>(m.band_length(r)));
  }
  w.write_bytes(m.values().data(), m.nnz() * sizeof(double));
  w.finish();
}

void save_matrix(const DenseMatrix& m, const std::filesystem::path& path) {
  save_matrix(m, path, format_from_path(path));
}

void save_matrix(const BandedMatrix& m, const std::filesystem::path& path) {
  save_matrix(m, path, format_from_path(path));
}

}  // namespace pqdt
