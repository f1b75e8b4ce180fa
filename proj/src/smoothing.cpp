#include <algorithm>
#include <vector>

#include "pqdt/simplex.hpp"
#include "pqdt/solver.hpp"

namespace pqdt {

PovmMatrix smooth_povm(const DenseMatrix& Pi, std::size_t divisor, std::size_t i_min, const Engine* engine) {
  if (divisor == 0) throw ValidationError("smoothing divisor must be >= 1");
  if (!Pi.all_finite()) throw ValidationError("smoothing a matrix with non-finite entries");
  const std::size_t M = Pi.rows(), N = Pi.cols();

  // Column prefix sums in extended precision: prefix(i, n) = sum_{j < i} Pi(j, n).
  std::vector<long double> prefix((M + 1) * N, 0.0L);
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t n = 0; n < N; ++n) prefix[(i + 1) * N + n] = prefix[i * N + n] + Pi(i, n);
  }

  DenseMatrix out = Pi;
  auto work = [&](RowRange rows) {
    thread_local std::vector<double> row;
    row.resize(N);
    for (std::size_t i = std::max(rows.begin, i_min); i < rows.end; ++i) {
      const std::size_t ns = i / divisor;
      const std::size_t lo = i >= ns ? i - ns : 0;
      const std::size_t hi = std::min(M - 1, i + ns);
      const long double count = static_cast<long double>(hi - lo + 1);
      for (std::size_t n = 0; n < N; ++n) {
        row[n] = static_cast<double>((prefix[(hi + 1) * N + n] - prefix[lo * N + n]) / count);
      }
      project_simplex(row, out.row(i));
    }
  };
  if (engine && engine->M() == M) {
    engine->for_each_block([&](std::size_t, RowRange rows) { work(rows); });
  } else {
    work({0, M});
  }
  return PovmMatrix(std::move(out));
}

}  // namespace pqdt
