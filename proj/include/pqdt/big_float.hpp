#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "pqdt/matrix.hpp"

namespace pqdt {

inline constexpr unsigned kDefaultWignerBits = 70;
inline constexpr unsigned kMinWignerBits = 53;

class WideExponentOverflow : public Error {
 public:
  WideExponentOverflow(std::size_t k, double z);
  std::size_t k() const noexcept { return k_; }
  double z() const noexcept { return z_; }

 private:
  std::size_t k_;
  double z_;
};

/// sum_k theta_k (-1)^k L_k(z) exp(-z/2) / pi with z = 2(x^2 + p^2).
/// Everything runs in binary floating point with `bits` of mantissa and the widest
/// exponent range the backend allows; the result is rounded to double once at the end.
double wigner_series(std::span<const double> theta, double x, double p, unsigned bits);

}  // namespace pqdt
