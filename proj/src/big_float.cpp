#include "pqdt/big_float.hpp"

#include <mpfr.h>

#include <cmath>
#include <utility>

namespace pqdt {
namespace {

class Mp {
 public:
  explicit Mp(mpfr_prec_t bits) { mpfr_init2(v_, bits); }
  ~Mp() { mpfr_clear(v_); }
  Mp(const Mp&) = delete;
  Mp& operator=(const Mp&) = delete;
  mpfr_ptr get() noexcept { return v_; }
  void swap(Mp& other) noexcept { mpfr_swap(v_, other.v_); }

 private:
  mpfr_t v_;
};

void widen_exponent_range() {
  // The range is per thread in thread-safe MPFR builds, so every caller sets it.
  mpfr_set_emax(mpfr_get_emax_max());
  mpfr_set_emin(mpfr_get_emin_min());
}

}  // namespace

WideExponentOverflow::WideExponentOverflow(std::size_t k, double z)
    : Error("Laguerre recurrence overflowed the exponent range at k=" + std::to_string(k) +
            ", z=" + std::to_string(z)),
      k_(k),
      z_(z) {}

double wigner_series(std::span<const double> theta, double x, double p, unsigned bits) {
  if (bits < kMinWignerBits) throw ValidationError("Wigner precision must be at least 53 bits");
  if (!std::isfinite(x) || !std::isfinite(p)) throw ValidationError("Wigner point must be finite");
  if (theta.empty()) return 0.0;
  widen_exponent_range();
  const auto prec = static_cast<mpfr_prec_t>(bits);

  Mp z(prec), t(prec);
  mpfr_set_d(z.get(), x, MPFR_RNDN);
  mpfr_sqr(z.get(), z.get(), MPFR_RNDN);
  mpfr_set_d(t.get(), p, MPFR_RNDN);
  mpfr_sqr(t.get(), t.get(), MPFR_RNDN);
  mpfr_add(z.get(), z.get(), t.get(), MPFR_RNDN);
  mpfr_mul_2ui(z.get(), z.get(), 1, MPFR_RNDN);
  const double z_d = mpfr_get_d(z.get(), MPFR_RNDN);

  // Alternating sign folded into the polynomials: S_k = (-1)^k L_k(z) obeys
  // (k+1) S_{k+1} = (z - 2k - 1) S_k - k S_{k-1}.
  Mp prev(prec), cur(prec), next(prec), sum(prec);
  mpfr_set_ui(prev.get(), 1, MPFR_RNDN);
  mpfr_set_d(sum.get(), theta[0], MPFR_RNDN);
  if (theta.size() > 1) {
    mpfr_sub_ui(cur.get(), z.get(), 1, MPFR_RNDN);  // S_1 = -(1 - z)
    mpfr_mul_d(t.get(), cur.get(), theta[1], MPFR_RNDN);
    mpfr_add(sum.get(), sum.get(), t.get(), MPFR_RNDN);
  }
  for (std::size_t k = 1; k + 1 < theta.size(); ++k) {
    mpfr_sub_ui(t.get(), z.get(), 2 * k + 1, MPFR_RNDN);
    mpfr_mul(next.get(), t.get(), cur.get(), MPFR_RNDN);
    mpfr_mul_ui(t.get(), prev.get(), k, MPFR_RNDN);
    mpfr_sub(next.get(), next.get(), t.get(), MPFR_RNDN);
    mpfr_div_ui(next.get(), next.get(), k + 1, MPFR_RNDN);
    if (mpfr_inf_p(next.get()) || mpfr_nan_p(next.get())) throw WideExponentOverflow(k + 1, z_d);
    prev.swap(cur);
    cur.swap(next);
    if (theta[k + 1] != 0.0) {
      mpfr_mul_d(t.get(), cur.get(), theta[k + 1], MPFR_RNDN);
      mpfr_add(sum.get(), sum.get(), t.get(), MPFR_RNDN);
    }
  }
  if (mpfr_inf_p(sum.get()) || mpfr_nan_p(sum.get())) throw WideExponentOverflow(theta.size() - 1, z_d);

  mpfr_div_2ui(t.get(), z.get(), 1, MPFR_RNDN);
  mpfr_neg(t.get(), t.get(), MPFR_RNDN);
  mpfr_exp(t.get(), t.get(), MPFR_RNDN);
  mpfr_mul(sum.get(), sum.get(), t.get(), MPFR_RNDN);
  mpfr_const_pi(t.get(), MPFR_RNDN);
  mpfr_div(sum.get(), sum.get(), t.get(), MPFR_RNDN);
  return mpfr_get_d(sum.get(), MPFR_RNDN);
}

}  // namespace pqdt
