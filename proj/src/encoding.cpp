#include "secpower/encoding.hpp"

#include <cmath>
#include <string>

namespace secpower {

FixedPointCodec::FixedPointCodec(unsigned frac_bits, const mpz_class& modulus)
    : frac_bits_(frac_bits), modulus_(modulus), half_(modulus / 2) {
  mpz_class headroom;
  mpz_ui_pow_ui(headroom.get_mpz_t(), 2, 2 * frac_bits + kGuardBits);
  if (modulus <= 0 || headroom >= half_) {
    throw CodecOverflow("modulus too small for " + std::to_string(frac_bits) +
                        " fractional bits plus guard headroom");
  }
}

double FixedPointCodec::max_magnitude(ScaleLevel level) const {
  const mpz_class limit = (modulus_ - 1) / 2;
  return std::ldexp(mpz_get_d(limit.get_mpz_t()), -static_cast<int>(shift(level)));
}

mpz_class FixedPointCodec::to_fixed(double x, ScaleLevel level) const {
  if (!std::isfinite(x)) throw CodecOverflow("cannot encode a non-finite value");
  if (std::fabs(x) > max_magnitude(level)) throw CodecOverflow("value exceeds codec range");
  const double scaled = std::nearbyint(std::ldexp(x, static_cast<int>(shift(level))));
  return mpz_class(scaled);
}

double FixedPointCodec::from_fixed(const mpz_class& v, ScaleLevel level) const {
  // mpz_get_d truncates; the 2^-53 relative error is far below the 2^-f quantum.
  return std::ldexp(mpz_get_d(v.get_mpz_t()), -static_cast<int>(shift(level)));
}

mpz_class FixedPointCodec::to_residue(const mpz_class& signed_value) const {
  mpz_class r;
  mpz_mod(r.get_mpz_t(), signed_value.get_mpz_t(), modulus_.get_mpz_t());
  return r;
}

mpz_class FixedPointCodec::to_signed(const mpz_class& residue) const {
  return residue > half_ ? mpz_class(residue - modulus_) : residue;
}

mpz_class FixedPointCodec::encode(double x, ScaleLevel level) const {
  return to_residue(to_fixed(x, level));
}

double FixedPointCodec::decode(const mpz_class& residue, ScaleLevel level) const {
  return from_fixed(to_signed(residue), level);
}

}  // namespace secpower
