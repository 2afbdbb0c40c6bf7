#pragma once

#include <stdexcept>

#include <gmpxx.h>

namespace secpower {

class CodecOverflow : public std::range_error {
 public:
  using std::range_error::range_error;
};

// Scale level of a fixed-point residue: level 1 carries 2^f, level 2 carries
// 2^(2f) (the product of two level-1 values).
enum class ScaleLevel : unsigned { One = 1, Two = 2 };

// Fixed-point codec between signed reals and residues modulo a Paillier n.
// A real x maps to round(x * 2^(f*level)) mod n; residues above n/2 decode as
// negative values.
class FixedPointCodec {
 public:
  static constexpr unsigned kDefaultFracBits = 40;
  static constexpr unsigned kGuardBits = 64;

  // Fails unless 2^(2f + guard) < n / 2.
  FixedPointCodec(unsigned frac_bits, const mpz_class& modulus);

  unsigned frac_bits() const { return frac_bits_; }
  const mpz_class& modulus() const { return modulus_; }

  // Largest |x| encodable at the given level without wrapping.
  double max_magnitude(ScaleLevel level) const;

  mpz_class encode(double x, ScaleLevel level = ScaleLevel::One) const;
  double decode(const mpz_class& residue, ScaleLevel level = ScaleLevel::One) const;

  // Signed fixed-point integer round(x * 2^(f*level)), without reduction.
  mpz_class to_fixed(double x, ScaleLevel level = ScaleLevel::One) const;
  // Signed integer to real: v / 2^(f*level).
  double from_fixed(const mpz_class& v, ScaleLevel level = ScaleLevel::One) const;

  // Canonical residue in [0, n) of a signed integer, and back using the n/2
  // threshold.
  mpz_class to_residue(const mpz_class& signed_value) const;
  mpz_class to_signed(const mpz_class& residue) const;

 private:
  unsigned shift(ScaleLevel level) const { return frac_bits_ * static_cast<unsigned>(level); }

  unsigned frac_bits_;
  mpz_class modulus_;
  mpz_class half_;
};

}  // namespace secpower
