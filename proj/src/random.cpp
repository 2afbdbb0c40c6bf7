#include "secpower/random.hpp"

#include <cmath>

namespace secpower {

mpz_class RandomSource::uniform_bits(unsigned bits) {
  mpz_class out = 0;
  unsigned remaining = bits;
  while (remaining > 0) {
    const unsigned take = remaining >= 64 ? 64 : remaining;
    std::uint64_t word = next_u64();
    if (take < 64) word &= (std::uint64_t{1} << take) - 1;
    out <<= take;
    mpz_class limb;
    mpz_import(limb.get_mpz_t(), 1, 1, sizeof(word), 0, 0, &word);
    out += limb;
    remaining -= take;
  }
  return out;
}

mpz_class RandomSource::uniform_below(const mpz_class& bound) {
  if (bound <= 0) throw std::invalid_argument("uniform_below: bound must be positive");
  const unsigned bits = static_cast<unsigned>(mpz_sizeinbase(bound.get_mpz_t(), 2));
  for (;;) {
    mpz_class candidate = uniform_bits(bits);
    if (candidate < bound) return candidate;
  }
}

double RandomSource::uniform_real(double lo, double hi) {
  // 53 random mantissa bits.
  const double unit = std::ldexp(static_cast<double>(next_u64() >> 11), -53);
  return lo + (hi - lo) * unit;
}

SystemRandom::SystemRandom() {
  try {
    if (device_.entropy() < 0) throw RandomnessError("no entropy source");
  } catch (const std::exception& e) {
    throw RandomnessError(std::string("system randomness unavailable: ") + e.what());
  }
}

std::uint64_t SystemRandom::next_u64() {
  try {
    const std::uint64_t hi = device_();
    const std::uint64_t lo = device_();
    return (hi << 32) ^ lo;
  } catch (const std::exception& e) {
    throw RandomnessError(std::string("system randomness failed: ") + e.what());
  }
}

}  // namespace secpower
