#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>

#include <gmpxx.h>

namespace secpower {

class RandomnessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller-supplied source of randomness. Satisfies UniformRandomBitGenerator
// so it can drive <random> distributions and the Eigen-side generators.
class RandomSource {
 public:
  using result_type = std::uint64_t;

  virtual ~RandomSource() = default;

  virtual std::uint64_t next_u64() = 0;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() { return next_u64(); }

  // Uniform integer in [0, 2^bits).
  mpz_class uniform_bits(unsigned bits);
  // Uniform integer in [0, bound); bound must be positive.
  mpz_class uniform_below(const mpz_class& bound);
  // Uniform double in [lo, hi).
  double uniform_real(double lo, double hi);
};

// Deterministic generator for tests, benchmarks, and reproducible transcripts.
class SeededRandom final : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next_u64() override { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Operating-system entropy (getrandom / /dev/urandom through std::random_device).
class SystemRandom final : public RandomSource {
 public:
  SystemRandom();
  std::uint64_t next_u64() override;

 private:
  std::random_device device_;
};

}  // namespace secpower
