#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>

#include <gmpxx.h>

namespace secpower {

class EncodingFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Canonical lowercase big-endian hex, no leading zeros ("0" for zero).
// Only nonnegative values are representable.
std::string to_hex(const mpz_class& value);

// Strict inverse of to_hex: rejects empty strings, uppercase digits, signs,
// whitespace, and leading zeros.
mpz_class from_hex(std::string_view text);

std::string bytes_to_hex(const std::uint8_t* data, std::size_t size);

// Incremental SHA-256.
class Sha256 {
 public:
  using Digest = std::array<std::uint8_t, 32>;

  Sha256();
  ~Sha256();
  Sha256(Sha256&&) noexcept;
  Sha256& operator=(Sha256&&) noexcept;
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view bytes);
  // Digest of everything absorbed so far; the hasher stays usable.
  Digest peek() const;

  static Digest of(std::string_view bytes);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace secpower
