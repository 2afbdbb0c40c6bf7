#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <gmpxx.h>
#include <nlohmann/json.hpp>

#include "secpower/random.hpp"

// Paillier cryptosystem with generator g = n + 1.
//
//   encrypt:  c = g^m * r^n mod n^2
//   decrypt:  m = L(c^lambda mod n^2) * mu mod n,  L(u) = (u - 1) / n
//
// Homomorphic identities used by the outsourced matrix-vector product:
//   D(E(a) * E(b))  = a + b  (mod n)
//   D(E(a) * g^b)   = a + b  (mod n)
//   D(E(a)^k)       = k * a  (mod n)
namespace secpower::paillier {

class PaillierError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KeyGenError : public PaillierError {
 public:
  using PaillierError::PaillierError;
};

class KeyMismatchError : public PaillierError {
 public:
  using PaillierError::PaillierError;
};

class DomainError : public PaillierError {
 public:
  using PaillierError::PaillierError;
};

class KeyFileError : public PaillierError {
 public:
  using PaillierError::PaillierError;
};

// Truncated SHA-256 of the modulus; identifies the key a ciphertext belongs to.
using KeyFingerprint = std::array<std::uint8_t, 16>;

class PublicKey {
 public:
  static PublicKey from_modulus(const mpz_class& n);

  const mpz_class& n() const { return n_; }
  const mpz_class& g() const { return g_; }
  const mpz_class& n_squared() const { return n_squared_; }
  const KeyFingerprint& fingerprint() const { return fingerprint_; }
  std::string key_id() const;
  unsigned bits() const;

  friend bool operator==(const PublicKey& a, const PublicKey& b) { return a.n_ == b.n_; }

 private:
  PublicKey() = default;

  mpz_class n_;
  mpz_class g_;
  mpz_class n_squared_;
  KeyFingerprint fingerprint_{};
};

class Ciphertext {
 public:
  // Wraps a raw value received off the wire; checks 0 < value < n^2 and
  // gcd(value, n) = 1.
  static Ciphertext from_value(const PublicKey& pk, const mpz_class& value);

  const mpz_class& value() const { return value_; }
  const KeyFingerprint& fingerprint() const { return fingerprint_; }

  friend bool operator==(const Ciphertext& a, const Ciphertext& b) {
    return a.fingerprint_ == b.fingerprint_ && a.value_ == b.value_;
  }

 private:
  friend Ciphertext make_ciphertext(mpz_class value, const KeyFingerprint& fp);
  Ciphertext(mpz_class value, const KeyFingerprint& fp) : value_(std::move(value)), fingerprint_(fp) {}

  mpz_class value_;
  KeyFingerprint fingerprint_{};
};

class PrivateKey {
 public:
  // Validates primality, p != q and gcd(pq, (p-1)(q-1)) = 1.
  static PrivateKey from_primes(const mpz_class& p, const mpz_class& q);

  const mpz_class& p() const { return p_; }
  const mpz_class& q() const { return q_; }
  const mpz_class& lambda() const { return lambda_; }
  const mpz_class& mu() const { return mu_; }

 private:
  friend mpz_class decrypt(const PrivateKey&, const PublicKey&, const Ciphertext&);
  friend Ciphertext encrypt_crt(const PublicKey&, const PrivateKey&, const mpz_class&,
                                RandomSource&);

  PrivateKey() = default;

  mpz_class p_, q_, lambda_, mu_;
  // CRT tables.
  mpz_class p_sq_, q_sq_, hp_, hq_, q_inv_mod_p_, p_sq_inv_mod_q_sq_;
  mpz_class n_mod_phi_p_sq_, n_mod_phi_q_sq_;
};

struct Keypair {
  PublicKey pub;
  PrivateKey priv;
};

// bits >= 16; p and q get bits/2 and bits - bits/2 bits respectively.
Keypair keygen(unsigned bits, RandomSource& rng);

// Fresh randomness r drawn uniformly from Z*_n.
Ciphertext encrypt(const PublicKey& pk, const mpz_class& m, RandomSource& rng);
// Explicit randomness, for deterministic vectors; r must be coprime with n.
Ciphertext encrypt(const PublicKey& pk, const mpz_class& m, const mpz_class& r);
// Same distribution as encrypt(pk, m, rng), using the factorisation to compute
// r^n mod n^2 by CRT. For the key owner only.
Ciphertext encrypt_crt(const PublicKey& pk, const PrivateKey& sk, const mpz_class& m,
                       RandomSource& rng);

mpz_class decrypt(const PrivateKey& sk, const PublicKey& pk, const Ciphertext& c);

Ciphertext add_cipher(const PublicKey& pk, const Ciphertext& c1, const Ciphertext& c2);
// m2 in [0, n).
Ciphertext add_plain(const PublicKey& pk, const Ciphertext& c, const mpz_class& m2);
// k in [0, n).
Ciphertext scalar_mul(const PublicKey& pk, const Ciphertext& c, const mpz_class& k);
// Modular inverse of the ciphertext; decrypts to n - m.
Ciphertext negate(const PublicKey& pk, const Ciphertext& c);

// Key files: JSON objects with integers as canonical hex strings.
nlohmann::json to_json(const PublicKey& pk);
nlohmann::json to_json(const Keypair& kp);
PublicKey public_key_from_json(const nlohmann::json& j);
Keypair keypair_from_json(const nlohmann::json& j);

void write_public_key_file(const std::filesystem::path& path, const PublicKey& pk);
void write_private_key_file(const std::filesystem::path& path, const Keypair& kp);
// Refuses files that carry private parameters.
PublicKey read_public_key_file(const std::filesystem::path& path);
Keypair read_private_key_file(const std::filesystem::path& path);

}  // namespace secpower::paillier
