#include "secpower/paillier.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include <sys/stat.h>

#include "secpower/bigint.hpp"

namespace secpower::paillier {

namespace {

constexpr int kPrimalityRounds = 40;
constexpr const char* kPublicFormat = "secpower-paillier-public";
constexpr const char* kPrivateFormat = "secpower-paillier-private";

bool is_probable_prime(const mpz_class& v) {
  return mpz_probab_prime_p(v.get_mpz_t(), kPrimalityRounds) > 0;
}

mpz_class powm(const mpz_class& base, const mpz_class& exp, const mpz_class& mod) {
  mpz_class out;
  mpz_powm(out.get_mpz_t(), base.get_mpz_t(), exp.get_mpz_t(), mod.get_mpz_t());
  return out;
}

mpz_class invert(const mpz_class& v, const mpz_class& mod) {
  mpz_class out;
  if (mpz_invert(out.get_mpz_t(), v.get_mpz_t(), mod.get_mpz_t()) == 0) {
    throw DomainError("value is not invertible");
  }
  return out;
}

mpz_class gcd(const mpz_class& a, const mpz_class& b) {
  mpz_class out;
  mpz_gcd(out.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
  return out;
}

void require_same_key(const PublicKey& pk, const Ciphertext& c) {
  if (c.fingerprint() != pk.fingerprint()) {
    throw KeyMismatchError("ciphertext was produced under a different public key");
  }
}

void require_residue(const PublicKey& pk, const mpz_class& v, const char* what) {
  if (v < 0 || v >= pk.n()) throw DomainError(std::string(what) + " outside [0, n)");
}

// (1 + m n) mod n^2 == g^m for g = n + 1.
mpz_class generator_power(const PublicKey& pk, const mpz_class& m) {
  mpz_class out = m * pk.n() + 1;
  mpz_mod(out.get_mpz_t(), out.get_mpz_t(), pk.n_squared().get_mpz_t());
  return out;
}

mpz_class random_unit(const PublicKey& pk, RandomSource& rng) {
  for (;;) {
    mpz_class r = rng.uniform_below(pk.n() - 1) + 1;
    if (gcd(r, pk.n()) == 1) return r;
  }
}

mpz_class random_prime(unsigned bits, unsigned budget, RandomSource& rng) {
  for (unsigned attempt = 0; attempt < budget; ++attempt) {
    mpz_class candidate = rng.uniform_bits(bits);
    // Top two bits set so the product of two such primes has exactly p_bits + q_bits bits.
    mpz_setbit(candidate.get_mpz_t(), bits - 1);
    if (bits >= 2) mpz_setbit(candidate.get_mpz_t(), bits - 2);
    mpz_setbit(candidate.get_mpz_t(), 0);
    if (is_probable_prime(candidate)) return candidate;
  }
  throw KeyGenError("prime search exceeded its retry budget");
}

}  // namespace

Ciphertext make_ciphertext(mpz_class value, const KeyFingerprint& fp) {
  return Ciphertext(std::move(value), fp);
}

PublicKey PublicKey::from_modulus(const mpz_class& n) {
  if (n < 3) throw DomainError("modulus too small");
  PublicKey pk;
  pk.n_ = n;
  pk.g_ = n + 1;
  pk.n_squared_ = n * n;
  const auto digest = Sha256::of(to_hex(n));
  std::copy_n(digest.begin(), pk.fingerprint_.size(), pk.fingerprint_.begin());
  return pk;
}

std::string PublicKey::key_id() const {
  return bytes_to_hex(fingerprint_.data(), fingerprint_.size());
}

unsigned PublicKey::bits() const {
  return static_cast<unsigned>(mpz_sizeinbase(n_.get_mpz_t(), 2));
}

Ciphertext Ciphertext::from_value(const PublicKey& pk, const mpz_class& value) {
  if (value <= 0 || value >= pk.n_squared()) throw DomainError("ciphertext outside (0, n^2)");
  if (gcd(value, pk.n()) != 1) throw DomainError("ciphertext not a unit modulo n^2");
  return make_ciphertext(value, pk.fingerprint());
}

PrivateKey PrivateKey::from_primes(const mpz_class& p, const mpz_class& q) {
  if (p == q) throw KeyGenError("p and q must differ");
  if (p < 2 || q < 2 || !is_probable_prime(p) || !is_probable_prime(q)) {
    throw KeyGenError("p and q must both be prime");
  }
  const mpz_class n = p * q;
  if (gcd(n, (p - 1) * (q - 1)) != 1) throw KeyGenError("gcd(pq, (p-1)(q-1)) != 1");

  PrivateKey sk;
  sk.p_ = p;
  sk.q_ = q;
  mpz_lcm(sk.lambda_.get_mpz_t(), mpz_class(p - 1).get_mpz_t(), mpz_class(q - 1).get_mpz_t());
  // With g = n + 1, L(g^lambda mod n^2) = lambda mod n.
  sk.mu_ = invert(sk.lambda_ % n, n);

  sk.p_sq_ = p * p;
  sk.q_sq_ = q * q;
  // h_p = L_p(g^(p-1) mod p^2)^-1 mod p, L_p(u) = (u - 1) / p.
  const mpz_class g = n + 1;
  mpz_class lp = (powm(g, p - 1, sk.p_sq_) - 1) / p;
  mpz_class lq = (powm(g, q - 1, sk.q_sq_) - 1) / q;
  sk.hp_ = invert(lp % p, p);
  sk.hq_ = invert(lq % q, q);
  sk.q_inv_mod_p_ = invert(q % p, p);
  sk.p_sq_inv_mod_q_sq_ = invert(sk.p_sq_ % sk.q_sq_, sk.q_sq_);
  sk.n_mod_phi_p_sq_ = n % (p * (p - 1));
  sk.n_mod_phi_q_sq_ = n % (q * (q - 1));
  return sk;
}

Keypair keygen(unsigned bits, RandomSource& rng) {
  if (bits < 16) throw KeyGenError("key size must be at least 16 bits");
  const unsigned p_bits = bits / 2;
  const unsigned q_bits = bits - p_bits;
  const unsigned budget = 10 * bits;

  const mpz_class p = random_prime(p_bits, budget, rng);
  for (unsigned attempt = 0; attempt < budget; ++attempt) {
    const mpz_class q = random_prime(q_bits, budget, rng);
    if (q == p) throw KeyGenError("randomness produced p == q");
    const mpz_class n = p * q;
    if (gcd(n, (p - 1) * (q - 1)) != 1) continue;
    PrivateKey sk = PrivateKey::from_primes(p, q);
    return Keypair{PublicKey::from_modulus(n), std::move(sk)};
  }
  throw KeyGenError("no admissible prime pair within the retry budget");
}

Ciphertext encrypt(const PublicKey& pk, const mpz_class& m, const mpz_class& r) {
  require_residue(pk, m, "plaintext");
  if (r <= 0 || r >= pk.n() || gcd(r, pk.n()) != 1) {
    throw DomainError("encryption randomness must lie in Z*_n");
  }
  mpz_class c = generator_power(pk, m) * powm(r, pk.n(), pk.n_squared());
  mpz_mod(c.get_mpz_t(), c.get_mpz_t(), pk.n_squared().get_mpz_t());
  return make_ciphertext(std::move(c), pk.fingerprint());
}

Ciphertext encrypt(const PublicKey& pk, const mpz_class& m, RandomSource& rng) {
  require_residue(pk, m, "plaintext");
  return encrypt(pk, m, random_unit(pk, rng));
}

Ciphertext encrypt_crt(const PublicKey& pk, const PrivateKey& sk, const mpz_class& m,
                       RandomSource& rng) {
  require_residue(pk, m, "plaintext");
  if (sk.p_ * sk.q_ != pk.n()) throw KeyMismatchError("private key does not match public key");
  const mpz_class r = random_unit(pk, rng);
  const mpz_class rp = powm(r, sk.n_mod_phi_p_sq_, sk.p_sq_);
  const mpz_class rq = powm(r, sk.n_mod_phi_q_sq_, sk.q_sq_);
  // Garner: x = rp + p^2 * ((rq - rp) * (p^2)^-1 mod q^2).
  mpz_class t = (rq - rp) * sk.p_sq_inv_mod_q_sq_;
  mpz_mod(t.get_mpz_t(), t.get_mpz_t(), sk.q_sq_.get_mpz_t());
  const mpz_class rn = rp + sk.p_sq_ * t;
  mpz_class c = generator_power(pk, m) * rn;
  mpz_mod(c.get_mpz_t(), c.get_mpz_t(), pk.n_squared().get_mpz_t());
  return make_ciphertext(std::move(c), pk.fingerprint());
}

mpz_class decrypt(const PrivateKey& sk, const PublicKey& pk, const Ciphertext& c) {
  require_same_key(pk, c);
  if (sk.p_ * sk.q_ != pk.n()) throw KeyMismatchError("private key does not match public key");
  if (c.value() <= 0 || c.value() >= pk.n_squared() || gcd(c.value(), pk.n()) != 1) {
    throw DomainError("ciphertext not in Z*_{n^2}");
  }
  // m_p = L_p(c^(p-1) mod p^2) h_p mod p, likewise for q; recombine by CRT.
  mpz_class mp = (powm(c.value(), sk.p_ - 1, sk.p_sq_) - 1) / sk.p_ * sk.hp_;
  mpz_mod(mp.get_mpz_t(), mp.get_mpz_t(), sk.p_.get_mpz_t());
  mpz_class mq = (powm(c.value(), sk.q_ - 1, sk.q_sq_) - 1) / sk.q_ * sk.hq_;
  mpz_mod(mq.get_mpz_t(), mq.get_mpz_t(), sk.q_.get_mpz_t());
  mpz_class h = (mp - mq) * sk.q_inv_mod_p_;
  mpz_mod(h.get_mpz_t(), h.get_mpz_t(), sk.p_.get_mpz_t());
  return mq + h * sk.q_;
}

Ciphertext add_cipher(const PublicKey& pk, const Ciphertext& c1, const Ciphertext& c2) {
  require_same_key(pk, c1);
  require_same_key(pk, c2);
  mpz_class out = c1.value() * c2.value();
  mpz_mod(out.get_mpz_t(), out.get_mpz_t(), pk.n_squared().get_mpz_t());
  return make_ciphertext(std::move(out), pk.fingerprint());
}

Ciphertext add_plain(const PublicKey& pk, const Ciphertext& c, const mpz_class& m2) {
  require_same_key(pk, c);
  require_residue(pk, m2, "plaintext addend");
  mpz_class out = c.value() * generator_power(pk, m2);
  mpz_mod(out.get_mpz_t(), out.get_mpz_t(), pk.n_squared().get_mpz_t());
  return make_ciphertext(std::move(out), pk.fingerprint());
}

Ciphertext scalar_mul(const PublicKey& pk, const Ciphertext& c, const mpz_class& k) {
  require_same_key(pk, c);
  require_residue(pk, k, "scalar");
  return make_ciphertext(powm(c.value(), k, pk.n_squared()), pk.fingerprint());
}

Ciphertext negate(const PublicKey& pk, const Ciphertext& c) {
  require_same_key(pk, c);
  return make_ciphertext(invert(c.value(), pk.n_squared()), pk.fingerprint());
}

nlohmann::json to_json(const PublicKey& pk) {
  return {{"format", kPublicFormat}, {"version", 1}, {"n", to_hex(pk.n())}, {"g", to_hex(pk.g())}};
}

nlohmann::json to_json(const Keypair& kp) {
  return {{"format", kPrivateFormat},
          {"version", 1},
          {"n", to_hex(kp.pub.n())},
          {"g", to_hex(kp.pub.g())},
          {"p", to_hex(kp.priv.p())},
          {"q", to_hex(kp.priv.q())},
          {"lambda", to_hex(kp.priv.lambda())},
          {"mu", to_hex(kp.priv.mu())}};
}

PublicKey public_key_from_json(const nlohmann::json& j) {
  try {
    if (j.contains("p") || j.contains("q") || j.contains("lambda") || j.contains("mu") ||
        j.value("format", "") == kPrivateFormat) {
      throw KeyFileError("refusing key material that contains private parameters");
    }
    if (j.at("format").get<std::string>() != kPublicFormat || j.at("version").get<int>() != 1) {
      throw KeyFileError("not a public key file");
    }
    PublicKey pk = PublicKey::from_modulus(from_hex(j.at("n").get<std::string>()));
    if (from_hex(j.at("g").get<std::string>()) != pk.g()) throw KeyFileError("generator must be n + 1");
    return pk;
  } catch (const nlohmann::json::exception& e) {
    throw KeyFileError(std::string("malformed public key: ") + e.what());
  } catch (const EncodingFormatError& e) {
    throw KeyFileError(std::string("malformed public key: ") + e.what());
  }
}

Keypair keypair_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kPrivateFormat || j.at("version").get<int>() != 1) {
      throw KeyFileError("not a private key file");
    }
    const mpz_class p = from_hex(j.at("p").get<std::string>());
    const mpz_class q = from_hex(j.at("q").get<std::string>());
    PrivateKey sk = PrivateKey::from_primes(p, q);
    PublicKey pk = PublicKey::from_modulus(p * q);
    if (from_hex(j.at("n").get<std::string>()) != pk.n() ||
        from_hex(j.at("lambda").get<std::string>()) != sk.lambda() ||
        from_hex(j.at("mu").get<std::string>()) != sk.mu()) {
      throw KeyFileError("private key parameters are inconsistent");
    }
    return Keypair{std::move(pk), std::move(sk)};
  } catch (const nlohmann::json::exception& e) {
    throw KeyFileError(std::string("malformed private key: ") + e.what());
  } catch (const EncodingFormatError& e) {
    throw KeyFileError(std::string("malformed private key: ") + e.what());
  }
}

namespace {

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw KeyFileError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw KeyFileError("failed writing " + path.string());
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw KeyFileError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw KeyFileError("cannot parse " + path.string() + ": " + e.what());
  }
}

}  // namespace

void write_public_key_file(const std::filesystem::path& path, const PublicKey& pk) {
  write_json(path, to_json(pk));
}

void write_private_key_file(const std::filesystem::path& path, const Keypair& kp) {
  // Create with owner-only permissions before any secret is written.
  {
    std::ofstream touch(path, std::ios::trunc);
    if (!touch) throw KeyFileError("cannot open " + path.string() + " for writing");
  }
  ::chmod(path.c_str(), S_IRUSR | S_IWUSR);
  write_json(path, to_json(kp));
}

PublicKey read_public_key_file(const std::filesystem::path& path) {
  return public_key_from_json(read_json(path));
}

Keypair read_private_key_file(const std::filesystem::path& path) {
  return keypair_from_json(read_json(path));
}

}  // namespace secpower::paillier
