#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sys/stat.h>

#include "secpower/paillier.hpp"

using namespace secpower;
using namespace secpower::paillier;

namespace {

// Textbook decryption, L(c^lambda mod n^2) * mu mod n, without CRT.
mpz_class textbook_decrypt(const PublicKey& pk, const PrivateKey& sk, const mpz_class& c) {
  mpz_class u;
  mpz_powm(u.get_mpz_t(), c.get_mpz_t(), sk.lambda().get_mpz_t(), pk.n_squared().get_mpz_t());
  mpz_class m = ((u - 1) / pk.n()) * sk.mu();
  mpz_mod(m.get_mpz_t(), m.get_mpz_t(), pk.n().get_mpz_t());
  return m;
}

Keypair tiny_keys() {
  return {PublicKey::from_modulus(15), PrivateKey::from_primes(3, 5)};
}

// Yields a scripted sequence of words, then repeats the last one.
class ScriptedRandom final : public RandomSource {
 public:
  explicit ScriptedRandom(std::vector<std::uint64_t> words) : words_(std::move(words)) {}
  std::uint64_t next_u64() override {
    const std::uint64_t w = words_[std::min(pos_, words_.size() - 1)];
    ++pos_;
    return w;
  }

 private:
  std::vector<std::uint64_t> words_;
  std::size_t pos_ = 0;
};

}  // namespace

TEST(Paillier, TinyKeyVector) {
  const Keypair kp = tiny_keys();
  EXPECT_EQ(kp.pub.g(), 16);
  EXPECT_EQ(kp.pub.n_squared(), 225);
  // 16^3 * 2^15 mod 225, computed by hand.
  const Ciphertext c = encrypt(kp.pub, 3, mpz_class(2));
  EXPECT_EQ(c.value(), 53);
  EXPECT_EQ(decrypt(kp.priv, kp.pub, c), 3);
}

TEST(Paillier, TinyKeyExhaustive) {
  const Keypair kp = tiny_keys();
  for (int m = 0; m < 15; ++m) {
    for (int r : {1, 2, 4, 7, 8, 11, 13, 14}) {
      const Ciphertext c = encrypt(kp.pub, m, mpz_class(r));
      EXPECT_EQ(decrypt(kp.priv, kp.pub, c), m);
      EXPECT_EQ(textbook_decrypt(kp.pub, kp.priv, c.value()), m);
    }
  }
}

TEST(Paillier, HomomorphicIdentities) {
  SeededRandom rng(11);
  const Keypair kp = keygen(256, rng);
  const mpz_class& n = kp.pub.n();
  for (int i = 0; i < 40; ++i) {
    const mpz_class a = rng.uniform_below(n);
    const mpz_class b = rng.uniform_below(n);
    const Ciphertext ca = encrypt(kp.pub, a, rng);
    const Ciphertext cb = encrypt(kp.pub, b, rng);
    const mpz_class sum = (a + b) % n;
    const mpz_class prod = (a * b) % n;
    EXPECT_EQ(decrypt(kp.priv, kp.pub, add_cipher(kp.pub, ca, cb)), sum);
    EXPECT_EQ(decrypt(kp.priv, kp.pub, add_plain(kp.pub, ca, b)), sum);
    EXPECT_EQ(decrypt(kp.priv, kp.pub, scalar_mul(kp.pub, ca, b)), prod);
    EXPECT_EQ(decrypt(kp.priv, kp.pub, negate(kp.pub, ca)), mpz_class((n - a) % n));
    EXPECT_EQ(textbook_decrypt(kp.pub, kp.priv, ca.value()), a);
  }
}

TEST(Paillier, CrtEncryptionMatchesPublicEncryption) {
  SeededRandom rng(5);
  const Keypair kp = keygen(256, rng);
  for (int i = 0; i < 20; ++i) {
    const mpz_class m = rng.uniform_below(kp.pub.n());
    const std::uint64_t seed = rng.next_u64();
    SeededRandom r1(seed), r2(seed);
    EXPECT_EQ(encrypt_crt(kp.pub, kp.priv, m, r1), encrypt(kp.pub, m, r2));
  }
}

TEST(Paillier, EncryptionIsRandomized) {
  SeededRandom rng(3);
  const Keypair kp = keygen(128, rng);
  EXPECT_NE(encrypt(kp.pub, 7, rng).value(), encrypt(kp.pub, 7, rng).value());
}

TEST(Paillier, ZeroAndEdgePlaintexts) {
  SeededRandom rng(4);
  const Keypair kp = keygen(128, rng);
  for (const mpz_class& m : {mpz_class(0), mpz_class(1), mpz_class(kp.pub.n() - 1)}) {
    EXPECT_EQ(decrypt(kp.priv, kp.pub, encrypt(kp.pub, m, rng)), m);
  }
  EXPECT_THROW(encrypt(kp.pub, kp.pub.n(), rng), DomainError);
  EXPECT_THROW(encrypt(kp.pub, -1, rng), DomainError);
  EXPECT_THROW(scalar_mul(kp.pub, encrypt(kp.pub, 1, rng), kp.pub.n()), DomainError);
}

TEST(Paillier, KeygenShape) {
  SeededRandom rng(1);
  for (unsigned bits : {16u, 64u, 255u, 512u}) {
    const Keypair kp = keygen(bits, rng);
    EXPECT_EQ(kp.pub.bits(), bits);
    EXPECT_NE(kp.priv.p(), kp.priv.q());
    EXPECT_EQ(kp.priv.p() * kp.priv.q(), kp.pub.n());
  }
  EXPECT_THROW(keygen(8, rng), KeyGenError);
}

TEST(Paillier, KeygenRejectsEqualPrimes) {
  // Every draw returns 2^32 - 5, a prime, so both 32-bit searches land on it.
  ScriptedRandom rng({0xfffffffbULL});
  try {
    keygen(64, rng);
    FAIL() << "keygen accepted p == q";
  } catch (const KeyGenError& e) {
    EXPECT_NE(std::string(e.what()).find("p == q"), std::string::npos) << e.what();
  }
}

TEST(Paillier, FromPrimesValidation) {
  EXPECT_THROW(PrivateKey::from_primes(5, 5), KeyGenError);
  EXPECT_THROW(PrivateKey::from_primes(4, 5), KeyGenError);
  // gcd(pq, (p-1)(q-1)) = gcd(21, 12) = 3.
  EXPECT_THROW(PrivateKey::from_primes(3, 7), KeyGenError);
}

TEST(Paillier, CiphertextValidation) {
  const Keypair kp = tiny_keys();
  EXPECT_NO_THROW(Ciphertext::from_value(kp.pub, 53));
  EXPECT_THROW(Ciphertext::from_value(kp.pub, 0), DomainError);
  EXPECT_THROW(Ciphertext::from_value(kp.pub, 225), DomainError);
  EXPECT_THROW(Ciphertext::from_value(kp.pub, 6), DomainError);  // shares 3 with n
}

TEST(Paillier, MixingKeysIsRejected) {
  SeededRandom rng(8);
  const Keypair a = keygen(128, rng);
  const Keypair b = keygen(128, rng);
  const Ciphertext ca = encrypt(a.pub, 1, rng);
  const Ciphertext cb = encrypt(b.pub, 1, rng);
  EXPECT_THROW(add_cipher(a.pub, ca, cb), KeyMismatchError);
  EXPECT_THROW(decrypt(b.priv, b.pub, ca), KeyMismatchError);
  EXPECT_NE(a.pub.key_id(), b.pub.key_id());
}

TEST(Paillier, KeyFilesRoundTrip) {
  SeededRandom rng(9);
  const Keypair kp = keygen(128, rng);
  const auto dir = std::filesystem::temp_directory_path() / "secpower_keyfiles";
  std::filesystem::create_directories(dir);
  const auto priv = dir / "k";
  const auto pub = dir / "k.pub";
  write_private_key_file(priv, kp);
  write_public_key_file(pub, kp.pub);

  struct stat st {};
  ASSERT_EQ(::stat(priv.c_str(), &st), 0);
  EXPECT_EQ(st.st_mode & 0777, 0600);

  const Keypair back = read_private_key_file(priv);
  EXPECT_EQ(back.pub, kp.pub);
  EXPECT_EQ(back.priv.lambda(), kp.priv.lambda());
  EXPECT_EQ(read_public_key_file(pub), kp.pub);
  // The public reader refuses a file carrying private parameters.
  EXPECT_THROW(read_public_key_file(priv), KeyFileError);

  std::ofstream(dir / "bad") << "{\"format\":\"nope\"}";
  EXPECT_THROW(read_private_key_file(dir / "bad"), KeyFileError);
  std::filesystem::remove_all(dir);
}
