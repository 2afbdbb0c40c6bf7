#include <gtest/gtest.h>

#include "secpower/encoding.hpp"
#include "secpower/worker.hpp"

using namespace secpower;
using namespace secpower::worker;

namespace {

struct Fixture {
  paillier::Keypair keys;
  FixedPointCodec codec;
  std::vector<std::vector<mpz_class>> plain;  // residues
  wire::StoreMatrix store;
};

Fixture make_fixture(std::size_t n, std::uint64_t seed) {
  SeededRandom rng(seed);
  paillier::Keypair keys = paillier::keygen(256, rng);
  FixedPointCodec codec(40, keys.pub.n());
  Fixture f{keys, codec, {}, {}};
  f.store.modulus = keys.pub.n();
  f.store.key_id = keys.pub.key_id();
  f.store.frac_bits = 40;
  f.plain.resize(n);
  f.store.cells.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const mpz_class m = codec.encode(rng.uniform_real(-2, 2));
      f.plain[i].push_back(m);
      f.store.cells[i].push_back(paillier::encrypt(keys.pub, m, rng).value());
    }
  }
  return f;
}

std::vector<mpz_class> decrypt_all(const Fixture& f, const wire::MatVecResponse& r) {
  std::vector<mpz_class> out;
  for (const auto& v : r.y) {
    out.push_back(paillier::decrypt(f.keys.priv, f.keys.pub, paillier::Ciphertext::from_value(f.keys.pub, v)));
  }
  return out;
}

// Plaintext oracle: (A z)_i mod n computed directly on residues.
std::vector<mpz_class> plain_product(const Fixture& f, const std::vector<mpz_class>& z) {
  std::vector<mpz_class> out;
  for (const auto& row : f.plain) {
    mpz_class acc = 0;
    for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * z[j];
    mpz_mod(acc.get_mpz_t(), acc.get_mpz_t(), f.keys.pub.n().get_mpz_t());
    out.push_back(acc);
  }
  return out;
}

std::vector<mpz_class> random_request(const Fixture& f, std::size_t n, std::uint64_t seed) {
  SeededRandom rng(seed);
  std::vector<mpz_class> z;
  for (std::size_t j = 0; j < n; ++j) z.push_back(rng.uniform_below(f.keys.pub.n()));
  return z;
}

}  // namespace

TEST(Worker, HonestProductMatchesPlaintextOracle) {
  const Fixture f = make_fixture(5, 1);
  WorkerState w;
  w.store_matrix(f.store);
  for (std::uint64_t s = 0; s < 4; ++s) {
    const auto z = random_request(f, 5, s);
    EXPECT_EQ(decrypt_all(f, w.encrypted_matvec({z})), plain_product(f, z));
  }
  EXPECT_EQ(w.rounds_served(), 4u);
  EXPECT_GT(w.compute_seconds(), 0);
}

TEST(Worker, SmallSignedRequestsMatchOracle) {
  const Fixture f = make_fixture(3, 2);
  WorkerState w;
  w.store_matrix(f.store);
  std::vector<mpz_class> z = {f.codec.encode(-1.5), f.codec.encode(0.25), f.codec.encode(0)};
  EXPECT_EQ(decrypt_all(f, w.encrypted_matvec({z})), plain_product(f, z));
}

TEST(Worker, DeterministicForFixedSeed) {
  const Fixture f = make_fixture(3, 3);
  auto run = [&](std::uint64_t seed) {
    WorkerState w(Arbitrary{}, seed);
    w.store_matrix(f.store);
    return w.encrypted_matvec({random_request(f, 3, 9)});
  };
  EXPECT_EQ(run(7), run(7));
  EXPECT_NE(run(7), run(8));
}

TEST(Worker, StoreValidation) {
  const Fixture f = make_fixture(3, 4);
  auto code_of = [](WorkerState& w, const wire::StoreMatrix& s) -> std::string {
    try {
      w.store_matrix(s);
    } catch (const WorkerError& e) {
      return e.code();
    }
    return "ok";
  };
  {
    WorkerState w;
    EXPECT_EQ(code_of(w, f.store), "ok");
    EXPECT_EQ(code_of(w, f.store), "duplicate_store");
  }
  {
    WorkerState w;
    wire::StoreMatrix s = f.store;
    s.cells[1].pop_back();
    EXPECT_EQ(code_of(w, s), "malformed_grid");
  }
  {
    WorkerState w;
    wire::StoreMatrix s = f.store;
    s.cells.clear();
    EXPECT_EQ(code_of(w, s), "malformed_grid");
  }
  {
    WorkerState w;
    wire::StoreMatrix s = f.store;
    s.cells[0][0] = f.keys.pub.n_squared();
    EXPECT_EQ(code_of(w, s), "malformed_grid");
  }
  {
    WorkerState w;
    wire::StoreMatrix s = f.store;
    s.key_id = std::string(32, '0');
    EXPECT_EQ(code_of(w, s), "key_mismatch");
  }
  {
    SeededRandom rng(99);
    WorkerState w(Honest{}, 0, paillier::keygen(256, rng).pub);
    EXPECT_EQ(code_of(w, f.store), "key_mismatch");
  }
  {
    WorkerState w(Honest{}, 0, f.keys.pub);
    EXPECT_EQ(code_of(w, f.store), "ok");
  }
}

TEST(Worker, RequestValidation) {
  const Fixture f = make_fixture(3, 5);
  WorkerState w;
  EXPECT_THROW(w.encrypted_matvec({{1, 2, 3}}), WorkerError);
  w.store_matrix(f.store);
  EXPECT_THROW(w.encrypted_matvec({{1, 2}}), WorkerError);
  EXPECT_THROW(w.encrypted_matvec({{1, 2, f.keys.pub.n()}}), WorkerError);
  EXPECT_THROW(w.encrypted_matvec({{1, -2, 3}}), WorkerError);
}

TEST(Worker, HandleReportsErrorsAsMessages) {
  const Fixture f = make_fixture(2, 6);
  WorkerState w;
  const auto early = w.handle(wire::make_request("s", 0, {{1, 2}}));
  ASSERT_EQ(early.kind(), wire::Kind::Error);
  EXPECT_EQ(std::get<wire::ErrorReply>(early.payload).code, "no_matrix");
  EXPECT_EQ(w.handle(wire::make_store("s", f.store)).kind(), wire::Kind::Ack);
  const auto ok = w.handle(wire::make_request("s", 4, {{1, 2}}));
  ASSERT_EQ(ok.kind(), wire::Kind::MatVecResponse);
  EXPECT_EQ(ok.round_index, 4u);
  EXPECT_EQ(std::get<wire::MatVecResponse>(ok.payload).key_id, f.keys.pub.key_id());
  const auto other = w.handle(wire::make_request("t", 5, {{1, 2}}));
  EXPECT_EQ(std::get<wire::ErrorReply>(other.payload).code, "session_mismatch");
  EXPECT_EQ(std::get<wire::ErrorReply>(w.handle(wire::make_ack("s")).payload).code, "bad_request");
}

TEST(Worker, TamperBiasesSomeComponents) {
  const Fixture f = make_fixture(6, 7);
  WorkerState honest;
  WorkerState cheat(Tamper{1.0, 0.5}, 3);
  honest.store_matrix(f.store);
  cheat.store_matrix(f.store);
  const auto z = random_request(f, 6, 1);
  const auto good = decrypt_all(f, honest.encrypted_matvec({z}));
  const auto bad = decrypt_all(f, cheat.encrypted_matvec({z}));
  int changed = 0;
  for (std::size_t i = 0; i < good.size(); ++i) {
    if (good[i] == bad[i]) continue;
    ++changed;
    mpz_class diff = bad[i] - good[i];
    mpz_mod(diff.get_mpz_t(), diff.get_mpz_t(), f.keys.pub.n().get_mpz_t());
    const double delta = std::fabs(f.codec.decode(diff, ScaleLevel::Two));
    EXPECT_GE(delta, 0.25 - 1e-9);
    EXPECT_LE(delta, 0.5 + 1e-9);
  }
  EXPECT_GE(changed, 1);
}

TEST(Worker, TamperWithZeroProbabilityIsHonest) {
  const Fixture f = make_fixture(4, 8);
  WorkerState cheat(Tamper{0.0, 5.0}, 3);
  cheat.store_matrix(f.store);
  const auto z = random_request(f, 4, 2);
  EXPECT_EQ(decrypt_all(f, cheat.encrypted_matvec({z})), plain_product(f, z));
}

TEST(Worker, LazyReplaysFirstAnswer) {
  const Fixture f = make_fixture(3, 9);
  WorkerState lazy(Lazy{}, 1);
  lazy.store_matrix(f.store);
  const auto z0 = random_request(f, 3, 1);
  const auto first = lazy.encrypted_matvec({z0});
  EXPECT_EQ(decrypt_all(f, first), plain_product(f, z0));
  EXPECT_EQ(lazy.encrypted_matvec({random_request(f, 3, 2)}), first);
  const auto replayed = lazy.handle(wire::make_request("", 7, {random_request(f, 3, 3)}));
  EXPECT_EQ(replayed.round_index, 7u);
}

TEST(Worker, PolicyStrings) {
  EXPECT_TRUE(std::holds_alternative<Honest>(parse_policy("honest")));
  EXPECT_TRUE(std::holds_alternative<Arbitrary>(parse_policy("arbitrary")));
  EXPECT_TRUE(std::holds_alternative<Lazy>(parse_policy("lazy")));
  const auto t = std::get<Tamper>(parse_policy("tamper:0.5:2"));
  EXPECT_EQ(t.probability, 0.5);
  EXPECT_EQ(t.magnitude, 2.0);
  EXPECT_EQ(describe(parse_policy("tamper:1:1")), "tamper:1:1");
  for (const char* bad : {"", "evil", "tamper", "tamper:1", "tamper:2:1", "tamper:x:1", "tamper:1:-1"}) {
    EXPECT_THROW(parse_policy(bad), std::invalid_argument) << bad;
  }
}
