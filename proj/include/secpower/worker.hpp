#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "secpower/message.hpp"
#include "secpower/paillier.hpp"
#include "secpower/random.hpp"
#include "secpower/transport.hpp"

// Cloud side of the protocol. The worker only ever holds a public key; it
// evaluates Enc(A z)[i] = prod_j Enc(A[i][j])^{z_j} mod n^2.
namespace secpower::worker {

struct Honest {};

// With probability `probability` per round, adds a fixed per-session bias to
// a random subset of the response components. Each biased component gets a
// value of magnitude in [magnitude/2, magnitude] (real units of the decoded
// product) with random sign; the bias is injected with add_plain.
struct Tamper {
  double probability = 1.0;
  double magnitude = 0.0;
};

// Every component is a fresh encryption of a uniform residue.
struct Arbitrary {};

// Replays the previous round's ciphertexts under the current round index;
// computes honestly on round 0.
struct Lazy {};

using AdversaryPolicy = std::variant<Honest, Tamper, Arbitrary, Lazy>;

// "honest" | "tamper:<rho>:<delta>" | "arbitrary" | "lazy"
AdversaryPolicy parse_policy(std::string_view text);
std::string describe(const AdversaryPolicy& policy);

// Error codes travel to the client inside wire::ErrorReply.
class WorkerError : public std::runtime_error {
 public:
  WorkerError(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

class WorkerState {
 public:
  explicit WorkerState(AdversaryPolicy policy = Honest{}, std::uint64_t seed = 0,
                       std::optional<paillier::PublicKey> expected_key = std::nullopt);

  void store_matrix(const wire::StoreMatrix& body);
  wire::MatVecResponse encrypted_matvec(const wire::MatVecRequest& req);

  // Message-level entry point: Ack / MatVecResponse on success, Error otherwise.
  wire::Message handle(const wire::Message& msg);

  bool has_matrix() const { return pk_.has_value(); }
  std::size_t dim() const { return dim_; }
  const paillier::PublicKey& public_key() const;
  const AdversaryPolicy& policy() const { return policy_; }

  std::size_t rounds_served() const { return rounds_served_; }
  // Wall time spent inside store/matvec computation.
  double compute_seconds() const { return compute_seconds_; }
  double last_round_seconds() const { return last_round_seconds_; }

 private:
  paillier::Ciphertext row_product(std::size_t row, const std::vector<mpz_class>& z) const;
  void apply_policy(std::vector<paillier::Ciphertext>& y);

  AdversaryPolicy policy_;
  SeededRandom rng_;
  std::optional<paillier::PublicKey> expected_key_;
  std::optional<paillier::PublicKey> pk_;
  std::string session_id_;
  unsigned frac_bits_ = 0;
  std::size_t dim_ = 0;
  std::vector<paillier::Ciphertext> enc_a_;  // row-major
  std::vector<std::pair<std::size_t, mpz_class>> tamper_bias_;
  std::optional<std::vector<paillier::Ciphertext>> last_response_;
  std::size_t rounds_served_ = 0;
  double compute_seconds_ = 0;
  double last_round_seconds_ = 0;
};

// Answers messages on `channel` until the peer closes it or stays idle past
// `idle_timeout`. Returns the number of matvec rounds served.
std::size_t serve(WorkerState& state, transport::Channel& channel,
                  std::chrono::milliseconds idle_timeout = std::chrono::hours(1));

}  // namespace secpower::worker
