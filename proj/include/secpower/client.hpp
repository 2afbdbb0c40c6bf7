#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <gmpxx.h>

#include "secpower/encoding.hpp"
#include "secpower/linalg.hpp"
#include "secpower/message.hpp"
#include "secpower/paillier.hpp"
#include "secpower/random.hpp"
#include "secpower/transport.hpp"

// Client side of the outsourced power iteration.
//
// Setup encrypts A once and fixes a secret mask r. Round k sends
//   z^k = x^k + r            (fixed point, scale 2^f)
// optionally multiplied by a fresh unit a_k of Z_n, receives Enc(A z^k),
// and recovers A x^k = a_k^{-1} D(Enc(A z^k)) - c with c = A r computed
// locally. The iterate is renormalised by its signed dominant component,
// and the final eigenpair is checked against A before it is accepted.
namespace secpower::client {

using linalg::Matrix;
using linalg::Vector;
using EigenResult = linalg::EigenResult<double>;

struct ProtocolConfig {
  double eps = 1e-9;
  // 0 selects 10 * n + 1000.
  std::size_t omega = 0;
  unsigned mask_bits = 128;
  bool use_scaling = false;
  double verify_tol = 1e-6;
  unsigned key_bits = 512;
  unsigned frac_bits = FixedPointCodec::kDefaultFracBits;
  // Enforces mask_bits >= 128.
  bool secure_profile = false;
  std::chrono::milliseconds receive_timeout = transport::kDefaultTimeout;

  void validate() const;
  std::size_t resolved_omega(std::size_t n) const { return omega ? omega : 10 * n + 1000; }
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class PhaseError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Phase { Setup, Iterating, Converged, Accepted, Rejected, Aborted };
enum class Verdict { Accepted, Rejected, Aborted };
enum class AbortReason {
  None,
  IterationCapExceeded,
  MalformedResponse,
  StaleResponse,
  KeyMismatch,
  WorkerError,
  TransportError,
};

std::string_view to_string(Phase phase);
std::string_view to_string(Verdict verdict);
std::string_view to_string(AbortReason reason);

struct NextRequest {
  wire::Message request;
};
struct ConvergedWith {
  EigenResult result;
};
struct Abort {
  AbortReason reason = AbortReason::None;
  std::string detail;
};
using RoundOutcome = std::variant<NextRequest, ConvergedWith, Abort>;

// Test hook: replaces the random mask (e.g. zero mask for degenerate checks).
struct SetupOptions {
  std::optional<std::vector<mpz_class>> mask_override;
};

class ClientSession {
 public:
  struct Started;

  // Encrypts A, draws the mask and emits the StoreMatrix message plus the
  // round-0 request. Throws CodecOverflow when the key is too small for the
  // matrix entries and mask, linalg errors on bad shapes or a zero x0.
  static Started setup(const Matrix& A, const Vector& x0, const ProtocolConfig& cfg,
                       paillier::Keypair keys, RandomSource& rng,
                       const SetupOptions& options = {});

  // rng supplies the next round's scaling factor when scaling is enabled.
  RoundOutcome ingest_round(const wire::Message& response, RandomSource& rng);

  // Local residual test ||A x - lambda x||_inf <= tol ||A||_inf ||x||_inf.
  Verdict verify(const EigenResult& candidate);
  static double residual(const Matrix& A, const EigenResult& candidate);

  // Marks the session aborted from outside (transport failures).
  void abort();

  Phase phase() const { return phase_; }
  std::size_t round() const { return round_; }
  std::size_t omega() const { return omega_; }
  std::size_t dim() const { return static_cast<std::size_t>(a_.rows()); }
  const std::string& session_id() const { return session_id_; }
  const ProtocolConfig& config() const { return cfg_; }
  const paillier::PublicKey& public_key() const { return keys_.pub; }
  const FixedPointCodec& codec() const { return codec_; }
  // Current iterate x^k.
  const Vector& iterate() const { return x_; }
  // A x^k recovered in the most recent round.
  const Vector& last_product() const { return last_product_; }

 private:
  ClientSession(const Matrix& A, const Vector& x0, const ProtocolConfig& cfg, paillier::Keypair keys);

  wire::Message make_request(RandomSource& rng);
  Abort fail(AbortReason reason, std::string detail);

  ProtocolConfig cfg_;
  paillier::Keypair keys_;
  FixedPointCodec codec_;
  Matrix a_;
  double a_norm_ = 0;
  std::size_t omega_ = 0;
  std::string session_id_;
  Phase phase_ = Phase::Setup;
  std::size_t round_ = 0;
  Vector x_;
  Vector last_product_;
  std::vector<mpz_class> a_fixed_;  // row-major, scale 2^f
  std::vector<mpz_class> mask_;     // r, scale 2^f
  std::vector<mpz_class> offset_;   // c = A r, scale 2^(2f)
  mpz_class scale_inverse_ = 1;     // a_k^{-1} mod n for the pending request
};

struct ClientSession::Started {
  ClientSession session;
  wire::Message store;
  wire::Message first_request;
};

struct ClientTimings {
  double setup_seconds = 0;
  double round_seconds = 0;
  double verify_seconds = 0;
  double wall_seconds = 0;

  double client_seconds() const { return setup_seconds + round_seconds + verify_seconds; }
};

struct SolveOutcome {
  EigenResult result;
  Verdict verdict = Verdict::Aborted;
  AbortReason reason = AbortReason::None;
  std::string detail;
  std::size_t rounds = 0;
  std::string transcript_digest;
  ClientTimings timings;
};

// Runs setup, the round loop and verification against a worker on `channel`.
// Transport failures become Verdict::Aborted with AbortReason::TransportError.
SolveOutcome drive(const Matrix& A, const Vector& x0, const ProtocolConfig& cfg,
                   paillier::Keypair keys, transport::Channel& channel, RandomSource& rng);

}  // namespace secpower::client
