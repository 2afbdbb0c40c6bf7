#include "secpower/client.hpp"

#include <cmath>

#include "secpower/bigint.hpp"

namespace secpower::client {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

mpz_class abs_value(const mpz_class& v) { return v < 0 ? mpz_class(-v) : v; }

mpz_class power_of_two(unsigned bits) {
  mpz_class out;
  mpz_ui_pow_ui(out.get_mpz_t(), 2, bits);
  return out;
}

// Mask element: magnitude in [2^(bits-1), 2^bits) with a random sign.
mpz_class draw_mask_element(unsigned bits, RandomSource& rng) {
  mpz_class magnitude = rng.uniform_bits(bits - 1) + power_of_two(bits - 1);
  return (rng.next_u64() & 1) ? mpz_class(-magnitude) : magnitude;
}

mpz_class draw_unit(const mpz_class& n, RandomSource& rng) {
  for (;;) {
    mpz_class a = rng.uniform_below(n - 1) + 1;
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), a.get_mpz_t(), n.get_mpz_t());
    if (g == 1) return a;
  }
}

}  // namespace

void ProtocolConfig::validate() const {
  if (!(eps > 0)) throw ConfigError("eps must be positive");
  if (mask_bits < 1) throw ConfigError("mask_bits must be at least 1");
  if (secure_profile && mask_bits < 128) throw ConfigError("secure profile requires mask_bits >= 128");
  if (!(verify_tol > 0)) throw ConfigError("verify_tol must be positive");
  if (key_bits < 16) throw ConfigError("key_bits must be at least 16");
  if (receive_timeout.count() <= 0) throw ConfigError("receive timeout must be positive");
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Setup: return "setup";
    case Phase::Iterating: return "iterating";
    case Phase::Converged: return "converged";
    case Phase::Accepted: return "accepted";
    case Phase::Rejected: return "rejected";
    case Phase::Aborted: return "aborted";
  }
  return "unknown";
}

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::Accepted: return "accepted";
    case Verdict::Rejected: return "rejected";
    case Verdict::Aborted: return "aborted";
  }
  return "unknown";
}

std::string_view to_string(AbortReason reason) {
  switch (reason) {
    case AbortReason::None: return "none";
    case AbortReason::IterationCapExceeded: return "iteration_cap_exceeded";
    case AbortReason::MalformedResponse: return "malformed_response";
    case AbortReason::StaleResponse: return "stale_response";
    case AbortReason::KeyMismatch: return "key_mismatch";
    case AbortReason::WorkerError: return "worker_error";
    case AbortReason::TransportError: return "transport_error";
  }
  return "unknown";
}

ClientSession::ClientSession(const Matrix& A, const Vector& x0, const ProtocolConfig& cfg,
                             paillier::Keypair keys)
    : cfg_(cfg), keys_(std::move(keys)), codec_(cfg.frac_bits, keys_.pub.n()), a_(A), x_(x0) {}

ClientSession::Started ClientSession::setup(const Matrix& A, const Vector& x0,
                                            const ProtocolConfig& cfg, paillier::Keypair keys,
                                            RandomSource& rng, const SetupOptions& options) {
  cfg.validate();
  if (A.rows() != A.cols() || A.rows() < 1) throw linalg::DimensionMismatch("matrix must be square, n >= 1");
  if (x0.size() != A.rows()) throw linalg::DimensionMismatch("start vector length mismatch");
  linalg::require_finite(A, "matrix");
  linalg::require_finite(x0, "start vector");
  if (x0.isZero(0)) throw linalg::ZeroIterate("start vector is zero");

  ClientSession s(A, x0, cfg, std::move(keys));
  const std::size_t n = static_cast<std::size_t>(A.rows());
  s.a_norm_ = linalg::matrix_inf_norm(A);
  s.omega_ = cfg.resolved_omega(n);

  s.a_fixed_.reserve(n * n);
  mpz_class a_max = 0;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      s.a_fixed_.push_back(s.codec_.to_fixed(A(i, j)));
      if (abs_value(s.a_fixed_.back()) > a_max) a_max = abs_value(s.a_fixed_.back());
    }
  }

  if (options.mask_override) {
    if (options.mask_override->size() != n) throw linalg::DimensionMismatch("mask override length mismatch");
    s.mask_ = *options.mask_override;
  } else {
    s.mask_.reserve(n);
    for (std::size_t j = 0; j < n; ++j) s.mask_.push_back(draw_mask_element(cfg.mask_bits, rng));
  }
  mpz_class mask_max = 0;
  for (const auto& r : s.mask_) mask_max = std::max(mask_max, abs_value(r));

  // Every |sum_j A[i][j] z_j| an honest worker can produce must stay below n/2.
  const double x_scale = std::max(1.0, linalg::inf_norm(x0));
  const mpz_class z_max = mask_max + s.codec_.to_fixed(x_scale) + 1;
  if (mpz_class(a_max * z_max * static_cast<unsigned long>(n)) >= s.keys_.pub.n() / 2) {
    throw CodecOverflow("key too small for the matrix entries and mask size");
  }

  s.offset_.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    mpz_class acc = 0;
    for (std::size_t j = 0; j < n; ++j) mpz_addmul(acc.get_mpz_t(), s.a_fixed_[i * n + j].get_mpz_t(), s.mask_[j].get_mpz_t());
    s.offset_[i] = std::move(acc);
  }

  const std::uint64_t id_hi = rng.next_u64();
  const std::uint64_t id_lo = rng.next_u64();
  std::uint8_t id_bytes[16];
  for (int b = 0; b < 8; ++b) {
    id_bytes[b] = static_cast<std::uint8_t>(id_hi >> (56 - 8 * b));
    id_bytes[8 + b] = static_cast<std::uint8_t>(id_lo >> (56 - 8 * b));
  }
  s.session_id_ = bytes_to_hex(id_bytes, sizeof(id_bytes));

  wire::StoreMatrix store;
  store.modulus = s.keys_.pub.n();
  store.key_id = s.keys_.pub.key_id();
  store.frac_bits = cfg.frac_bits;
  store.cells.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    store.cells[i].reserve(n);
    for (std::size_t j = 0; j < n; ++j) {
      const mpz_class m = s.codec_.to_residue(s.a_fixed_[i * n + j]);
      store.cells[i].push_back(paillier::encrypt_crt(s.keys_.pub, s.keys_.priv, m, rng).value());
    }
  }

  s.phase_ = Phase::Iterating;
  wire::Message first = s.make_request(rng);
  wire::Message store_msg = wire::make_store(s.session_id_, std::move(store));
  return Started{std::move(s), std::move(store_msg), std::move(first)};
}

wire::Message ClientSession::make_request(RandomSource& rng) {
  const std::size_t n = dim();
  const mpz_class& modulus = keys_.pub.n();
  mpz_class scale = 1;
  scale_inverse_ = 1;
  if (cfg_.use_scaling) {
    scale = draw_unit(modulus, rng);
    mpz_invert(scale_inverse_.get_mpz_t(), scale.get_mpz_t(), modulus.get_mpz_t());
  }
  wire::MatVecRequest body;
  body.z.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    mpz_class z = codec_.to_fixed(x_(static_cast<Eigen::Index>(j))) + mask_[j];
    if (cfg_.use_scaling) z *= scale;
    body.z.push_back(codec_.to_residue(z));
  }
  return wire::make_request(session_id_, round_, std::move(body));
}

Abort ClientSession::fail(AbortReason reason, std::string detail) {
  phase_ = Phase::Aborted;
  return Abort{reason, std::move(detail)};
}

RoundOutcome ClientSession::ingest_round(const wire::Message& response, RandomSource& rng) {
  if (phase_ != Phase::Iterating) {
    throw PhaseError("ingest_round called in phase " + std::string(to_string(phase_)));
  }
  if (response.kind() == wire::Kind::Error) {
    const auto& err = std::get<wire::ErrorReply>(response.payload);
    return fail(AbortReason::WorkerError, err.code + ": " + err.text);
  }
  if (response.kind() != wire::Kind::MatVecResponse) {
    return fail(AbortReason::MalformedResponse, "expected a matvec_response");
  }
  if (response.session_id != session_id_) {
    return fail(AbortReason::StaleResponse, "response belongs to another session");
  }
  if (!response.round_index || *response.round_index != round_) {
    return fail(AbortReason::StaleResponse, "response round index does not match the pending request");
  }
  const auto& body = std::get<wire::MatVecResponse>(response.payload);
  if (body.key_id != keys_.pub.key_id()) {
    return fail(AbortReason::KeyMismatch, "response was not produced under the session key");
  }
  const std::size_t n = dim();
  if (body.y.size() != n) return fail(AbortReason::MalformedResponse, "response length mismatch");

  const mpz_class& modulus = keys_.pub.n();
  const double x_norm = linalg::inf_norm(x_);
  // An honest product obeys |(A x)_i| <= ||A||_inf ||x||_inf up to rounding.
  const double plausible = 2 * a_norm_ * x_norm + static_cast<double>(n) * std::ldexp(1.0, 1 - static_cast<int>(cfg_.frac_bits));
  Vector product(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    mpz_class v;
    try {
      v = paillier::decrypt(keys_.priv, keys_.pub, paillier::Ciphertext::from_value(keys_.pub, body.y[i]));
    } catch (const paillier::PaillierError& e) {
      return fail(AbortReason::MalformedResponse, e.what());
    }
    if (cfg_.use_scaling) {
      v *= scale_inverse_;
      mpz_mod(v.get_mpz_t(), v.get_mpz_t(), modulus.get_mpz_t());
    }
    const mpz_class unmasked = codec_.to_signed(v) - offset_[i];
    const double value = codec_.from_fixed(unmasked, ScaleLevel::Two);
    if (!(std::fabs(value) <= plausible)) {
      return fail(AbortReason::MalformedResponse, "decoded product outside the honest range");
    }
    product(static_cast<Eigen::Index>(i)) = value;
  }
  last_product_ = product;

  linalg::SignedMax<double> dominant;
  try {
    dominant = linalg::inf_norm_signed(product);
  } catch (const linalg::ZeroIterate&) {
    return fail(AbortReason::MalformedResponse, "response yields a zero iterate");
  }
  Vector next = product / dominant.value;
  const double step = (x_ - next).lpNorm<Eigen::Infinity>();
  x_ = std::move(next);
  ++round_;

  if (step <= cfg_.eps) {
    phase_ = Phase::Converged;
    return ConvergedWith{EigenResult{dominant.value, x_, round_, true}};
  }
  if (round_ >= omega_) {
    return fail(AbortReason::IterationCapExceeded,
                "no convergence within " + std::to_string(omega_) + " rounds");
  }
  return NextRequest{make_request(rng)};
}

double ClientSession::residual(const Matrix& A, const EigenResult& candidate) {
  if (candidate.eigenvector.size() != A.cols()) throw linalg::DimensionMismatch("candidate length mismatch");
  return (A * candidate.eigenvector - candidate.eigenvalue * candidate.eigenvector)
      .lpNorm<Eigen::Infinity>();
}

Verdict ClientSession::verify(const EigenResult& candidate) {
  if (phase_ != Phase::Converged) {
    throw PhaseError("verify called in phase " + std::string(to_string(phase_)));
  }
  const double bound = cfg_.verify_tol * a_norm_ * linalg::inf_norm(candidate.eigenvector);
  const bool ok = candidate.eigenvector.allFinite() && std::isfinite(candidate.eigenvalue) &&
                  residual(a_, candidate) <= bound;
  phase_ = ok ? Phase::Accepted : Phase::Rejected;
  return ok ? Verdict::Accepted : Verdict::Rejected;
}

void ClientSession::abort() { phase_ = Phase::Aborted; }

namespace {

class Transcript {
 public:
  void record(const wire::Message& msg) { hash_.update(wire::serialize(msg)); }
  std::string digest() const {
    const auto d = hash_.peek();
    return bytes_to_hex(d.data(), d.size());
  }

 private:
  Sha256 hash_;
};

}  // namespace

SolveOutcome drive(const Matrix& A, const Vector& x0, const ProtocolConfig& cfg,
                   paillier::Keypair keys, transport::Channel& channel, RandomSource& rng) {
  SolveOutcome out;
  Transcript transcript;
  const auto wall_start = Clock::now();
  auto finish = [&](SolveOutcome& o) -> SolveOutcome {
    o.transcript_digest = transcript.digest();
    o.timings.wall_seconds = seconds_since(wall_start);
    return std::move(o);
  };

  auto t = Clock::now();
  ClientSession::Started started =
      ClientSession::setup(A, x0, cfg, std::move(keys), rng);
  out.timings.setup_seconds = seconds_since(t);
  ClientSession& session = started.session;

  auto exchange = [&](const wire::Message& msg) -> wire::Message {
    transcript.record(msg);
    channel.send(msg);
    wire::Message reply = channel.receive(cfg.receive_timeout);
    transcript.record(reply);
    return reply;
  };

  try {
    const wire::Message ack = exchange(started.store);
    if (ack.kind() != wire::Kind::Ack) {
      session.abort();
      out.reason = ack.kind() == wire::Kind::Error ? AbortReason::WorkerError : AbortReason::MalformedResponse;
      if (ack.kind() == wire::Kind::Error) {
        const auto& err = std::get<wire::ErrorReply>(ack.payload);
        out.detail = err.code + ": " + err.text;
      } else {
        out.detail = "expected ack for store_matrix";
      }
      return finish(out);
    }

    wire::Message request = std::move(started.first_request);
    for (;;) {
      const wire::Message response = exchange(request);
      t = Clock::now();
      RoundOutcome outcome = session.ingest_round(response, rng);
      out.timings.round_seconds += seconds_since(t);
      out.rounds = session.round();
      if (auto* next = std::get_if<NextRequest>(&outcome)) {
        request = std::move(next->request);
        continue;
      }
      if (auto* abort = std::get_if<Abort>(&outcome)) {
        out.verdict = Verdict::Aborted;
        out.reason = abort->reason;
        out.detail = std::move(abort->detail);
        // A response that was rejected still used up a round.
        if (abort->reason != AbortReason::IterationCapExceeded) out.rounds = session.round() + 1;
        return finish(out);
      }
      out.result = std::get<ConvergedWith>(outcome).result;
      t = Clock::now();
      out.verdict = session.verify(out.result);
      out.timings.verify_seconds = seconds_since(t);
      return finish(out);
    }
  } catch (const transport::TransportError& e) {
    session.abort();
    out.verdict = Verdict::Aborted;
    out.reason = AbortReason::TransportError;
    out.detail = e.what();
  } catch (const wire::WireError& e) {
    session.abort();
    out.verdict = Verdict::Aborted;
    out.reason = AbortReason::MalformedResponse;
    out.detail = e.what();
  }
  return finish(out);
}

}  // namespace secpower::client
