#include "secpower/worker.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "secpower/encoding.hpp"

namespace secpower::worker {

namespace {

using Clock = std::chrono::steady_clock;

double parse_number(std::string_view text, const char* what) {
  double value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value)) {
    throw std::invalid_argument(std::string("bad ") + what + " in policy: '" + std::string(text) + "'");
  }
  return value;
}

struct Stopwatch {
  Clock::time_point start = Clock::now();
  double seconds() const { return std::chrono::duration<double>(Clock::now() - start).count(); }
};

}  // namespace

AdversaryPolicy parse_policy(std::string_view text) {
  if (text == "honest") return Honest{};
  if (text == "arbitrary") return Arbitrary{};
  if (text == "lazy") return Lazy{};
  if (text.substr(0, 7) == "tamper:") {
    const std::string_view rest = text.substr(7);
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) throw std::invalid_argument("tamper policy needs tamper:<rho>:<delta>");
    Tamper t{parse_number(rest.substr(0, colon), "rho"), parse_number(rest.substr(colon + 1), "delta")};
    if (t.probability < 0 || t.probability > 1) throw std::invalid_argument("tamper rho must lie in [0, 1]");
    if (t.magnitude < 0) throw std::invalid_argument("tamper delta must be nonnegative");
    return t;
  }
  throw std::invalid_argument("unknown policy '" + std::string(text) + "'");
}

std::string describe(const AdversaryPolicy& policy) {
  struct Visitor {
    std::string operator()(const Honest&) const { return "honest"; }
    std::string operator()(const Arbitrary&) const { return "arbitrary"; }
    std::string operator()(const Lazy&) const { return "lazy"; }
    std::string operator()(const Tamper& t) const {
      std::ostringstream out;
      out << "tamper:" << t.probability << ':' << t.magnitude;
      return out.str();
    }
  };
  return std::visit(Visitor{}, policy);
}

WorkerState::WorkerState(AdversaryPolicy policy, std::uint64_t seed,
                         std::optional<paillier::PublicKey> expected_key)
    : policy_(policy), rng_(seed), expected_key_(std::move(expected_key)) {}

const paillier::PublicKey& WorkerState::public_key() const {
  if (!pk_) throw WorkerError("no_matrix", "no matrix stored");
  return *pk_;
}

void WorkerState::store_matrix(const wire::StoreMatrix& body) {
  if (pk_) throw WorkerError("duplicate_store", "matrix already stored for this session");
  const Stopwatch watch;

  const std::size_t n = body.cells.size();
  if (n == 0) throw WorkerError("malformed_grid", "empty matrix grid");
  for (const auto& row : body.cells) {
    if (row.size() != n) throw WorkerError("malformed_grid", "matrix grid is not square");
  }
  paillier::PublicKey pk = [&] {
    try {
      return paillier::PublicKey::from_modulus(body.modulus);
    } catch (const paillier::PaillierError& e) {
      throw WorkerError("bad_key", e.what());
    }
  }();
  if (pk.key_id() != body.key_id) throw WorkerError("key_mismatch", "key_id does not match modulus");
  if (expected_key_ && !(*expected_key_ == pk)) {
    throw WorkerError("key_mismatch", "matrix encrypted under an unexpected public key");
  }

  std::vector<paillier::Ciphertext> cells;
  cells.reserve(n * n);
  try {
    for (const auto& row : body.cells)
      for (const auto& v : row) cells.push_back(paillier::Ciphertext::from_value(pk, v));
  } catch (const paillier::PaillierError& e) {
    throw WorkerError("malformed_grid", e.what());
  }

  if (const auto* tamper = std::get_if<Tamper>(&policy_)) {
    const FixedPointCodec codec(body.frac_bits, pk.n());
    for (std::size_t i = 0; i < n; ++i) {
      if (rng_.uniform_real(0, 1) < 0.5) continue;
      const double sign = rng_.uniform_real(0, 1) < 0.5 ? -1.0 : 1.0;
      const double delta = sign * rng_.uniform_real(0.5 * tamper->magnitude, tamper->magnitude);
      tamper_bias_.emplace_back(i, codec.encode(delta, ScaleLevel::Two));
    }
    if (tamper_bias_.empty()) {
      const std::size_t i = static_cast<std::size_t>(rng_.uniform_below(n).get_ui());
      tamper_bias_.emplace_back(i, codec.encode(tamper->magnitude, ScaleLevel::Two));
    }
  }

  pk_ = std::move(pk);
  frac_bits_ = body.frac_bits;
  dim_ = n;
  enc_a_ = std::move(cells);
  compute_seconds_ += watch.seconds();
}

paillier::Ciphertext WorkerState::row_product(std::size_t row,
                                              const std::vector<mpz_class>& z) const {
  const paillier::PublicKey& pk = *pk_;
  const mpz_class half = pk.n() / 2;
  // Residues above n/2 stand for negative values; E^(n - z) is inverted once
  // per row instead of exponentiating by the full-width residue.
  const paillier::Ciphertext one = paillier::encrypt(pk, 0, mpz_class(1));
  paillier::Ciphertext pos = one;
  paillier::Ciphertext neg = one;
  bool any_neg = false;
  for (std::size_t j = 0; j < dim_; ++j) {
    const paillier::Ciphertext& cell = enc_a_[row * dim_ + j];
    if (z[j] <= half) {
      pos = paillier::add_cipher(pk, pos, paillier::scalar_mul(pk, cell, z[j]));
    } else {
      neg = paillier::add_cipher(pk, neg, paillier::scalar_mul(pk, cell, pk.n() - z[j]));
      any_neg = true;
    }
  }
  return any_neg ? paillier::add_cipher(pk, pos, paillier::negate(pk, neg)) : pos;
}

void WorkerState::apply_policy(std::vector<paillier::Ciphertext>& y) {
  const paillier::PublicKey& pk = *pk_;
  if (const auto* tamper = std::get_if<Tamper>(&policy_)) {
    if (rng_.uniform_real(0, 1) < tamper->probability) {
      for (const auto& [i, bias] : tamper_bias_) y[i] = paillier::add_plain(pk, y[i], bias);
    }
  } else if (std::holds_alternative<Arbitrary>(policy_)) {
    for (auto& c : y) c = paillier::encrypt(pk, rng_.uniform_below(pk.n()), rng_);
  } else if (std::holds_alternative<Lazy>(policy_)) {
    if (last_response_) {
      y = *last_response_;
    } else {
      last_response_ = y;
    }
  }
}

wire::MatVecResponse WorkerState::encrypted_matvec(const wire::MatVecRequest& req) {
  if (!pk_) throw WorkerError("no_matrix", "matvec requested before a matrix was stored");
  if (req.z.size() != dim_) throw WorkerError("length_mismatch", "request vector length != matrix dimension");
  for (const auto& v : req.z) {
    if (v < 0 || v >= pk_->n()) throw WorkerError("out_of_range", "request entries must lie in [0, n)");
  }
  const Stopwatch watch;
  std::vector<paillier::Ciphertext> y;
  const bool replay = std::holds_alternative<Lazy>(policy_) && last_response_.has_value();
  if (!replay) {
    y.reserve(dim_);
    for (std::size_t i = 0; i < dim_; ++i) y.push_back(row_product(i, req.z));
  }
  apply_policy(y);

  wire::MatVecResponse out;
  out.key_id = pk_->key_id();
  out.y.reserve(dim_);
  for (const auto& c : y) out.y.push_back(c.value());
  last_round_seconds_ = watch.seconds();
  compute_seconds_ += last_round_seconds_;
  ++rounds_served_;
  return out;
}

wire::Message WorkerState::handle(const wire::Message& msg) {
  try {
    switch (msg.kind()) {
      case wire::Kind::StoreMatrix:
        store_matrix(std::get<wire::StoreMatrix>(msg.payload));
        session_id_ = msg.session_id;
        return wire::make_ack(msg.session_id);
      case wire::Kind::MatVecRequest:
        if (pk_ && msg.session_id != session_id_) {
          throw WorkerError("session_mismatch", "request for a different session");
        }
        return wire::make_response(msg.session_id, *msg.round_index,
                                   encrypted_matvec(std::get<wire::MatVecRequest>(msg.payload)));
      default:
        throw WorkerError("bad_request", "worker accepts store_matrix and matvec_request only");
    }
  } catch (const WorkerError& e) {
    return wire::make_error(msg.session_id, e.code(), e.what());
  } catch (const std::exception& e) {
    return wire::make_error(msg.session_id, "internal", e.what());
  }
}

std::size_t serve(WorkerState& state, transport::Channel& channel,
                  std::chrono::milliseconds idle_timeout) {
  for (;;) {
    std::optional<wire::Message> msg;
    try {
      msg = channel.receive(idle_timeout);
    } catch (const transport::TransportError&) {
      break;
    } catch (const wire::WireError&) {
      break;
    }
    try {
      channel.send(state.handle(*msg));
    } catch (const transport::TransportError&) {
      break;
    }
  }
  return state.rounds_served();
}

}  // namespace secpower::worker
