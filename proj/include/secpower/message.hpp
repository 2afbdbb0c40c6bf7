#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <gmpxx.h>

// Wire messages exchanged between the client and the worker.
//
// Frame: 4-byte big-endian body length, then a compact JSON object with
// sorted keys:
//   {"kind": ..., "payload": {...}, "round_index": k, "session_id": ..., "version": 1}
// round_index is present only on matvec_request / matvec_response. Big
// integers travel as canonical lowercase hex strings.
namespace secpower::wire {

inline constexpr int kProtocolVersion = 1;

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionMismatch : public WireError {
 public:
  using WireError::WireError;
};

class TruncatedFrame : public WireError {
 public:
  using WireError::WireError;
};

class NonCanonicalInteger : public WireError {
 public:
  using WireError::WireError;
};

enum class Kind { StoreMatrix, MatVecRequest, MatVecResponse, Ack, Error };

std::string_view kind_name(Kind kind);

// Encrypted matrix, row-major. Rows are kept as received so that a ragged
// grid can reach the worker's validation.
struct StoreMatrix {
  mpz_class modulus;
  std::string key_id;
  unsigned frac_bits = 0;
  std::vector<std::vector<mpz_class>> cells;

  friend bool operator==(const StoreMatrix&, const StoreMatrix&) = default;
};

// Masked (and optionally scaled) iterate, canonical residues in [0, n).
struct MatVecRequest {
  std::vector<mpz_class> z;

  friend bool operator==(const MatVecRequest&, const MatVecRequest&) = default;
};

struct MatVecResponse {
  std::string key_id;
  std::vector<mpz_class> y;

  friend bool operator==(const MatVecResponse&, const MatVecResponse&) = default;
};

struct Ack {
  friend bool operator==(const Ack&, const Ack&) = default;
};

struct ErrorReply {
  std::string code;
  std::string text;

  friend bool operator==(const ErrorReply&, const ErrorReply&) = default;
};

using Payload = std::variant<StoreMatrix, MatVecRequest, MatVecResponse, Ack, ErrorReply>;

struct Message {
  int version = kProtocolVersion;
  std::string session_id;
  std::optional<std::uint64_t> round_index;
  Payload payload;

  Kind kind() const { return static_cast<Kind>(payload.index()); }

  friend bool operator==(const Message&, const Message&) = default;
};

Message make_store(std::string session_id, StoreMatrix body);
Message make_request(std::string session_id, std::uint64_t round, MatVecRequest body);
Message make_response(std::string session_id, std::uint64_t round, MatVecResponse body);
Message make_ack(std::string session_id);
Message make_error(std::string session_id, std::string code, std::string text);

// Length-prefixed frame.
std::string serialize(const Message& msg);
// Parses one complete frame; trailing bytes are an error.
Message deserialize(std::string_view frame);

// JSON body without the length prefix.
std::string serialize_body(const Message& msg);
Message deserialize_body(std::string_view body);

std::uint32_t read_length_prefix(std::string_view header);
std::string length_prefix(std::uint32_t length);

}  // namespace secpower::wire
