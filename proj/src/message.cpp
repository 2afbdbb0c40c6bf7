#include "secpower/message.hpp"

#include <array>

#include <nlohmann/json.hpp>

#include "secpower/bigint.hpp"

namespace secpower::wire {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 5> kKindNames = {
    "store_matrix", "matvec_request", "matvec_response", "ack", "error"};

Kind kind_from_name(const std::string& name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return static_cast<Kind>(i);
  }
  throw WireError("unknown message kind '" + name + "'");
}

json hex_array(const std::vector<mpz_class>& values) {
  json out = json::array();
  for (const auto& v : values) out.push_back(to_hex(v));
  return out;
}

mpz_class parse_integer(const json& j) {
  if (!j.is_string()) throw WireError("integer fields must be hex strings");
  try {
    return from_hex(j.get_ref<const std::string&>());
  } catch (const EncodingFormatError& e) {
    throw NonCanonicalInteger(e.what());
  }
}

std::vector<mpz_class> parse_integers(const json& j) {
  if (!j.is_array()) throw WireError("expected an array of hex integers");
  std::vector<mpz_class> out;
  out.reserve(j.size());
  for (const auto& item : j) out.push_back(parse_integer(item));
  return out;
}

const json& field(const json& obj, const char* name) {
  auto it = obj.find(name);
  if (it == obj.end()) throw WireError(std::string("missing field '") + name + "'");
  return *it;
}

std::string string_field(const json& obj, const char* name) {
  const json& v = field(obj, name);
  if (!v.is_string()) throw WireError(std::string("field '") + name + "' must be a string");
  return v.get<std::string>();
}

void require_keys(const json& obj, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw WireError("expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* name : allowed) known = known || it.key() == name;
    if (!known) throw WireError("unexpected field '" + it.key() + "'");
  }
}

struct PayloadToJson {
  json operator()(const StoreMatrix& s) const {
    json cells = json::array();
    for (const auto& row : s.cells) cells.push_back(hex_array(row));
    return {{"cells", std::move(cells)},
            {"frac_bits", s.frac_bits},
            {"key_id", s.key_id},
            {"modulus", to_hex(s.modulus)}};
  }
  json operator()(const MatVecRequest& r) const { return {{"z", hex_array(r.z)}}; }
  json operator()(const MatVecResponse& r) const {
    return {{"key_id", r.key_id}, {"y", hex_array(r.y)}};
  }
  json operator()(const Ack&) const { return json::object(); }
  json operator()(const ErrorReply& e) const { return {{"code", e.code}, {"text", e.text}}; }
};

Payload payload_from_json(Kind kind, const json& p) {
  switch (kind) {
    case Kind::StoreMatrix: {
      require_keys(p, {"cells", "frac_bits", "key_id", "modulus"});
      StoreMatrix s;
      s.modulus = parse_integer(field(p, "modulus"));
      s.key_id = string_field(p, "key_id");
      const json& fb = field(p, "frac_bits");
      if (!fb.is_number_unsigned()) throw WireError("frac_bits must be a nonnegative integer");
      s.frac_bits = fb.get<unsigned>();
      const json& cells = field(p, "cells");
      if (!cells.is_array()) throw WireError("cells must be an array of rows");
      for (const auto& row : cells) s.cells.push_back(parse_integers(row));
      return s;
    }
    case Kind::MatVecRequest:
      require_keys(p, {"z"});
      return MatVecRequest{parse_integers(field(p, "z"))};
    case Kind::MatVecResponse:
      require_keys(p, {"key_id", "y"});
      return MatVecResponse{string_field(p, "key_id"), parse_integers(field(p, "y"))};
    case Kind::Ack:
      require_keys(p, {});
      return Ack{};
    case Kind::Error:
      require_keys(p, {"code", "text"});
      return ErrorReply{string_field(p, "code"), string_field(p, "text")};
  }
  throw WireError("unreachable message kind");
}

bool carries_round(Kind kind) {
  return kind == Kind::MatVecRequest || kind == Kind::MatVecResponse;
}

}  // namespace

std::string_view kind_name(Kind kind) { return kKindNames.at(static_cast<std::size_t>(kind)); }

Message make_store(std::string session_id, StoreMatrix body) {
  return Message{kProtocolVersion, std::move(session_id), std::nullopt, std::move(body)};
}

Message make_request(std::string session_id, std::uint64_t round, MatVecRequest body) {
  return Message{kProtocolVersion, std::move(session_id), round, std::move(body)};
}

Message make_response(std::string session_id, std::uint64_t round, MatVecResponse body) {
  return Message{kProtocolVersion, std::move(session_id), round, std::move(body)};
}

Message make_ack(std::string session_id) {
  return Message{kProtocolVersion, std::move(session_id), std::nullopt, Ack{}};
}

Message make_error(std::string session_id, std::string code, std::string text) {
  return Message{kProtocolVersion, std::move(session_id), std::nullopt,
                 ErrorReply{std::move(code), std::move(text)}};
}

std::string serialize_body(const Message& msg) {
  if (carries_round(msg.kind()) != msg.round_index.has_value()) {
    throw WireError("round_index must be present exactly on matvec messages");
  }
  json j = {{"version", msg.version},
            {"kind", kind_name(msg.kind())},
            {"session_id", msg.session_id},
            {"payload", std::visit(PayloadToJson{}, msg.payload)}};
  if (msg.round_index) j["round_index"] = *msg.round_index;
  // nlohmann's object type is a std::map, so keys come out sorted.
  return j.dump();
}

Message deserialize_body(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw WireError(std::string("malformed JSON body: ") + e.what());
  }
  if (!j.is_object()) throw WireError("message body must be a JSON object");
  const json& version = field(j, "version");
  if (!version.is_number_integer()) throw WireError("version must be an integer");
  if (version.get<long long>() != kProtocolVersion) {
    throw VersionMismatch("unsupported protocol version " + version.dump());
  }
  require_keys(j, {"kind", "payload", "round_index", "session_id", "version"});

  Message msg;
  const Kind kind = kind_from_name(string_field(j, "kind"));
  msg.session_id = string_field(j, "session_id");
  auto round = j.find("round_index");
  if (carries_round(kind)) {
    if (round == j.end() || !round->is_number_unsigned()) {
      throw WireError("matvec messages need a nonnegative round_index");
    }
    msg.round_index = round->get<std::uint64_t>();
  } else if (round != j.end()) {
    throw WireError("round_index is only allowed on matvec messages");
  }
  msg.payload = payload_from_json(kind, field(j, "payload"));
  return msg;
}

std::string length_prefix(std::uint32_t length) {
  std::string out(4, '\0');
  for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((length >> (8 * (3 - i))) & 0xff);
  return out;
}

std::uint32_t read_length_prefix(std::string_view header) {
  if (header.size() < 4) throw TruncatedFrame("frame shorter than its length prefix");
  std::uint32_t length = 0;
  for (int i = 0; i < 4; ++i) length = (length << 8) | static_cast<unsigned char>(header[i]);
  return length;
}

std::string serialize(const Message& msg) {
  std::string body = serialize_body(msg);
  if (body.size() > 0xffffffffu) throw WireError("message too large for a frame");
  return length_prefix(static_cast<std::uint32_t>(body.size())) + body;
}

Message deserialize(std::string_view frame) {
  const std::uint32_t length = read_length_prefix(frame);
  if (frame.size() - 4 < length) throw TruncatedFrame("frame body shorter than declared length");
  if (frame.size() - 4 > length) throw WireError("trailing bytes after frame");
  return deserialize_body(frame.substr(4));
}

}  // namespace secpower::wire
