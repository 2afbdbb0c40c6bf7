#include "secpower/bigint.hpp"

#include <openssl/evp.h>

namespace secpower {

std::string to_hex(const mpz_class& value) {
  if (value < 0) throw EncodingFormatError("to_hex: negative value");
  return value.get_str(16);
}

mpz_class from_hex(std::string_view text) {
  if (text.empty()) throw EncodingFormatError("empty hex integer");
  if (text.size() > 1 && text.front() == '0') {
    throw EncodingFormatError("non-canonical hex integer (leading zero)");
  }
  for (char ch : text) {
    const bool digit = ch >= '0' && ch <= '9';
    const bool lower = ch >= 'a' && ch <= 'f';
    if (!digit && !lower) throw EncodingFormatError("non-canonical hex integer (bad digit)");
  }
  return mpz_class(std::string(text), 16);
}

std::string bytes_to_hex(const std::uint8_t* data, std::size_t size) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(size * 2);
  for (std::size_t i = 0; i < size; ++i) {
    out.push_back(kDigits[data[i] >> 4]);
    out.push_back(kDigits[data[i] & 0xf]);
  }
  return out;
}

struct Sha256::Impl {
  EVP_MD_CTX* ctx = nullptr;
  ~Impl() { EVP_MD_CTX_free(ctx); }
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
  impl_->ctx = EVP_MD_CTX_new();
  if (impl_->ctx == nullptr || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 initialisation failed");
  }
}

Sha256::~Sha256() = default;
Sha256::Sha256(Sha256&&) noexcept = default;
Sha256& Sha256::operator=(Sha256&&) noexcept = default;

void Sha256::update(std::string_view bytes) {
  if (EVP_DigestUpdate(impl_->ctx, bytes.data(), bytes.size()) != 1) {
    throw std::runtime_error("SHA-256 update failed");
  }
}

Sha256::Digest Sha256::peek() const {
  EVP_MD_CTX* copy = EVP_MD_CTX_new();
  if (copy == nullptr || EVP_MD_CTX_copy_ex(copy, impl_->ctx) != 1) {
    EVP_MD_CTX_free(copy);
    throw std::runtime_error("SHA-256 copy failed");
  }
  Digest out{};
  unsigned int len = 0;
  const int ok = EVP_DigestFinal_ex(copy, out.data(), &len);
  EVP_MD_CTX_free(copy);
  if (ok != 1 || len != out.size()) throw std::runtime_error("SHA-256 finalisation failed");
  return out;
}

Sha256::Digest Sha256::of(std::string_view bytes) {
  Sha256 h;
  h.update(bytes);
  return h.peek();
}

}  // namespace secpower
