#pragma once

// Compact HS256 JSON Web Tokens for wrapper sessions.

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "ssfc/core.hpp"

namespace ssfc {

namespace detail {

inline std::string base64url_encode(std::string_view in) {
  std::string out(4 * ((in.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(in.data()), static_cast<int>(in.size()));
  out.resize(static_cast<std::size_t>(n));
  while (!out.empty() && out.back() == '=') out.pop_back();
  for (char& c : out) {
    if (c == '+') c = '-';
    else if (c == '/') c = '_';
  }
  return out;
}

inline std::optional<std::string> base64url_decode(std::string_view in) {
  std::string s(in);
  for (char& c : s) {
    if (c == '-') c = '+';
    else if (c == '_') c = '/';
    else if (c == '+' || c == '/' || c == '=') return std::nullopt;
  }
  const std::size_t pad = (4 - s.size() % 4) % 4;
  if (pad == 3) return std::nullopt;
  s.append(pad, '=');
  std::string out(3 * s.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(s.data()), static_cast<int>(s.size()));
  if (n < 0) return std::nullopt;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

inline std::string hmac_sha256(std::string_view key, std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), reinterpret_cast<const unsigned char*>(data.data()),
       data.size(), md.data(), &len);
  return std::string(reinterpret_cast<const char*>(md.data()), len);
}

inline bool constant_time_equal(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  unsigned char diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff |= static_cast<unsigned char>(a[i] ^ b[i]);
  return diff == 0;
}

}  // namespace detail

struct TokenClaims {
  std::string subject;     // instance id
  std::uint64_t serial = 0;  // unique per issued token
  double issued_at = 0.0;
  double expires_at = 0.0;
};

class TokenSigner {
 public:
  /// Random 256-bit key.
  TokenSigner() {
    key_.resize(32);
    if (RAND_bytes(reinterpret_cast<unsigned char*>(key_.data()), static_cast<int>(key_.size())) != 1)
      throw Error(ErrorCode::invalid_argument, "could not generate token key");
  }
  explicit TokenSigner(std::string key) : key_(std::move(key)) {
    if (key_.empty()) throw Error(ErrorCode::invalid_argument, "empty token key");
  }

  std::string sign(const TokenClaims& claims) const {
    static const std::string header = detail::base64url_encode(R"({"alg":"HS256","typ":"JWT"})");
    nlohmann::json payload = {
        {"sub", claims.subject}, {"jti", claims.serial}, {"iat", claims.issued_at}, {"exp", claims.expires_at}};
    std::string signing_input = header + "." + detail::base64url_encode(payload.dump());
    return signing_input + "." + detail::base64url_encode(detail::hmac_sha256(key_, signing_input));
  }

  /// Claims of a correctly signed token, regardless of expiry.
  std::optional<TokenClaims> verify(std::string_view token) const {
    const auto first = token.find('.');
    const auto second = token.rfind('.');
    if (first == std::string_view::npos || first == second) return std::nullopt;
    const auto signing_input = token.substr(0, second);
    const auto signature = detail::base64url_decode(token.substr(second + 1));
    if (!signature || !detail::constant_time_equal(*signature, detail::hmac_sha256(key_, signing_input)))
      return std::nullopt;
    const auto payload = detail::base64url_decode(token.substr(first + 1, second - first - 1));
    if (!payload) return std::nullopt;
    try {
      const auto j = nlohmann::json::parse(*payload);
      return TokenClaims{j.at("sub").get<std::string>(), j.at("jti").get<std::uint64_t>(), j.at("iat").get<double>(),
                         j.at("exp").get<double>()};
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;
    }
  }

 private:
  std::string key_;
};

}  // namespace ssfc
