#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dohscope/errors.hpp"

namespace dohscope {

// RFC 4648 base64url without '=' padding, as used for the dns= query
// parameter. Unpadded output is mandatory there: '=' would need percent
// escaping inside a URI.

inline std::string base64url_encode_nopad(const std::uint8_t* data, std::size_t len) {
  static constexpr char alphabet[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= len) {
    std::uint32_t v = (std::uint32_t(data[i]) << 16) | (std::uint32_t(data[i + 1]) << 8) |
                      std::uint32_t(data[i + 2]);
    out.push_back(alphabet[(v >> 18) & 0x3f]);
    out.push_back(alphabet[(v >> 12) & 0x3f]);
    out.push_back(alphabet[(v >> 6) & 0x3f]);
    out.push_back(alphabet[v & 0x3f]);
    i += 3;
  }
  if (i + 1 == len) {
    std::uint32_t v = std::uint32_t(data[i]) << 16;
    out.push_back(alphabet[(v >> 18) & 0x3f]);
    out.push_back(alphabet[(v >> 12) & 0x3f]);
  } else if (i + 2 == len) {
    std::uint32_t v = (std::uint32_t(data[i]) << 16) | (std::uint32_t(data[i + 1]) << 8);
    out.push_back(alphabet[(v >> 18) & 0x3f]);
    out.push_back(alphabet[(v >> 12) & 0x3f]);
    out.push_back(alphabet[(v >> 6) & 0x3f]);
  }
  return out;
}

inline std::string base64url_encode_nopad(const std::vector<std::uint8_t>& data) {
  return base64url_encode_nopad(data.data(), data.size());
}

inline std::vector<std::uint8_t> base64url_decode_nopad(std::string_view text) {
  static constexpr int kBad = -1;
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '-') return 62;
    if (c == '_') return 63;
    return kBad;
  };

  if (text.size() % 4 == 1)
    throw Error(ErrorKind::InvalidBase64, "impossible length residue 1");

  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3 + 2);
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    int v = value_of(c);
    if (v == kBad)
      throw Error(ErrorKind::InvalidBase64, std::string("invalid character '") + c + "'");
    acc = (acc << 6) | std::uint32_t(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(std::uint8_t((acc >> bits) & 0xff));
    }
  }
  // Leftover bits must be zero filler from the final partial group.
  if (bits > 0 && (acc & ((1u << bits) - 1)) != 0)
    throw Error(ErrorKind::InvalidBase64, "non-zero trailing bits");
  return out;
}

} // namespace dohscope
