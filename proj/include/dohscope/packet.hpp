#pragma once

#include <arpa/inet.h>

#include <compare>
#include <cstdint>
#include <cstring>
#include <string>

namespace dohscope::capture {

enum class Transport : std::uint8_t { Tcp, Udp };

inline const char* transport_name(Transport t) { return t == Transport::Tcp ? "tcp" : "udp"; }

// IPv4 or IPv6 address as raw bytes. Ordering is family first, then raw
// byte order; used only to pick a canonical flow-key orientation.
struct IpAddr {
  std::uint8_t family = 4; // 4 or 6
  std::uint8_t bytes[16] = {};

  static IpAddr v4(std::uint32_t host_order) {
    IpAddr a;
    a.family = 4;
    a.bytes[0] = std::uint8_t(host_order >> 24);
    a.bytes[1] = std::uint8_t(host_order >> 16);
    a.bytes[2] = std::uint8_t(host_order >> 8);
    a.bytes[3] = std::uint8_t(host_order);
    return a;
  }

  static IpAddr from_text(const std::string& text) {
    IpAddr a;
    in_addr v4{};
    if (inet_pton(AF_INET, text.c_str(), &v4) == 1) {
      a.family = 4;
      std::memcpy(a.bytes, &v4, 4);
      return a;
    }
    in6_addr v6{};
    if (inet_pton(AF_INET6, text.c_str(), &v6) == 1) {
      a.family = 6;
      std::memcpy(a.bytes, &v6, 16);
      return a;
    }
    a.family = 0;
    return a;
  }

  bool valid() const { return family == 4 || family == 6; }

  std::string to_text() const {
    char buf[INET6_ADDRSTRLEN] = {};
    if (family == 4) {
      inet_ntop(AF_INET, bytes, buf, sizeof(buf));
    } else if (family == 6) {
      inet_ntop(AF_INET6, bytes, buf, sizeof(buf));
    } else {
      return "?";
    }
    return buf;
  }

  friend std::strong_ordering operator<=>(const IpAddr& a, const IpAddr& b) {
    if (a.family != b.family) return a.family <=> b.family;
    int c = std::memcmp(a.bytes, b.bytes, a.family == 4 ? 4 : 16);
    if (c < 0) return std::strong_ordering::less;
    if (c > 0) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
  }
  friend bool operator==(const IpAddr& a, const IpAddr& b) { return (a <=> b) == 0; }
};

// One TCP or UDP packet. payload_len counts transport payload bytes, so
// pure ACKs appear with payload_len 0 but still count as packets.
struct PacketRecord {
  std::int64_t ts_us = 0;
  IpAddr src_ip;
  IpAddr dst_ip;
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  Transport protocol = Transport::Tcp;
  std::uint32_t payload_len = 0;
  std::uint32_t total_len = 0; // original wire length
};

} // namespace dohscope::capture
