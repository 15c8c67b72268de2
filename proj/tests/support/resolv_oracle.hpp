#pragma once

// Reference DNS encodings obtained from glibc's resolver (libresolv:
// res_nmkquery / dn_comp). These routines are an independent, widely
// deployed implementation of RFC 1035 wire format and serve as the
// oracle the toolkit's own codec is checked against.

#include <arpa/nameser.h>
#include <netinet/in.h>
#include <resolv.h>

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

namespace testsupport {

// Query bytes as glibc would put them on the wire, with the id field
// normalized to the given value.
inline std::vector<std::uint8_t> reference_query(const std::string& domain, int rtype,
                                                 std::uint16_t id = 0) {
  struct __res_state st;
  std::memset(&st, 0, sizeof(st));
  if (res_ninit(&st) != 0) throw std::runtime_error("res_ninit failed");
  unsigned char buf[NS_PACKETSZ];
  int n = res_nmkquery(&st, QUERY, domain.c_str(), C_IN, rtype, nullptr, 0, nullptr, buf,
                       sizeof(buf));
  res_nclose(&st);
  if (n < 0) throw std::runtime_error("res_nmkquery failed for " + domain);
  buf[0] = std::uint8_t(id >> 8);
  buf[1] = std::uint8_t(id & 0xff);
  return {buf, buf + n};
}

// A response built with glibc's compressing name encoder (dn_comp): the
// answer's owner name comes out as a compression pointer into the question.
inline std::vector<std::uint8_t> reference_compressed_response(const std::string& domain,
                                                               std::uint32_t ttl,
                                                               const std::uint8_t addr[4]) {
  unsigned char msg[NS_PACKETSZ];
  std::memset(msg, 0, sizeof(msg));
  // Header: id 0x1234, qr=1 rd=1 ra=1, one question, one answer.
  msg[0] = 0x12;
  msg[1] = 0x34;
  msg[2] = 0x81;
  msg[3] = 0x80;
  msg[5] = 1; // qdcount
  msg[7] = 1; // ancount

  unsigned char* dnptrs[8];
  unsigned char** lastdnptr = dnptrs + 8;
  dnptrs[0] = msg;
  dnptrs[1] = nullptr;

  unsigned char* p = msg + 12;
  int n = dn_comp(domain.c_str(), p, int(sizeof(msg) - (p - msg)), dnptrs, lastdnptr);
  if (n < 0) throw std::runtime_error("dn_comp failed");
  p += n;
  *p++ = 0x00; *p++ = 0x01; // qtype A
  *p++ = 0x00; *p++ = 0x01; // qclass IN

  n = dn_comp(domain.c_str(), p, int(sizeof(msg) - (p - msg)), dnptrs, lastdnptr);
  if (n < 0) throw std::runtime_error("dn_comp failed");
  p += n;
  *p++ = 0x00; *p++ = 0x01; // type A
  *p++ = 0x00; *p++ = 0x01; // class IN
  *p++ = std::uint8_t(ttl >> 24);
  *p++ = std::uint8_t(ttl >> 16);
  *p++ = std::uint8_t(ttl >> 8);
  *p++ = std::uint8_t(ttl);
  *p++ = 0x00; *p++ = 0x04; // rdlength
  std::memcpy(p, addr, 4);
  p += 4;
  return {msg, p};
}

// Fixed domain sample for encoder comparison: mixed label counts, lengths
// and cases, including maximum-length labels.
inline const std::vector<std::string>& oracle_domains() {
  static const std::vector<std::string> domains = {
      "example.com",
      "www.example.com",
      "a.b",
      "x.yz",
      "mail.google.com",
      "WWW.EXAMPLE.COM",
      "MiXeD.CaSe.Org",
      "cdn.static.assets.example.net",
      "a.very.deep.chain.of.labels.example.org",
      "single-label-with-hyphens.example",
      "0digit.example.com",
      "9to5.example.com",
      "xn--idna-unaware.example",
      "api.v2.service.internal.example.io",
      "long-label-aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa.example.com",
      "abcdefghijklmnopqrstuvwxyzabcdefghijklmnopqrstuvwxyzabcdefghijk.com",
      "s3.eu-central-1.amazonaws.com",
      "update.windows.com",
      "edge-chat.facebook.com",
      "safebrowsing.googleapis.com",
      "collector.github.com",
      "i.ytimg.com",
      "pixel.quantserve.com",
      "ads.doubleclick.net",
      "telemetry.mozilla.org",
      "ocsp.digicert.com",
      "crl.identrust.com",
      "pool.ntp.org",
      "time.cloudflare.com",
      "dns.quad9.net",
      "one.one.one.one",
      "dns64.dns.google",
      "mozilla.cloudflare-dns.com",
      "chrome.cloudflare-dns.com",
      "firefox.settings.services.mozilla.com",
      "shavar.services.mozilla.com",
      "push.services.mozilla.com",
      "incoming.telemetry.mozilla.org",
      "img-getpocket.cdn.mozilla.net",
      "tiles.services.mozilla.com",
      "location.services.mozilla.com",
      "d2yw7jilxa8093.cloudfront.net",
      "b-ring.msedge.net",
      "outlook.office365.com",
      "teams.microsoft.com",
      "login.microsoftonline.com",
      "settings-win.data.microsoft.com",
      "v10.events.data.microsoft.com",
      "watson.telemetry.microsoft.com",
      "very.long.fully.qualified.domain.name.with.many.parts.example.museum",
  };
  return domains;
}

} // namespace testsupport
