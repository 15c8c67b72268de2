#pragma once

// Randomized valid DNS messages for roundtrip property tests.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dohscope/dns_codec.hpp"

namespace testsupport {

inline dohscope::dns::Name random_name(std::mt19937& rng) {
  static constexpr char charset[] =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_";
  std::uniform_int_distribution<int> label_count(1, 5);
  std::uniform_int_distribution<int> label_len(1, 18);
  std::uniform_int_distribution<int> ch(0, int(sizeof(charset)) - 2);
  std::vector<std::string> labels;
  int n = label_count(rng);
  for (int i = 0; i < n; i++) {
    std::string label;
    int len = label_len(rng);
    for (int j = 0; j < len; j++) label.push_back(charset[ch(rng)]);
    labels.push_back(std::move(label));
  }
  return dohscope::dns::Name(std::move(labels));
}

inline dohscope::dns::ResourceRecord random_record(std::mt19937& rng) {
  using namespace dohscope::dns;
  ResourceRecord rr;
  rr.name = random_name(rng);
  std::uniform_int_distribution<int> kind(0, 4);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<int> blob_len(0, 48);
  switch (kind(rng)) {
    case 0:
      rr.rtype = kTypeA;
      rr.rdata.resize(4);
      break;
    case 1:
      rr.rtype = kTypeAAAA;
      rr.rdata.resize(16);
      break;
    case 2:
      rr.rtype = kTypeTXT;
      rr.rdata.resize(std::size_t(blob_len(rng)));
      break;
    case 3:
      rr.rtype = kTypeCNAME;
      rr.rdata.resize(std::size_t(blob_len(rng)));
      break;
    default:
      rr.rtype = std::uint16_t(std::uniform_int_distribution<int>(256, 4096)(rng));
      rr.rdata.resize(std::size_t(blob_len(rng)));
      break;
  }
  for (auto& b : rr.rdata) b = std::uint8_t(byte(rng));
  rr.rclass = kClassIn;
  rr.ttl = std::uint32_t(std::uniform_int_distribution<std::int64_t>(0, 0xffffffffLL)(rng));
  return rr;
}

inline dohscope::dns::Message random_message(std::mt19937& rng) {
  using namespace dohscope::dns;
  Message m;
  std::uniform_int_distribution<int> bit(0, 1);
  std::uniform_int_distribution<int> nibble(0, 15);
  std::uniform_int_distribution<int> small(0, 3);
  m.header.id = std::uint16_t(std::uniform_int_distribution<int>(0, 65535)(rng));
  m.header.qr = bit(rng);
  m.header.opcode = std::uint8_t(nibble(rng));
  m.header.aa = bit(rng);
  m.header.tc = m.header.qr && bit(rng); // tc only valid on responses
  m.header.rd = bit(rng);
  m.header.ra = bit(rng);
  m.header.rcode = std::uint8_t(nibble(rng));

  int nq = small(rng);
  for (int i = 0; i < nq; i++) {
    Question q;
    q.qname = random_name(rng);
    q.qtype = std::uint16_t(std::uniform_int_distribution<int>(1, 300)(rng));
    q.qclass = kClassIn;
    m.questions.push_back(std::move(q));
  }
  int na = small(rng), nauth = small(rng), nadd = small(rng);
  for (int i = 0; i < na; i++) m.answers.push_back(random_record(rng));
  for (int i = 0; i < nauth; i++) m.authority.push_back(random_record(rng));
  for (int i = 0; i < nadd; i++) m.additional.push_back(random_record(rng));
  m.sync_counts();
  return m;
}

} // namespace testsupport
