#pragma once

#include <cstdint>

#include "dohscope/dns_codec.hpp"
#include "dohscope/errors.hpp"

namespace dohscope::dns {

constexpr std::uint16_t kEdnsOptionPadding = 12;
constexpr std::uint16_t kEdnsUdpPayloadSize = 4096;

// 468 mirrors the block size used by deployed padding-enabled clients.
constexpr std::size_t kDefaultPaddingBlock = 468;

// Fixed cost of an OPT record carrying an empty padding option:
// root name (1) + type (2) + class (2) + ttl (4) + rdlength (2) +
// option code (2) + option length (2).
constexpr std::size_t kEmptyPaddingOptOverhead = 15;

inline bool has_opt_record(const Message& m) {
  for (const auto& rr : m.additional)
    if (rr.rtype == kTypeOPT) return true;
  return false;
}

// Appends an OPT record with a padding option sized so that the encoded
// message length becomes the smallest multiple of `block` that can hold the
// message plus the OPT record's own fixed overhead. A message that lands
// exactly on a block boundary after adding the empty option gets zero
// padding bytes; otherwise padding fills up to the next boundary. All
// padding bytes are zero.
inline Message apply_edns_padding(const Message& q, std::size_t block = kDefaultPaddingBlock) {
  if (block < 1) throw Error(ErrorKind::ConfigError, "padding block must be >= 1");
  if (has_opt_record(q))
    throw Error(ErrorKind::InvalidMessage, "message already carries an OPT record");

  const std::size_t base = encode_message(q).size() + kEmptyPaddingOptOverhead;
  const std::size_t target = (base + block - 1) / block * block;
  if (target > kMaxMessageSize)
    throw Error(ErrorKind::EncodingOverflow, "padded message exceeds 65535 bytes");
  const std::size_t pad = target - base;

  ResourceRecord opt;
  opt.name = Name(); // root
  opt.rtype = kTypeOPT;
  opt.rclass = kEdnsUdpPayloadSize;
  opt.ttl = 0;
  opt.rdata.reserve(4 + pad);
  opt.rdata.push_back(std::uint8_t(kEdnsOptionPadding >> 8));
  opt.rdata.push_back(std::uint8_t(kEdnsOptionPadding & 0xff));
  opt.rdata.push_back(std::uint8_t(pad >> 8));
  opt.rdata.push_back(std::uint8_t(pad & 0xff));
  opt.rdata.insert(opt.rdata.end(), pad, 0);

  Message padded = q;
  padded.additional.push_back(std::move(opt));
  padded.sync_counts();
  return padded;
}

} // namespace dohscope::dns
