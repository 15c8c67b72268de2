#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dohscope/errors.hpp"

namespace dohscope::dns {

using Bytes = std::vector<std::uint8_t>;

// Record types the toolkit names explicitly. Anything else is carried as
// an opaque 16-bit value with opaque rdata.
constexpr std::uint16_t kTypeA = 1;
constexpr std::uint16_t kTypeNS = 2;
constexpr std::uint16_t kTypeCNAME = 5;
constexpr std::uint16_t kTypeSOA = 6;
constexpr std::uint16_t kTypeTXT = 16;
constexpr std::uint16_t kTypeAAAA = 28;
constexpr std::uint16_t kTypeOPT = 41;
constexpr std::uint16_t kClassIn = 1;

constexpr std::uint8_t kRcodeNoError = 0;
constexpr std::uint8_t kRcodeFormErr = 1;
constexpr std::uint8_t kRcodeServFail = 2;
constexpr std::uint8_t kRcodeNxDomain = 3;

constexpr std::size_t kMaxMessageSize = 65535;
constexpr std::size_t kMaxNameWireLength = 255;
constexpr std::size_t kMaxLabelLength = 63;
constexpr std::size_t kUdpPayloadLimit = 512;

inline const char* rcode_name(int rcode) {
  switch (rcode) {
    case 0: return "NOERROR";
    case 1: return "FORMERR";
    case 2: return "SERVFAIL";
    case 3: return "NXDOMAIN";
    case 4: return "NOTIMP";
    case 5: return "REFUSED";
    default: return "OTHER";
  }
}

inline std::uint16_t rtype_from_text(std::string_view t) {
  std::string u(t);
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return std::toupper(c); });
  if (u == "A") return kTypeA;
  if (u == "NS") return kTypeNS;
  if (u == "CNAME") return kTypeCNAME;
  if (u == "SOA") return kTypeSOA;
  if (u == "TXT") return kTypeTXT;
  if (u == "AAAA") return kTypeAAAA;
  // Numeric form is accepted everywhere a mnemonic is.
  std::uint32_t v = 0;
  if (u.empty()) throw Error(ErrorKind::ConfigError, "empty record type");
  for (char c : u) {
    if (c < '0' || c > '9')
      throw Error(ErrorKind::ConfigError, "unknown record type '" + std::string(t) + "'");
    v = v * 10 + std::uint32_t(c - '0');
    if (v > 65535) throw Error(ErrorKind::ConfigError, "record type out of range");
  }
  return std::uint16_t(v);
}

inline const char* rtype_name(std::uint16_t t) {
  switch (t) {
    case kTypeA: return "A";
    case kTypeNS: return "NS";
    case kTypeCNAME: return "CNAME";
    case kTypeSOA: return "SOA";
    case kTypeTXT: return "TXT";
    case kTypeAAAA: return "AAAA";
    case kTypeOPT: return "OPT";
    default: return "";
  }
}

// A domain name as a sequence of labels. Kept as raw label bytes rather
// than dotted text so that decoding is total and re-encoding is exact.
class Name {
public:
  Name() = default;

  explicit Name(std::vector<std::string> labels) : labels_(std::move(labels)) {}

  // Parses dotted text. A single trailing dot is accepted (absolute form);
  // empty labels and non-ASCII bytes are rejected.
  static Name from_text(std::string_view text) {
    if (!text.empty() && text.back() == '.') text.remove_suffix(1);
    if (text.empty()) throw Error(ErrorKind::InvalidDomain, "empty domain name");
    Name n;
    std::string label;
    auto flush = [&] {
      if (label.empty()) throw Error(ErrorKind::InvalidDomain, "empty label");
      if (label.size() > kMaxLabelLength)
        throw Error(ErrorKind::InvalidDomain, "label longer than 63 bytes");
      n.labels_.push_back(label);
      label.clear();
    };
    for (char c : text) {
      unsigned char uc = static_cast<unsigned char>(c);
      if (uc >= 0x80)
        throw Error(ErrorKind::InvalidDomain, "non-ASCII byte in domain name");
      if (uc < 0x21 || uc == 0x7f)
        throw Error(ErrorKind::InvalidDomain, "control or space byte in domain name");
      if (c == '.') {
        flush();
      } else {
        label.push_back(c);
      }
    }
    flush();
    if (n.wire_length() > kMaxNameWireLength)
      throw Error(ErrorKind::InvalidDomain, "encoded name longer than 255 bytes");
    return n;
  }

  const std::vector<std::string>& labels() const { return labels_; }
  bool is_root() const { return labels_.empty(); }

  // 1 length byte per label plus the terminating zero byte.
  std::size_t wire_length() const {
    std::size_t n = 1;
    for (const auto& l : labels_) n += 1 + l.size();
    return n;
  }

  std::string to_text() const {
    if (labels_.empty()) return ".";
    std::string out;
    for (const auto& l : labels_) {
      if (!out.empty()) out.push_back('.');
      out += l;
    }
    return out;
  }

  // RFC 1035 semantics: names compare case-insensitively, case is preserved.
  friend bool operator==(const Name& a, const Name& b) {
    if (a.labels_.size() != b.labels_.size()) return false;
    for (std::size_t i = 0; i < a.labels_.size(); i++) {
      const std::string& x = a.labels_[i];
      const std::string& y = b.labels_[i];
      if (x.size() != y.size()) return false;
      for (std::size_t j = 0; j < x.size(); j++) {
        if (std::tolower(static_cast<unsigned char>(x[j])) !=
            std::tolower(static_cast<unsigned char>(y[j])))
          return false;
      }
    }
    return true;
  }

private:
  std::vector<std::string> labels_;
};

struct Header {
  std::uint16_t id = 0;
  bool qr = false;
  std::uint8_t opcode = 0;
  bool aa = false;
  bool tc = false;
  bool rd = false;
  bool ra = false;
  std::uint8_t rcode = 0;
  std::uint16_t qdcount = 0;
  std::uint16_t ancount = 0;
  std::uint16_t nscount = 0;
  std::uint16_t arcount = 0;

  friend bool operator==(const Header&, const Header&) = default;
};

struct Question {
  Name qname;
  std::uint16_t qtype = kTypeA;
  std::uint16_t qclass = kClassIn;

  friend bool operator==(const Question&, const Question&) = default;
};

struct ResourceRecord {
  Name name;
  std::uint16_t rtype = kTypeA;
  std::uint16_t rclass = kClassIn;
  std::uint32_t ttl = 0;
  Bytes rdata;

  // Typed views for the address types the toolkit interprets.
  std::optional<std::array<std::uint8_t, 4>> ipv4() const {
    if (rtype != kTypeA || rdata.size() != 4) return std::nullopt;
    std::array<std::uint8_t, 4> a{};
    std::copy(rdata.begin(), rdata.end(), a.begin());
    return a;
  }

  std::optional<std::array<std::uint8_t, 16>> ipv6() const {
    if (rtype != kTypeAAAA || rdata.size() != 16) return std::nullopt;
    std::array<std::uint8_t, 16> a{};
    std::copy(rdata.begin(), rdata.end(), a.begin());
    return a;
  }

  std::string address_text() const {
    if (auto v4 = ipv4()) {
      return std::to_string((*v4)[0]) + "." + std::to_string((*v4)[1]) + "." +
             std::to_string((*v4)[2]) + "." + std::to_string((*v4)[3]);
    }
    if (auto v6 = ipv6()) {
      static constexpr char hexd[] = "0123456789abcdef";
      std::string out;
      for (int i = 0; i < 16; i += 2) {
        if (i) out.push_back(':');
        out.push_back(hexd[(*v6)[i] >> 4]);
        out.push_back(hexd[(*v6)[i] & 0xf]);
        out.push_back(hexd[(*v6)[i + 1] >> 4]);
        out.push_back(hexd[(*v6)[i + 1] & 0xf]);
      }
      return out;
    }
    return "";
  }

  friend bool operator==(const ResourceRecord&, const ResourceRecord&) = default;
};

struct Message {
  Header header;
  std::vector<Question> questions;
  std::vector<ResourceRecord> answers;
  std::vector<ResourceRecord> authority;
  std::vector<ResourceRecord> additional;

  // Rewrites the header counters from the actual section sizes.
  void sync_counts() {
    header.qdcount = std::uint16_t(questions.size());
    header.ancount = std::uint16_t(answers.size());
    header.nscount = std::uint16_t(authority.size());
    header.arcount = std::uint16_t(additional.size());
  }

  friend bool operator==(const Message&, const Message&) = default;
};

// --- encoding -------------------------------------------------------------

namespace detail {

inline void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v & 0xff));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t((v >> 16) & 0xff));
  out.push_back(std::uint8_t((v >> 8) & 0xff));
  out.push_back(std::uint8_t(v & 0xff));
}

inline void put_name(Bytes& out, const Name& name) {
  for (const auto& label : name.labels()) {
    if (label.empty() || label.size() > kMaxLabelLength)
      throw Error(ErrorKind::InvalidDomain, "label length out of range");
    out.push_back(std::uint8_t(label.size()));
    out.insert(out.end(), label.begin(), label.end());
  }
  out.push_back(0);
}

inline void put_record(Bytes& out, const ResourceRecord& rr) {
  put_name(out, rr.name);
  put_u16(out, rr.rtype);
  put_u16(out, rr.rclass);
  put_u32(out, rr.ttl);
  if (rr.rdata.size() > 65535)
    throw Error(ErrorKind::EncodingOverflow, "rdata longer than 65535 bytes");
  put_u16(out, std::uint16_t(rr.rdata.size()));
  out.insert(out.end(), rr.rdata.begin(), rr.rdata.end());
}

} // namespace detail

// Encodes to wire format. Names are always emitted uncompressed; the
// decoder accepts compression for interoperability.
inline Bytes encode_message(const Message& m) {
  if (m.header.tc && !m.header.qr)
    throw Error(ErrorKind::InvalidMessage, "tc flag is only valid on responses");
  if (m.header.qdcount != m.questions.size() || m.header.ancount != m.answers.size() ||
      m.header.nscount != m.authority.size() || m.header.arcount != m.additional.size())
    throw Error(ErrorKind::InvalidMessage, "header counters do not match section sizes");
  for (const auto& rr : m.answers)
    if (rr.rtype == kTypeA && rr.rdata.size() != 4)
      throw Error(ErrorKind::InvalidMessage, "A rdata must be 4 bytes");

  Bytes out;
  detail::put_u16(out, m.header.id);
  std::uint16_t flags = 0;
  flags |= std::uint16_t(m.header.qr) << 15;
  flags |= std::uint16_t(m.header.opcode & 0x0f) << 11;
  flags |= std::uint16_t(m.header.aa) << 10;
  flags |= std::uint16_t(m.header.tc) << 9;
  flags |= std::uint16_t(m.header.rd) << 8;
  flags |= std::uint16_t(m.header.ra) << 7;
  flags |= std::uint16_t(m.header.rcode & 0x0f);
  detail::put_u16(out, flags);
  detail::put_u16(out, m.header.qdcount);
  detail::put_u16(out, m.header.ancount);
  detail::put_u16(out, m.header.nscount);
  detail::put_u16(out, m.header.arcount);

  for (const auto& q : m.questions) {
    detail::put_name(out, q.qname);
    detail::put_u16(out, q.qtype);
    detail::put_u16(out, q.qclass);
    if (out.size() > kMaxMessageSize)
      throw Error(ErrorKind::EncodingOverflow, "message exceeds 65535 bytes");
  }
  for (const auto* section : {&m.answers, &m.authority, &m.additional}) {
    for (const auto& rr : *section) {
      detail::put_record(out, rr);
      if (out.size() > kMaxMessageSize)
        throw Error(ErrorKind::EncodingOverflow, "message exceeds 65535 bytes");
    }
  }
  return out;
}

// --- decoding -------------------------------------------------------------

namespace detail {

class Reader {
public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return size_ - pos_; }
  std::size_t size() const { return size_; }

  std::uint8_t u8() {
    need(1, "byte");
    return data_[pos_++];
  }

  std::uint16_t u16() {
    need(2, "u16");
    std::uint16_t v = std::uint16_t(data_[pos_]) << 8 | data_[pos_ + 1];
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = (std::uint32_t(data_[pos_]) << 24) | (std::uint32_t(data_[pos_ + 1]) << 16) |
                      (std::uint32_t(data_[pos_ + 2]) << 8) | std::uint32_t(data_[pos_ + 3]);
    pos_ += 4;
    return v;
  }

  Bytes take(std::size_t n, const char* what) {
    need(n, what);
    Bytes b(data_ + pos_, data_ + pos_ + n);
    pos_ += n;
    return b;
  }

  // Decodes a possibly compressed name starting at the cursor. Pointers may
  // target any earlier or later offset; loops are rejected by bounding the
  // number of pointer hops by the message size.
  Name name() {
    std::vector<std::string> labels;
    std::size_t at = pos_;
    std::size_t decoded_len = 1; // terminating zero
    bool jumped = false;
    std::size_t hops = 0;
    while (true) {
      if (at >= size_) throw Error(ErrorKind::Truncated, "name runs past end of message");
      std::uint8_t tag = data_[at];
      if ((tag & 0xc0) == 0xc0) {
        if (at + 1 >= size_) throw Error(ErrorKind::Truncated, "compression pointer cut short");
        std::size_t target = ((std::size_t(tag) & 0x3f) << 8) | data_[at + 1];
        if (target >= size_)
          throw Error(ErrorKind::MalformedName, "compression pointer beyond buffer");
        if (++hops > size_)
          throw Error(ErrorKind::MalformedName, "compression pointer loop");
        if (!jumped) {
          pos_ = at + 2;
          jumped = true;
        }
        at = target;
        continue;
      }
      if ((tag & 0xc0) != 0)
        throw Error(ErrorKind::MalformedName, "reserved label tag");
      if (tag == 0) {
        if (!jumped) pos_ = at + 1;
        break;
      }
      if (tag > kMaxLabelLength)
        throw Error(ErrorKind::MalformedName, "label longer than 63 bytes");
      if (at + 1 + tag > size_) throw Error(ErrorKind::Truncated, "label cut short");
      decoded_len += 1 + tag;
      if (decoded_len > kMaxNameWireLength)
        throw Error(ErrorKind::MalformedName, "decoded name longer than 255 bytes");
      labels.emplace_back(reinterpret_cast<const char*>(data_ + at + 1), tag);
      at += 1 + tag;
    }
    return Name(std::move(labels));
  }

private:
  void need(std::size_t n, const char* what) const {
    if (pos_ + n > size_)
      throw Error(ErrorKind::Truncated, std::string("message ends inside ") + what);
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

inline ResourceRecord read_record(Reader& r) {
  ResourceRecord rr;
  rr.name = r.name();
  rr.rtype = r.u16();
  rr.rclass = r.u16();
  rr.ttl = r.u32();
  std::uint16_t rdlength = r.u16();
  rr.rdata = r.take(rdlength, "rdata");
  if (rr.rtype == kTypeA && rr.rdata.size() != 4)
    throw Error(ErrorKind::InvalidMessage, "A rdata must be 4 bytes");
  if (rr.rtype == kTypeAAAA && rr.rdata.size() != 16)
    throw Error(ErrorKind::InvalidMessage, "AAAA rdata must be 16 bytes");
  return rr;
}

} // namespace detail

inline Message decode_message(const std::uint8_t* data, std::size_t size) {
  detail::Reader r(data, size);
  Message m;
  if (size < 12) throw Error(ErrorKind::Truncated, "message shorter than header");
  m.header.id = r.u16();
  std::uint16_t flags = r.u16();
  m.header.qr = (flags >> 15) & 1;
  m.header.opcode = (flags >> 11) & 0x0f;
  m.header.aa = (flags >> 10) & 1;
  m.header.tc = (flags >> 9) & 1;
  m.header.rd = (flags >> 8) & 1;
  m.header.ra = (flags >> 7) & 1;
  m.header.rcode = flags & 0x0f;
  m.header.qdcount = r.u16();
  m.header.ancount = r.u16();
  m.header.nscount = r.u16();
  m.header.arcount = r.u16();

  auto section_boundary = [&](const char* section) {
    if (r.remaining() == 0)
      throw Error(ErrorKind::CountMismatch,
                  std::string("header counter exceeds available ") + section + " records");
  };

  for (std::uint16_t i = 0; i < m.header.qdcount; i++) {
    section_boundary("question");
    Question q;
    q.qname = r.name();
    q.qtype = r.u16();
    q.qclass = r.u16();
    m.questions.push_back(std::move(q));
  }
  for (std::uint16_t i = 0; i < m.header.ancount; i++) {
    section_boundary("answer");
    m.answers.push_back(detail::read_record(r));
  }
  for (std::uint16_t i = 0; i < m.header.nscount; i++) {
    section_boundary("authority");
    m.authority.push_back(detail::read_record(r));
  }
  for (std::uint16_t i = 0; i < m.header.arcount; i++) {
    section_boundary("additional");
    m.additional.push_back(detail::read_record(r));
  }
  if (r.remaining() != 0)
    throw Error(ErrorKind::InvalidMessage, "trailing bytes after final section");
  return m;
}

inline Message decode_message(const Bytes& data) {
  return decode_message(data.data(), data.size());
}

// Builds the standard single-question recursive query.
inline Message make_query(std::string_view domain, std::uint16_t qtype, std::uint16_t id) {
  Message m;
  m.header.id = id;
  m.header.qr = false;
  m.header.opcode = 0;
  m.header.rd = true;
  Question q;
  q.qname = Name::from_text(domain);
  q.qtype = qtype;
  q.qclass = kClassIn;
  m.questions.push_back(std::move(q));
  m.sync_counts();
  return m;
}

// --- TCP framing ----------------------------------------------------------

// Big-endian 16-bit length prefix used for DNS over TCP.
inline Bytes tcp_frame(const Bytes& msg) {
  if (msg.size() > kMaxMessageSize)
    throw Error(ErrorKind::EncodingOverflow, "message exceeds 65535 bytes");
  Bytes out;
  out.reserve(msg.size() + 2);
  detail::put_u16(out, std::uint16_t(msg.size()));
  out.insert(out.end(), msg.begin(), msg.end());
  return out;
}

struct UnframeResult {
  std::vector<Bytes> messages;
  std::size_t consumed = 0; // bytes of input fully framed; remainder starts here
};

// Splits a TCP byte stream into framed messages. With final=false a partial
// trailing frame is reported via `consumed`; with final=true it is an error.
inline UnframeResult tcp_unframe(const std::uint8_t* data, std::size_t size, bool final = false) {
  UnframeResult res;
  std::size_t at = 0;
  while (size - at >= 2) {
    std::size_t len = (std::size_t(data[at]) << 8) | data[at + 1];
    if (size - at - 2 < len) break;
    res.messages.emplace_back(data + at + 2, data + at + 2 + len);
    at += 2 + len;
  }
  res.consumed = at;
  if (final && at != size)
    throw Error(ErrorKind::Truncated, "stream ends inside a framed message");
  return res;
}

inline UnframeResult tcp_unframe(const Bytes& data, bool final = false) {
  return tcp_unframe(data.data(), data.size(), final);
}

} // namespace dohscope::dns
