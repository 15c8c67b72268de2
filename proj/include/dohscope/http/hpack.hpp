#pragma once

// HPACK (RFC 7541) header compression. The decoder is complete: static and
// dynamic tables, table-size updates, Huffman-coded strings. The encoder is
// deliberately stateless (indexed static entries plus literals without
// indexing) so no dynamic-table state leaks between connections.

#include <array>
#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "dohscope/errors.hpp"

namespace dohscope::http {

using HeaderField = std::pair<std::string, std::string>; // lowercased name, value
using HeaderList = std::vector<HeaderField>;

// Standard HTTP/2 header-list-size accounting: 32 bytes of overhead per
// entry on top of the octet lengths.
inline std::uint64_t header_list_size(const HeaderList& headers) {
  std::uint64_t n = 0;
  for (const auto& [name, value] : headers) n += name.size() + value.size() + 32;
  return n;
}

namespace hpack {

constexpr std::size_t kDefaultDynamicTableSize = 4096;

namespace detail {

inline const std::array<HeaderField, 61>& static_table() {
  static const std::array<HeaderField, 61> table = {{
      {":authority", ""},
      {":method", "GET"},
      {":method", "POST"},
      {":path", "/"},
      {":path", "/index.html"},
      {":scheme", "http"},
      {":scheme", "https"},
      {":status", "200"},
      {":status", "204"},
      {":status", "206"},
      {":status", "304"},
      {":status", "400"},
      {":status", "404"},
      {":status", "500"},
      {"accept-charset", ""},
      {"accept-encoding", "gzip, deflate"},
      {"accept-language", ""},
      {"accept-ranges", ""},
      {"accept", ""},
      {"access-control-allow-origin", ""},
      {"age", ""},
      {"allow", ""},
      {"authorization", ""},
      {"cache-control", ""},
      {"content-disposition", ""},
      {"content-encoding", ""},
      {"content-language", ""},
      {"content-length", ""},
      {"content-location", ""},
      {"content-range", ""},
      {"content-type", ""},
      {"cookie", ""},
      {"date", ""},
      {"etag", ""},
      {"expect", ""},
      {"expires", ""},
      {"from", ""},
      {"host", ""},
      {"if-match", ""},
      {"if-modified-since", ""},
      {"if-none-match", ""},
      {"if-range", ""},
      {"if-unmodified-since", ""},
      {"last-modified", ""},
      {"link", ""},
      {"location", ""},
      {"max-forwards", ""},
      {"proxy-authenticate", ""},
      {"proxy-authorization", ""},
      {"range", ""},
      {"referer", ""},
      {"refresh", ""},
      {"retry-after", ""},
      {"server", ""},
      {"set-cookie", ""},
      {"strict-transport-security", ""},
      {"transfer-encoding", ""},
      {"user-agent", ""},
      {"vary", ""},
      {"via", ""},
      {"www-authenticate", ""},
  }};
  return table;
}

struct HuffmanCode {
  std::uint32_t code;
  std::uint8_t bits;
};

// RFC 7541 Appendix B; index = symbol, 256 = EOS.
inline const std::array<HuffmanCode, 257>& huffman_table() {
  static const std::array<HuffmanCode, 257> table = {{
      {0x1ff8, 13},     {0x7fffd8, 23},   {0xfffffe2, 28},  {0xfffffe3, 28},  {0xfffffe4, 28},
      {0xfffffe5, 28},  {0xfffffe6, 28},  {0xfffffe7, 28},  {0xfffffe8, 28},  {0xffffea, 24},
      {0x3ffffffc, 30}, {0xfffffe9, 28},  {0xfffffea, 28},  {0x3ffffffd, 30}, {0xfffffeb, 28},
      {0xfffffec, 28},  {0xfffffed, 28},  {0xfffffee, 28},  {0xfffffef, 28},  {0xffffff0, 28},
      {0xffffff1, 28},  {0xffffff2, 28},  {0x3ffffffe, 30}, {0xffffff3, 28},  {0xffffff4, 28},
      {0xffffff5, 28},  {0xffffff6, 28},  {0xffffff7, 28},  {0xffffff8, 28},  {0xffffff9, 28},
      {0xffffffa, 28},  {0xffffffb, 28},  {0x14, 6},        {0x3f8, 10},      {0x3f9, 10},
      {0xffa, 12},      {0x1ff9, 13},     {0x15, 6},        {0xf8, 8},        {0x7fa, 11},
      {0x3fa, 10},      {0x3fb, 10},      {0xf9, 8},        {0x7fb, 11},      {0xfa, 8},
      {0x16, 6},        {0x17, 6},        {0x18, 6},        {0x0, 5},         {0x1, 5},
      {0x2, 5},         {0x19, 6},        {0x1a, 6},        {0x1b, 6},        {0x1c, 6},
      {0x1d, 6},        {0x1e, 6},        {0x1f, 6},        {0x5c, 7},        {0xfb, 8},
      {0x7ffc, 15},     {0x20, 6},        {0xffb, 12},      {0x3fc, 10},      {0x1ffa, 13},
      {0x21, 6},        {0x5d, 7},        {0x5e, 7},        {0x5f, 7},        {0x60, 7},
      {0x61, 7},        {0x62, 7},        {0x63, 7},        {0x64, 7},        {0x65, 7},
      {0x66, 7},        {0x67, 7},        {0x68, 7},        {0x69, 7},        {0x6a, 7},
      {0x6b, 7},        {0x6c, 7},        {0x6d, 7},        {0x6e, 7},        {0x6f, 7},
      {0x70, 7},        {0x71, 7},        {0x72, 7},        {0xfc, 8},        {0x73, 7},
      {0xfd, 8},        {0x1ffb, 13},     {0x7fff0, 19},    {0x1ffc, 13},     {0x3ffc, 14},
      {0x22, 6},        {0x7ffd, 15},     {0x3, 5},         {0x23, 6},        {0x4, 5},
      {0x24, 6},        {0x5, 5},         {0x25, 6},        {0x26, 6},        {0x27, 6},
      {0x6, 5},         {0x74, 7},        {0x75, 7},        {0x28, 6},        {0x29, 6},
      {0x2a, 6},        {0x7, 5},         {0x2b, 6},        {0x76, 7},        {0x2c, 6},
      {0x8, 5},         {0x9, 5},         {0x2d, 6},        {0x77, 7},        {0x78, 7},
      {0x79, 7},        {0x7a, 7},        {0x7b, 7},        {0x7ffe, 15},     {0x7fc, 11},
      {0x3ffd, 14},     {0x1ffd, 13},     {0xffffffc, 28},  {0xfffe6, 20},    {0x3fffd2, 22},
      {0xfffe7, 20},    {0xfffe8, 20},    {0x3fffd3, 22},   {0x3fffd4, 22},   {0x3fffd5, 22},
      {0x7fffd9, 23},   {0x3fffd6, 22},   {0x7fffda, 23},   {0x7fffdb, 23},   {0x7fffdc, 23},
      {0x7fffdd, 23},   {0x7fffde, 23},   {0xffffeb, 24},   {0x7fffdf, 23},   {0xffffec, 24},
      {0xffffed, 24},   {0x3fffd7, 22},   {0x7fffe0, 23},   {0xffffee, 24},   {0x7fffe1, 23},
      {0x7fffe2, 23},   {0x7fffe3, 23},   {0x7fffe4, 23},   {0x1fffdc, 21},   {0x3fffd8, 22},
      {0x7fffe5, 23},   {0x3fffd9, 22},   {0x7fffe6, 23},   {0x7fffe7, 23},   {0xffffef, 24},
      {0x3fffda, 22},   {0x1fffdd, 21},   {0xfffe9, 20},    {0x3fffdb, 22},   {0x3fffdc, 22},
      {0x7fffe8, 23},   {0x7fffe9, 23},   {0x1fffde, 21},   {0x7fffea, 23},   {0x3fffdd, 22},
      {0x3fffde, 22},   {0xfffff0, 24},   {0x1fffdf, 21},   {0x3fffdf, 22},   {0x7fffeb, 23},
      {0x7fffec, 23},   {0x1fffe0, 21},   {0x1fffe1, 21},   {0x3fffe0, 22},   {0x1fffe2, 21},
      {0x7fffed, 23},   {0x3fffe1, 22},   {0x7fffee, 23},   {0x7fffef, 23},   {0xfffea, 20},
      {0x3fffe2, 22},   {0x3fffe3, 22},   {0x3fffe4, 22},   {0x7ffff0, 23},   {0x3fffe5, 22},
      {0x3fffe6, 22},   {0x7ffff1, 23},   {0x3ffffe0, 26},  {0x3ffffe1, 26},  {0xfffeb, 20},
      {0x7fff1, 19},    {0x3fffe7, 22},   {0x7ffff2, 23},   {0x3fffe8, 22},   {0x1ffffec, 25},
      {0x3ffffe2, 26},  {0x3ffffe3, 26},  {0x3ffffe4, 26},  {0x7ffffde, 27},  {0x7ffffdf, 27},
      {0x3ffffe5, 26},  {0xfffff1, 24},   {0x1ffffed, 25},  {0x7fff2, 19},    {0x1fffe3, 21},
      {0x3ffffe6, 26},  {0x7ffffe0, 27},  {0x7ffffe1, 27},  {0x3ffffe7, 26},  {0x7ffffe2, 27},
      {0xfffff2, 24},   {0x1fffe4, 21},   {0x1fffe5, 21},   {0x3ffffe8, 26},  {0x3ffffe9, 26},
      {0xffffffd, 28},  {0x7ffffe3, 27},  {0x7ffffe4, 27},  {0x7ffffe5, 27},  {0xfffec, 20},
      {0xfffff3, 24},   {0xfffed, 20},    {0x1fffe6, 21},   {0x3fffe9, 22},   {0x1fffe7, 21},
      {0x1fffe8, 21},   {0x7ffff3, 23},   {0x3fffea, 22},   {0x3fffeb, 22},   {0x1ffffee, 25},
      {0x1ffffef, 25},  {0xfffff4, 24},   {0xfffff5, 24},   {0x3ffffea, 26},  {0x7ffff4, 23},
      {0x3ffffeb, 26},  {0x7ffffe6, 27},  {0x3ffffec, 26},  {0x3ffffed, 26},  {0x7ffffe7, 27},
      {0x7ffffe8, 27},  {0x7ffffe9, 27},  {0x7ffffea, 27},  {0x7ffffeb, 27},  {0xffffffe, 28},
      {0x7ffffec, 27},  {0x7ffffed, 27},  {0x7ffffee, 27},  {0x7ffffef, 27},  {0x7fffff0, 27},
      {0x3ffffee, 26},  {0x3fffffff, 30},
  }};
  return table;
}

// Binary trie for Huffman decoding, built once.
struct HuffmanTrie {
  struct Node {
    std::int32_t child[2] = {-1, -1};
    std::int32_t symbol = -1;
  };
  std::vector<Node> nodes;

  HuffmanTrie() {
    nodes.emplace_back();
    const auto& table = huffman_table();
    for (int sym = 0; sym < 257; sym++) {
      std::uint32_t code = table[std::size_t(sym)].code;
      int bits = table[std::size_t(sym)].bits;
      std::size_t at = 0;
      for (int b = bits - 1; b >= 0; b--) {
        int bit = int((code >> b) & 1);
        if (nodes[at].child[bit] < 0) {
          nodes[at].child[bit] = std::int32_t(nodes.size());
          nodes.emplace_back();
        }
        at = std::size_t(nodes[at].child[bit]);
      }
      nodes[at].symbol = sym;
    }
  }
};

inline const HuffmanTrie& huffman_trie() {
  static const HuffmanTrie trie;
  return trie;
}

} // namespace detail

inline std::string huffman_decode(const std::uint8_t* data, std::size_t len) {
  const auto& trie = detail::huffman_trie();
  std::string out;
  std::size_t at = 0;
  int since_symbol = 0; // bits consumed since the last emitted symbol
  for (std::size_t i = 0; i < len; i++) {
    for (int b = 7; b >= 0; b--) {
      int bit = (data[i] >> b) & 1;
      std::int32_t next = trie.nodes[at].child[bit];
      if (next < 0) throw Error(ErrorKind::MalformedResponse, "invalid Huffman sequence");
      at = std::size_t(next);
      since_symbol++;
      if (trie.nodes[at].symbol >= 0) {
        if (trie.nodes[at].symbol == 256)
          throw Error(ErrorKind::MalformedResponse, "unexpected Huffman EOS symbol");
        out.push_back(char(trie.nodes[at].symbol));
        at = 0;
        since_symbol = 0;
      }
    }
  }
  // Remaining bits must be a prefix of EOS (all ones), at most 7 bits.
  if (since_symbol > 7)
    throw Error(ErrorKind::MalformedResponse, "Huffman padding longer than 7 bits");
  // Valid padding is a prefix of EOS: walking that many 1-bits from the
  // root must land exactly where we stopped.
  std::size_t check = 0;
  for (int i = 0; i < since_symbol; i++) {
    std::int32_t next = trie.nodes[check].child[1];
    if (next < 0) throw Error(ErrorKind::MalformedResponse, "invalid Huffman padding");
    check = std::size_t(next);
  }
  if (check != at) throw Error(ErrorKind::MalformedResponse, "Huffman padding is not EOS prefix");
  return out;
}

inline std::vector<std::uint8_t> huffman_encode(const std::string& text) {
  const auto& table = detail::huffman_table();
  std::vector<std::uint8_t> out;
  std::uint64_t acc = 0;
  int bits = 0;
  for (unsigned char c : text) {
    const auto& hc = table[c];
    acc = (acc << hc.bits) | hc.code;
    bits += hc.bits;
    while (bits >= 8) {
      bits -= 8;
      out.push_back(std::uint8_t((acc >> bits) & 0xff));
    }
  }
  if (bits > 0) {
    acc = (acc << (8 - bits)) | ((1u << (8 - bits)) - 1); // EOS-prefix padding
    out.push_back(std::uint8_t(acc & 0xff));
  }
  return out;
}

inline std::size_t huffman_encoded_length(const std::string& text) {
  const auto& table = detail::huffman_table();
  std::size_t bits = 0;
  for (unsigned char c : text) bits += table[c].bits;
  return (bits + 7) / 8;
}

// --- primitive integer / string coding --------------------------------------

inline void encode_integer(std::vector<std::uint8_t>& out, std::uint64_t value, int prefix_bits,
                           std::uint8_t flags) {
  std::uint64_t limit = (1ull << prefix_bits) - 1;
  if (value < limit) {
    out.push_back(std::uint8_t(flags | value));
    return;
  }
  out.push_back(std::uint8_t(flags | limit));
  value -= limit;
  while (value >= 128) {
    out.push_back(std::uint8_t(0x80 | (value & 0x7f)));
    value >>= 7;
  }
  out.push_back(std::uint8_t(value));
}

class Reader {
public:
  Reader(const std::uint8_t* data, std::size_t len) : data_(data), len_(len) {}

  bool done() const { return at_ >= len_; }
  std::uint8_t peek() const { return data_[at_]; }

  std::uint64_t integer(int prefix_bits) {
    if (done()) throw Error(ErrorKind::MalformedResponse, "HPACK integer past end");
    std::uint64_t limit = (1ull << prefix_bits) - 1;
    std::uint64_t v = data_[at_++] & limit;
    if (v < limit) return v;
    int shift = 0;
    while (true) {
      if (done()) throw Error(ErrorKind::MalformedResponse, "HPACK integer cut short");
      std::uint8_t b = data_[at_++];
      v += std::uint64_t(b & 0x7f) << shift;
      if ((b & 0x80) == 0) break;
      shift += 7;
      if (shift > 56) throw Error(ErrorKind::MalformedResponse, "HPACK integer overflow");
    }
    return v;
  }

  std::string string() {
    if (done()) throw Error(ErrorKind::MalformedResponse, "HPACK string past end");
    bool huffman = (peek() & 0x80) != 0;
    std::uint64_t len = integer(7);
    if (at_ + len > len_) throw Error(ErrorKind::MalformedResponse, "HPACK string cut short");
    const std::uint8_t* p = data_ + at_;
    at_ += len;
    if (huffman) return huffman_decode(p, len);
    return std::string(reinterpret_cast<const char*>(p), len);
  }

private:
  const std::uint8_t* data_;
  std::size_t len_;
  std::size_t at_ = 0;
};

// --- decoder -----------------------------------------------------------------

class Decoder {
public:
  explicit Decoder(std::size_t max_table_size = kDefaultDynamicTableSize)
      : capacity_(max_table_size), settings_capacity_(max_table_size) {}

  // Called when SETTINGS_HEADER_TABLE_SIZE changes.
  void set_capacity_limit(std::size_t n) {
    settings_capacity_ = n;
    if (capacity_ > n) {
      capacity_ = n;
      evict();
    }
  }

  HeaderList decode(const std::uint8_t* data, std::size_t len) {
    Reader r(data, len);
    HeaderList out;
    while (!r.done()) {
      std::uint8_t b = r.peek();
      if (b & 0x80) { // indexed field
        std::uint64_t idx = r.integer(7);
        out.push_back(lookup(idx));
      } else if ((b & 0xc0) == 0x40) { // literal with incremental indexing
        std::uint64_t idx = r.integer(6);
        HeaderField f = literal(r, idx);
        insert(f);
        out.push_back(std::move(f));
      } else if ((b & 0xe0) == 0x20) { // dynamic table size update
        std::uint64_t size = r.integer(5);
        if (size > settings_capacity_)
          throw Error(ErrorKind::MalformedResponse, "HPACK table size above the settings limit");
        capacity_ = std::size_t(size);
        evict();
      } else { // literal without indexing (0x00) or never indexed (0x10)
        std::uint64_t idx = r.integer(4);
        out.push_back(literal(r, idx));
      }
    }
    return out;
  }

  HeaderList decode(const std::vector<std::uint8_t>& block) {
    return decode(block.data(), block.size());
  }

  std::size_t dynamic_size() const { return size_; }

private:
  static std::size_t entry_size(const HeaderField& f) {
    return f.first.size() + f.second.size() + 32;
  }

  HeaderField lookup(std::uint64_t index) const {
    if (index == 0) throw Error(ErrorKind::MalformedResponse, "HPACK index 0");
    const auto& st = detail::static_table();
    if (index <= st.size()) return st[std::size_t(index - 1)];
    std::uint64_t di = index - st.size() - 1;
    if (di >= dynamic_.size())
      throw Error(ErrorKind::MalformedResponse, "HPACK index beyond table");
    return dynamic_[std::size_t(di)];
  }

  HeaderField literal(Reader& r, std::uint64_t name_index) {
    HeaderField f;
    if (name_index == 0) {
      f.first = r.string();
    } else {
      f.first = lookup(name_index).first;
    }
    f.second = r.string();
    return f;
  }

  void insert(const HeaderField& f) {
    std::size_t sz = entry_size(f);
    if (sz > capacity_) {
      dynamic_.clear();
      size_ = 0;
      return; // larger than the table: empties it, nothing stored
    }
    dynamic_.push_front(f);
    size_ += sz;
    evict();
  }

  void evict() {
    while (size_ > capacity_ && !dynamic_.empty()) {
      size_ -= entry_size(dynamic_.back());
      dynamic_.pop_back();
    }
  }

  std::deque<HeaderField> dynamic_; // front = most recent
  std::size_t size_ = 0;
  std::size_t capacity_;
  std::size_t settings_capacity_;
};

// --- encoder -----------------------------------------------------------------

struct EncodeOptions {
  bool huffman = false; // raw literals by default; Huffman when it helps
};

// Stateless encoding: full static matches become indexed fields, known
// names become literals with a static name index, everything else is a
// fresh literal. Nothing is ever added to the peer's dynamic table.
inline std::vector<std::uint8_t> encode(const HeaderList& headers,
                                        const EncodeOptions& opts = {}) {
  const auto& st = detail::static_table();
  std::vector<std::uint8_t> out;

  auto emit_string = [&](const std::string& s) {
    if (opts.huffman && huffman_encoded_length(s) < s.size()) {
      auto enc = huffman_encode(s);
      encode_integer(out, enc.size(), 7, 0x80);
      out.insert(out.end(), enc.begin(), enc.end());
    } else {
      encode_integer(out, s.size(), 7, 0x00);
      out.insert(out.end(), s.begin(), s.end());
    }
  };

  for (const auto& f : headers) {
    std::size_t full_match = 0, name_match = 0;
    for (std::size_t i = 0; i < st.size(); i++) {
      if (st[i].first == f.first) {
        if (name_match == 0) name_match = i + 1;
        if (st[i].second == f.second) {
          full_match = i + 1;
          break;
        }
      }
    }
    if (full_match) {
      encode_integer(out, full_match, 7, 0x80);
    } else {
      // literal without indexing
      encode_integer(out, name_match, 4, 0x00);
      if (!name_match) emit_string(f.first);
      emit_string(f.second);
    }
  }
  return out;
}

} // namespace hpack
} // namespace dohscope::http
