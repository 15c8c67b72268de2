#pragma once

// Offline pcap / pcapng reading and classic-pcap writing. Only what the
// flow analyses need: Ethernet (with one optional 802.1Q tag) and raw-IP
// link types, IPv4/IPv6, TCP/UDP. Everything else is counted and skipped.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "dohscope/errors.hpp"
#include "dohscope/packet.hpp"

namespace dohscope::capture {

constexpr std::uint32_t kLinkEthernet = 1;
constexpr std::uint32_t kLinkRawIp = 101;

struct CaptureResult {
  std::vector<PacketRecord> packets;
  std::uint64_t skipped_non_transport = 0; // ICMP, ARP, fragments, unknown ethertypes
  std::uint64_t oversized_frames = 0;      // wire length beyond jumbo MTU (offload artifacts)
  bool truncated_capture = false;          // snaplen cut at least one payload short
  std::uint32_t link_type = 0;
};

namespace detail {

inline std::uint16_t rd16(const std::uint8_t* p, bool swap) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  if (swap) v = std::uint16_t((v >> 8) | (v << 8));
  return v;
}

inline std::uint32_t rd32(const std::uint8_t* p, bool swap) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  if (swap) v = __builtin_bswap32(v);
  return v;
}

inline std::uint16_t be16(const std::uint8_t* p) {
  return std::uint16_t((std::uint16_t(p[0]) << 8) | p[1]);
}

// Frames above this are treated as segmentation-offload artifacts and
// flagged, but still ingested as-is.
constexpr std::uint32_t kJumboThreshold = 9216;

// Parses one link-layer frame into a PacketRecord. Returns false when the
// frame is not a usable TCP/UDP packet.
inline bool parse_frame(const std::uint8_t* data, std::size_t caplen, std::uint32_t origlen,
                        std::uint32_t link_type, std::int64_t ts_us, PacketRecord& out,
                        bool& truncated) {
  std::size_t at = 0;
  int ip_version = 0;

  if (link_type == kLinkEthernet) {
    if (caplen < 14) return false;
    std::uint16_t ethertype = be16(data + 12);
    at = 14;
    if (ethertype == 0x8100) { // single 802.1Q tag
      if (caplen < 18) return false;
      ethertype = be16(data + 16);
      at = 18;
    }
    if (ethertype == 0x0800)
      ip_version = 4;
    else if (ethertype == 0x86dd)
      ip_version = 6;
    else
      return false;
  } else if (link_type == kLinkRawIp) {
    if (caplen < 1) return false;
    ip_version = data[0] >> 4;
    if (ip_version != 4 && ip_version != 6) return false;
  } else {
    throw Error(ErrorKind::UnsupportedLinkType,
                "link type " + std::to_string(link_type) + " not supported");
  }

  const std::uint8_t* ip = data + at;
  std::size_t ip_avail = caplen - at;
  std::uint8_t transport_proto = 0;
  std::size_t transport_at = 0;   // offset of transport header within ip
  std::size_t ip_payload_decl = 0; // transport header + payload per IP header

  if (ip_version == 4) {
    if (ip_avail < 20) return false;
    std::size_t ihl = std::size_t(ip[0] & 0x0f) * 4;
    if (ihl < 20 || ip_avail < ihl) return false;
    std::uint16_t total = be16(ip + 2);
    if (total < ihl) return false;
    std::uint16_t frag = be16(ip + 6);
    if ((frag & 0x1fff) != 0) return false; // non-first fragment
    transport_proto = ip[9];
    transport_at = ihl;
    ip_payload_decl = std::size_t(total) - ihl;
    out.src_ip.family = 4;
    std::memcpy(out.src_ip.bytes, ip + 12, 4);
    out.dst_ip.family = 4;
    std::memcpy(out.dst_ip.bytes, ip + 16, 4);
  } else {
    if (ip_avail < 40) return false;
    std::uint16_t payload_len = be16(ip + 4);
    std::uint8_t next = ip[6];
    std::size_t hdr_at = 40;
    std::size_t ext_consumed = 0;
    // Walk the extension-header chain to the transport header.
    while (next == 0 || next == 43 || next == 44 || next == 60) {
      if (ip_avail < hdr_at + 8) return false;
      if (next == 44) {
        std::uint16_t frag = be16(ip + hdr_at + 2);
        if ((frag & 0xfff8) != 0) return false; // non-first fragment
        next = ip[hdr_at];
        hdr_at += 8;
        ext_consumed += 8;
      } else {
        std::uint8_t hdrlen = ip[hdr_at + 1];
        std::size_t len = 8 + std::size_t(hdrlen) * 8;
        next = ip[hdr_at];
        hdr_at += len;
        ext_consumed += len;
        if (ip_avail < hdr_at) return false;
      }
    }
    transport_proto = next;
    transport_at = hdr_at;
    if (payload_len < ext_consumed) return false;
    ip_payload_decl = std::size_t(payload_len) - ext_consumed;
    out.src_ip.family = 6;
    std::memcpy(out.src_ip.bytes, ip + 8, 16);
    out.dst_ip.family = 6;
    std::memcpy(out.dst_ip.bytes, ip + 24, 16);
  }

  const std::uint8_t* th = ip + transport_at;
  std::size_t th_avail = ip_avail > transport_at ? ip_avail - transport_at : 0;

  std::size_t declared_payload = 0;
  if (transport_proto == 6) { // TCP
    if (th_avail < 20) return false;
    std::size_t doff = std::size_t(th[12] >> 4) * 4;
    if (doff < 20 || ip_payload_decl < doff) return false;
    out.protocol = Transport::Tcp;
    out.src_port = be16(th);
    out.dst_port = be16(th + 2);
    declared_payload = ip_payload_decl - doff;
    std::size_t captured_payload = th_avail > doff ? th_avail - doff : 0;
    if (captured_payload < declared_payload) {
      truncated = true;
      out.payload_len = std::uint32_t(captured_payload);
    } else {
      out.payload_len = std::uint32_t(declared_payload);
    }
  } else if (transport_proto == 17) { // UDP
    if (th_avail < 8) return false;
    std::uint16_t udp_len = be16(th + 4);
    if (udp_len < 8) return false;
    out.protocol = Transport::Udp;
    out.src_port = be16(th);
    out.dst_port = be16(th + 2);
    declared_payload = std::size_t(udp_len) - 8;
    std::size_t captured_payload = th_avail > 8 ? th_avail - 8 : 0;
    if (captured_payload < declared_payload) {
      truncated = true;
      out.payload_len = std::uint32_t(captured_payload);
    } else {
      out.payload_len = std::uint32_t(declared_payload);
    }
  } else {
    return false;
  }

  out.ts_us = ts_us;
  out.total_len = origlen;
  return true;
}

struct ByteFile {
  std::vector<std::uint8_t> data;

  static ByteFile load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::CorruptCapture, "cannot open " + path);
    ByteFile bf;
    f.seekg(0, std::ios::end);
    auto size = f.tellg();
    f.seekg(0);
    bf.data.resize(std::size_t(size));
    f.read(reinterpret_cast<char*>(bf.data.data()), size);
    if (!f) throw Error(ErrorKind::CorruptCapture, "short read on " + path);
    return bf;
  }
};

inline void ingest(CaptureResult& res, const std::uint8_t* frame, std::size_t caplen,
                   std::uint32_t origlen, std::uint32_t link_type, std::int64_t ts_us) {
  if (origlen > kJumboThreshold) res.oversized_frames++;
  PacketRecord rec;
  bool truncated = false;
  if (parse_frame(frame, caplen, origlen, link_type, ts_us, rec, truncated)) {
    res.packets.push_back(rec);
  } else {
    res.skipped_non_transport++;
  }
  if (truncated) res.truncated_capture = true;
}

inline CaptureResult read_pcap_classic(const std::vector<std::uint8_t>& data) {
  if (data.size() < 24) throw Error(ErrorKind::CorruptCapture, "pcap shorter than global header");
  std::uint32_t magic = rd32(data.data(), false);
  bool swap = false;
  bool nanos = false;
  if (magic == 0xa1b2c3d4) {
  } else if (magic == 0xd4c3b2a1) {
    swap = true;
  } else if (magic == 0xa1b23c4d) {
    nanos = true;
  } else if (magic == 0x4d3cb2a1) {
    swap = true;
    nanos = true;
  } else {
    throw Error(ErrorKind::CorruptCapture, "bad pcap magic");
  }

  CaptureResult res;
  res.link_type = rd32(data.data() + 20, swap);
  if (res.link_type != kLinkEthernet && res.link_type != kLinkRawIp)
    throw Error(ErrorKind::UnsupportedLinkType,
                "link type " + std::to_string(res.link_type) + " not supported");

  std::size_t at = 24;
  while (at != data.size()) {
    if (data.size() - at < 16) throw Error(ErrorKind::CorruptCapture, "packet header cut short");
    std::uint32_t ts_sec = rd32(data.data() + at, swap);
    std::uint32_t ts_sub = rd32(data.data() + at + 4, swap);
    std::uint32_t caplen = rd32(data.data() + at + 8, swap);
    std::uint32_t origlen = rd32(data.data() + at + 12, swap);
    at += 16;
    if (data.size() - at < caplen) throw Error(ErrorKind::CorruptCapture, "packet data cut short");
    std::int64_t ts_us =
        std::int64_t(ts_sec) * 1000000 + (nanos ? std::int64_t(ts_sub) / 1000 : ts_sub);
    ingest(res, data.data() + at, caplen, origlen, res.link_type, ts_us);
    at += caplen;
  }
  return res;
}

inline CaptureResult read_pcapng(const std::vector<std::uint8_t>& data) {
  CaptureResult res;
  struct Interface {
    std::uint32_t link_type;
    std::uint64_t ts_per_sec;
  };
  std::vector<Interface> interfaces;
  bool swap = false;
  bool link_set = false;
  std::size_t at = 0;

  auto block_u32 = [&](std::size_t off) { return rd32(data.data() + off, swap); };

  while (at + 12 <= data.size()) {
    std::uint32_t block_type = rd32(data.data() + at, swap);
    // A new section may change the byte order; peek at the magic first.
    if (block_type == 0x0a0d0d0a || block_type == __builtin_bswap32(0x0a0d0d0a)) {
      if (at + 12 > data.size()) throw Error(ErrorKind::CorruptCapture, "SHB cut short");
      std::uint32_t bom = rd32(data.data() + at + 8, false);
      if (bom == 0x1a2b3c4d)
        swap = false;
      else if (bom == 0x4d3c2b1a)
        swap = true;
      else
        throw Error(ErrorKind::CorruptCapture, "bad pcapng byte-order magic");
      interfaces.clear();
      block_type = 0x0a0d0d0a;
    }
    std::uint32_t total_len = block_u32(at + 4);
    if (total_len < 12 || total_len % 4 != 0 || at + total_len > data.size())
      throw Error(ErrorKind::CorruptCapture, "bad pcapng block length");
    const std::uint8_t* body = data.data() + at + 8;
    std::size_t body_len = total_len - 12;

    if (block_type == 0x00000001) { // IDB
      if (body_len < 8) throw Error(ErrorKind::CorruptCapture, "IDB cut short");
      Interface iface;
      iface.link_type = rd16(body, swap);
      iface.ts_per_sec = 1000000; // default 1e-6
      // options start at body+8: code(2) len(2) value(padded)
      std::size_t oat = 8;
      while (oat + 4 <= body_len) {
        std::uint16_t code = rd16(body + oat, swap);
        std::uint16_t olen = rd16(body + oat + 2, swap);
        if (code == 0) break;
        if (oat + 4 + olen > body_len) break;
        if (code == 9 && olen >= 1) { // if_tsresol
          std::uint8_t r = body[oat + 4];
          if (r & 0x80) {
            iface.ts_per_sec = 1ull << (r & 0x7f);
          } else {
            iface.ts_per_sec = 1;
            for (int i = 0; i < r; i++) iface.ts_per_sec *= 10;
          }
        }
        oat += 4 + ((olen + 3u) & ~3u);
      }
      if (iface.link_type != kLinkEthernet && iface.link_type != kLinkRawIp)
        throw Error(ErrorKind::UnsupportedLinkType,
                    "link type " + std::to_string(iface.link_type) + " not supported");
      if (!link_set) {
        res.link_type = iface.link_type;
        link_set = true;
      }
      interfaces.push_back(iface);
    } else if (block_type == 0x00000006) { // EPB
      if (body_len < 20) throw Error(ErrorKind::CorruptCapture, "EPB cut short");
      std::uint32_t iface_id = rd32(body, swap);
      if (iface_id >= interfaces.size())
        throw Error(ErrorKind::CorruptCapture, "EPB references unknown interface");
      std::uint64_t ts = (std::uint64_t(rd32(body + 4, swap)) << 32) | rd32(body + 8, swap);
      std::uint32_t caplen = rd32(body + 12, swap);
      std::uint32_t origlen = rd32(body + 16, swap);
      if (20 + caplen > body_len) throw Error(ErrorKind::CorruptCapture, "EPB data cut short");
      const auto& iface = interfaces[iface_id];
      std::int64_t ts_us = std::int64_t(__int128(ts) * 1000000 / iface.ts_per_sec);
      ingest(res, body + 20, caplen, origlen, iface.link_type, ts_us);
    } else if (block_type == 0x00000003) { // SPB
      if (interfaces.empty())
        throw Error(ErrorKind::CorruptCapture, "SPB before any interface block");
      if (body_len < 4) throw Error(ErrorKind::CorruptCapture, "SPB cut short");
      std::uint32_t origlen = rd32(body, swap);
      std::uint32_t caplen = std::uint32_t(std::min<std::size_t>(origlen, body_len - 4));
      ingest(res, body + 4, caplen, origlen, interfaces[0].link_type, 0);
    }
    // All other block types (SHB options, NRB, ISB, custom) are skipped.
    at += total_len;
  }
  return res;
}

} // namespace detail

inline CaptureResult read_capture(const std::string& path) {
  auto file = detail::ByteFile::load(path);
  if (file.data.size() >= 4) {
    std::uint32_t magic = detail::rd32(file.data.data(), false);
    if (magic == 0x0a0d0d0a) return detail::read_pcapng(file.data);
  }
  return detail::read_pcap_classic(file.data);
}

// --- classic pcap writing --------------------------------------------------

class PcapWriter {
public:
  PcapWriter(const std::string& path, std::uint32_t link_type) : out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorKind::ConfigError, "cannot open " + path + " for writing");
    put32(0xa1b2c3d4);
    put16(2);
    put16(4);
    put32(0); // thiszone
    put32(0); // sigfigs
    put32(262144);
    put32(link_type);
  }

  void frame(std::int64_t ts_us, const std::uint8_t* data, std::size_t len) {
    put32(std::uint32_t(ts_us / 1000000));
    put32(std::uint32_t(ts_us % 1000000));
    put32(std::uint32_t(len));
    put32(std::uint32_t(len));
    out_.write(reinterpret_cast<const char*>(data), std::streamsize(len));
  }

  void frame(std::int64_t ts_us, const std::vector<std::uint8_t>& data) {
    frame(ts_us, data.data(), data.size());
  }

private:
  void put16(std::uint16_t v) { out_.write(reinterpret_cast<const char*>(&v), 2); }
  void put32(std::uint32_t v) { out_.write(reinterpret_cast<const char*>(&v), 4); }

  std::ofstream out_;
};

// Serializes a PacketRecord as a raw-IP frame (IPv4/IPv6 + TCP/UDP with
// zero checksums and synthetic sequence numbers). payload bytes are zero
// filler: flow statistics only depend on lengths.
inline std::vector<std::uint8_t> synthesize_raw_frame(const PacketRecord& rec) {
  std::vector<std::uint8_t> f;
  std::size_t transport_len = (rec.protocol == Transport::Tcp ? 20 : 8) + rec.payload_len;
  auto put16be = [&](std::uint16_t v) {
    f.push_back(std::uint8_t(v >> 8));
    f.push_back(std::uint8_t(v & 0xff));
  };
  if (rec.src_ip.family == 4) {
    f.push_back(0x45);
    f.push_back(0);
    put16be(std::uint16_t(20 + transport_len));
    put16be(0);
    put16be(0x4000); // DF
    f.push_back(64);
    f.push_back(rec.protocol == Transport::Tcp ? 6 : 17);
    put16be(0); // checksum
    f.insert(f.end(), rec.src_ip.bytes, rec.src_ip.bytes + 4);
    f.insert(f.end(), rec.dst_ip.bytes, rec.dst_ip.bytes + 4);
  } else {
    f.push_back(0x60);
    f.push_back(0);
    f.push_back(0);
    f.push_back(0);
    put16be(std::uint16_t(transport_len));
    f.push_back(rec.protocol == Transport::Tcp ? 6 : 17);
    f.push_back(64);
    f.insert(f.end(), rec.src_ip.bytes, rec.src_ip.bytes + 16);
    f.insert(f.end(), rec.dst_ip.bytes, rec.dst_ip.bytes + 16);
  }
  put16be(rec.src_port);
  put16be(rec.dst_port);
  if (rec.protocol == Transport::Tcp) {
    for (int i = 0; i < 8; i++) f.push_back(0); // seq/ack
    f.push_back(0x50);                          // data offset 5
    f.push_back(rec.payload_len == 0 ? 0x10 : 0x18); // ACK / ACK+PSH
    put16be(65535);
    put16be(0);
    put16be(0);
  } else {
    put16be(std::uint16_t(8 + rec.payload_len));
    put16be(0);
  }
  f.insert(f.end(), rec.payload_len, 0);
  return f;
}

inline void write_packets_pcap(const std::string& path,
                               const std::vector<PacketRecord>& packets) {
  PcapWriter w(path, kLinkRawIp);
  for (const auto& p : packets) {
    auto frame = synthesize_raw_frame(p);
    w.frame(p.ts_us, frame);
  }
}

} // namespace dohscope::capture
