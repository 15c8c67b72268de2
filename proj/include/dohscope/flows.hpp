#pragma once

// Bidirectional flow assembly and per-group statistics over PacketRecords.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "dohscope/errors.hpp"
#include "dohscope/packet.hpp"

namespace dohscope::capture {

// Canonical bidirectional 5-tuple: the lexicographically smaller
// (address, port) endpoint is stored first, so both directions of a
// conversation map to the same key.
struct FlowKey {
  Transport protocol = Transport::Tcp;
  IpAddr ip_a;
  std::uint16_t port_a = 0;
  IpAddr ip_b;
  std::uint16_t port_b = 0;

  static FlowKey of(const PacketRecord& p) {
    FlowKey k;
    k.protocol = p.protocol;
    auto src = std::make_tuple(p.src_ip, p.src_port);
    auto dst = std::make_tuple(p.dst_ip, p.dst_port);
    if (src <= dst) {
      k.ip_a = p.src_ip;
      k.port_a = p.src_port;
      k.ip_b = p.dst_ip;
      k.port_b = p.dst_port;
    } else {
      k.ip_a = p.dst_ip;
      k.port_a = p.dst_port;
      k.ip_b = p.src_ip;
      k.port_b = p.src_port;
    }
    return k;
  }

  // True when the packet travels a -> b under this key's orientation.
  bool is_forward(const PacketRecord& p) const {
    return std::make_tuple(p.src_ip, p.src_port) <= std::make_tuple(p.dst_ip, p.dst_port);
  }

  friend auto operator<=>(const FlowKey& x, const FlowKey& y) {
    return std::tie(x.protocol, x.ip_a, x.port_a, x.ip_b, x.port_b) <=>
           std::tie(y.protocol, y.ip_a, y.port_a, y.ip_b, y.port_b);
  }
  friend bool operator==(const FlowKey& x, const FlowKey& y) { return (x <=> y) == 0; }

  std::string to_text() const {
    return std::string(transport_name(protocol)) + " " + ip_a.to_text() + ":" +
           std::to_string(port_a) + " <-> " + ip_b.to_text() + ":" + std::to_string(port_b);
  }
};

struct FlowKeyHash {
  std::size_t operator()(const FlowKey& k) const {
    std::size_t h = std::hash<int>()(int(k.protocol));
    auto mix = [&h](std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2); };
    for (int i = 0; i < 16; i++) mix(k.ip_a.bytes[i]);
    for (int i = 0; i < 16; i++) mix(k.ip_b.bytes[i]);
    mix(k.port_a);
    mix((std::size_t(k.port_b) << 16) | k.ip_a.family);
    return h;
  }
};

struct Flow {
  FlowKey key;
  std::int64_t first_ts_us = 0;
  std::int64_t last_ts_us = 0;
  std::uint64_t packet_count = 0;
  std::uint64_t payload_bytes = 0;
  std::uint64_t fwd_packets = 0;
  std::uint64_t fwd_bytes = 0;
  std::uint64_t rev_packets = 0;
  std::uint64_t rev_bytes = 0;
  std::string group; // optional label attached by the caller

  std::int64_t duration_us() const { return last_ts_us - first_ts_us; }

  double avg_payload() const {
    return packet_count == 0 ? 0.0 : double(payload_bytes) / double(packet_count);
  }

  void add(const PacketRecord& p) {
    if (packet_count == 0) {
      first_ts_us = p.ts_us;
      last_ts_us = p.ts_us;
    } else {
      last_ts_us = std::max(last_ts_us, p.ts_us);
    }
    packet_count++;
    payload_bytes += p.payload_len;
    if (key.is_forward(p)) {
      fwd_packets++;
      fwd_bytes += p.payload_len;
    } else {
      rev_packets++;
      rev_bytes += p.payload_len;
    }
  }
};

constexpr std::int64_t kDefaultIdleTimeoutUs = 300 * 1000000ll;

// Groups packets into bidirectional flows, splitting a conversation when
// the gap between consecutive packets exceeds idle_timeout. Input order is
// irrelevant; packets are sorted per key. FIN/RST carry no meaning here:
// termination is idle-timeout only.
inline std::vector<Flow> assemble_flows(std::vector<PacketRecord> packets,
                                        std::int64_t idle_timeout_us = kDefaultIdleTimeoutUs) {
  std::unordered_map<FlowKey, std::vector<PacketRecord>, FlowKeyHash> buckets;
  for (auto& p : packets) buckets[FlowKey::of(p)].push_back(p);

  std::vector<Flow> flows;
  for (auto& [key, pkts] : buckets) {
    std::stable_sort(pkts.begin(), pkts.end(),
                     [](const PacketRecord& a, const PacketRecord& b) { return a.ts_us < b.ts_us; });
    Flow current;
    current.key = key;
    for (const auto& p : pkts) {
      if (current.packet_count > 0 && p.ts_us - current.last_ts_us > idle_timeout_us) {
        flows.push_back(current);
        current = Flow{};
        current.key = key;
      }
      current.add(p);
    }
    if (current.packet_count > 0) flows.push_back(current);
  }

  std::sort(flows.begin(), flows.end(), [](const Flow& a, const Flow& b) {
    return std::tie(a.first_ts_us, a.key) < std::tie(b.first_ts_us, b.key);
  });
  return flows;
}

// Lower median: for even-sized samples the smaller of the two middle
// elements is reported. Deterministic and documented; good enough for the
// comparisons this toolkit draws.
template <typename T>
T lower_median(std::vector<T> v) {
  if (v.empty()) throw Error(ErrorKind::EmptyGroup, "median of empty set");
  std::size_t mid = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(mid), v.end());
  return v[mid];
}

struct GroupSummary {
  std::string group;
  std::size_t flow_count = 0;
  std::uint64_t median_payload_bytes = 0;
  std::uint64_t median_packet_count = 0;
  std::int64_t median_duration_us = 0;
};

struct FlowSetSummary {
  std::vector<GroupSummary> groups; // sorted by group label

  const GroupSummary* find(const std::string& g) const {
    for (const auto& s : groups)
      if (s.group == g) return &s;
    return nullptr;
  }
};

inline FlowSetSummary flow_stats(const std::vector<Flow>& flows,
                                 const std::function<std::string(const Flow&)>& group_of) {
  if (flows.empty()) throw Error(ErrorKind::EmptyGroup, "no flows to summarize");
  std::map<std::string, std::vector<const Flow*>> grouped;
  for (const auto& f : flows) grouped[group_of(f)].push_back(&f);

  FlowSetSummary out;
  for (auto& [group, members] : grouped) {
    GroupSummary s;
    s.group = group;
    s.flow_count = members.size();
    std::vector<std::uint64_t> payload, packets;
    std::vector<std::int64_t> durations;
    for (const Flow* f : members) {
      payload.push_back(f->payload_bytes);
      packets.push_back(f->packet_count);
      durations.push_back(f->duration_us());
    }
    s.median_payload_bytes = lower_median(payload);
    s.median_packet_count = lower_median(packets);
    s.median_duration_us = lower_median(durations);
    out.groups.push_back(std::move(s));
  }
  return out;
}

inline FlowSetSummary flow_stats(const std::vector<Flow>& flows) {
  return flow_stats(flows, [](const Flow& f) { return f.group; });
}

// --- JSON Lines serialization ----------------------------------------------

inline constexpr const char* kFlowSchema = "dohscope.flow.v1";

inline nlohmann::json flow_to_json(const Flow& f) {
  nlohmann::json j;
  j["schema"] = kFlowSchema;
  j["protocol"] = transport_name(f.key.protocol);
  j["ip_a"] = f.key.ip_a.to_text();
  j["port_a"] = f.key.port_a;
  j["ip_b"] = f.key.ip_b.to_text();
  j["port_b"] = f.key.port_b;
  j["first_ts_us"] = f.first_ts_us;
  j["last_ts_us"] = f.last_ts_us;
  j["duration_us"] = f.duration_us();
  j["packet_count"] = f.packet_count;
  j["payload_bytes"] = f.payload_bytes;
  j["fwd_packets"] = f.fwd_packets;
  j["fwd_bytes"] = f.fwd_bytes;
  j["rev_packets"] = f.rev_packets;
  j["rev_bytes"] = f.rev_bytes;
  j["avg_payload"] = f.avg_payload();
  if (!f.group.empty()) j["group"] = f.group;
  return j;
}

inline Flow flow_from_json(const nlohmann::json& j) {
  Flow f;
  f.key.protocol = j.at("protocol").get<std::string>() == "udp" ? Transport::Udp : Transport::Tcp;
  f.key.ip_a = IpAddr::from_text(j.at("ip_a").get<std::string>());
  f.key.port_a = j.at("port_a").get<std::uint16_t>();
  f.key.ip_b = IpAddr::from_text(j.at("ip_b").get<std::string>());
  f.key.port_b = j.at("port_b").get<std::uint16_t>();
  f.first_ts_us = j.at("first_ts_us").get<std::int64_t>();
  f.last_ts_us = j.at("last_ts_us").get<std::int64_t>();
  f.packet_count = j.at("packet_count").get<std::uint64_t>();
  f.payload_bytes = j.at("payload_bytes").get<std::uint64_t>();
  f.fwd_packets = j.value("fwd_packets", 0ull);
  f.fwd_bytes = j.value("fwd_bytes", 0ull);
  f.rev_packets = j.value("rev_packets", 0ull);
  f.rev_bytes = j.value("rev_bytes", 0ull);
  f.group = j.value("group", "");
  return f;
}

} // namespace dohscope::capture
