#pragma once

// One name resolution via any of five methods: plain DNS over UDP or TCP,
// and DoH as RFC 8484 GET/POST or the providers' JSON API. Every outcome
// records timing and application-layer byte counts; optionally the raw
// wire chunks are logged for trace synthesis.

#include <cctype>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dohscope/base64url.hpp"
#include "dohscope/dns_codec.hpp"
#include "dohscope/errors.hpp"
#include "dohscope/http/h1.hpp"
#include "dohscope/http/h2.hpp"
#include "dohscope/net/socket.hpp"
#include "dohscope/net/tls.hpp"
#include "dohscope/packet.hpp"

namespace dohscope::doh {

enum class ResolutionMethod { PlainUdp, PlainTcp, DohGet, DohPost, DohJson };

inline const char* method_name(ResolutionMethod m) {
  switch (m) {
    case ResolutionMethod::PlainUdp: return "plain_udp";
    case ResolutionMethod::PlainTcp: return "plain_tcp";
    case ResolutionMethod::DohGet: return "doh_get";
    case ResolutionMethod::DohPost: return "doh_post";
    case ResolutionMethod::DohJson: return "doh_json";
  }
  return "?";
}

inline ResolutionMethod method_from_text(const std::string& t) {
  if (t == "udp" || t == "plain_udp" || t == "dns") return ResolutionMethod::PlainUdp;
  if (t == "tcp" || t == "plain_tcp") return ResolutionMethod::PlainTcp;
  if (t == "get" || t == "doh_get") return ResolutionMethod::DohGet;
  if (t == "post" || t == "doh_post") return ResolutionMethod::DohPost;
  if (t == "json" || t == "doh_json") return ResolutionMethod::DohJson;
  throw Error(ErrorKind::ConfigError, "unknown method '" + t + "'");
}

enum class HttpPreference { Auto, H1, H2 };

struct DohEndpoint {
  std::string url;
  std::string host;
  std::uint16_t port = 443;
  std::string path = "/dns-query";
  HttpPreference preferred_http = HttpPreference::Auto;
  std::string bootstrap_address; // IP literal, sidesteps resolver bootstrap

  static DohEndpoint parse(const std::string& url) {
    DohEndpoint ep;
    ep.url = url;
    const std::string scheme = "https://";
    if (url.rfind(scheme, 0) != 0)
      throw Error(ErrorKind::ConfigError, "DoH endpoint must be an https:// URL: " + url);
    std::string rest = url.substr(scheme.size());
    std::size_t slash = rest.find('/');
    std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
    ep.path = slash == std::string::npos ? "/dns-query" : rest.substr(slash);
    if (!hostport.empty() && hostport.front() == '[') {
      std::size_t close = hostport.find(']');
      if (close == std::string::npos)
        throw Error(ErrorKind::ConfigError, "unterminated IPv6 literal in " + url);
      ep.host = hostport.substr(1, close - 1);
      if (close + 1 < hostport.size() && hostport[close + 1] == ':')
        ep.port = parse_port(hostport.substr(close + 2));
    } else {
      std::size_t colon = hostport.rfind(':');
      if (colon == std::string::npos) {
        ep.host = hostport;
      } else {
        ep.host = hostport.substr(0, colon);
        ep.port = parse_port(hostport.substr(colon + 1));
      }
    }
    if (ep.host.empty()) throw Error(ErrorKind::ConfigError, "empty host in " + url);
    return ep;
  }

private:
  static std::uint16_t parse_port(const std::string& s) {
    if (s.empty()) throw Error(ErrorKind::ConfigError, "empty port");
    long v = std::strtol(s.c_str(), nullptr, 10);
    if (v < 1 || v > 65535) throw Error(ErrorKind::ConfigError, "port out of range: " + s);
    return std::uint16_t(v);
  }
};

struct AnswerRecord {
  std::string name;
  std::uint16_t rtype = 0;
  std::uint32_t ttl = 0;
  std::string rdata_hex; // wire methods
  std::string data;      // textual form (address, or JSON data verbatim)
};

struct Timing {
  std::int64_t start_us = 0;      // monotonic
  std::int64_t first_byte_us = 0; // first byte of the response that answered
  std::int64_t end_us = 0;
};

struct QueryOutcome {
  ResolutionMethod method = ResolutionMethod::PlainUdp;
  std::string endpoint; // URL or ip:port
  std::string domain;
  std::uint16_t qtype = dns::kTypeA;
  bool ok = false;
  ErrorKind error_kind = ErrorKind::None;
  std::string error;
  std::optional<int> rcode;
  std::vector<AnswerRecord> answers;
  Timing timing;
  std::uint64_t app_bytes_sent = 0;
  std::uint64_t app_bytes_received = 0;
  std::uint64_t wire_bytes_sent = 0;
  std::uint64_t wire_bytes_received = 0;
  std::optional<int> http_status;
  std::optional<std::string> http_version;
  http::HeaderList response_headers;
  bool truncated_retried = false;
};

// Cloudflare/Google style JSON answer; field names follow the provider
// schema verbatim.
struct JsonAnswer {
  int status = 0;
  bool tc = false, rd = false, ra = false, ad = false, cd = false;
  std::vector<std::pair<std::string, int>> question;
  std::vector<AnswerRecord> answer;

  static JsonAnswer parse(const std::string& body) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::JsonParseError, e.what());
    }
    try {
      JsonAnswer a;
      a.status = j.at("Status").get<int>();
      a.tc = j.value("TC", false);
      a.rd = j.value("RD", false);
      a.ra = j.value("RA", false);
      a.ad = j.value("AD", false);
      a.cd = j.value("CD", false);
      if (j.contains("Question"))
        for (const auto& q : j["Question"])
          a.question.emplace_back(q.value("name", ""), q.value("type", 0));
      if (j.contains("Answer")) {
        for (const auto& r : j["Answer"]) {
          AnswerRecord rec;
          rec.name = r.value("name", "");
          rec.rtype = std::uint16_t(r.value("type", 0));
          rec.ttl = r.value("TTL", 0u);
          rec.data = r.value("data", "");
          a.answer.push_back(std::move(rec));
        }
      }
      return a;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::JsonParseError, e.what());
    }
  }
};

struct ClientOptions {
  std::chrono::milliseconds timeout{5000};
  net::TlsVersion tls_min = net::TlsVersion::V1_2;
  net::TlsVersion tls_max = net::TlsVersion::Any;
  bool verify_peer = false;
  std::string ca_file;
  bool strict_content_type = true;
  std::string bootstrap_resolver; // "ip:port" used to resolve endpoint hosts
  // Receives the per-connection wire log once the connection is done.
  std::function<void(net::WireLog&&)> on_wire_log;
};

namespace detail {

inline std::vector<AnswerRecord> collect_answers(const dns::Message& m) {
  std::vector<AnswerRecord> out;
  static constexpr char hexd[] = "0123456789abcdef";
  for (const auto& rr : m.answers) {
    AnswerRecord rec;
    rec.name = rr.name.to_text();
    rec.rtype = rr.rtype;
    rec.ttl = rr.ttl;
    rec.rdata_hex.reserve(rr.rdata.size() * 2);
    for (auto b : rr.rdata) {
      rec.rdata_hex.push_back(hexd[b >> 4]);
      rec.rdata_hex.push_back(hexd[b & 0xf]);
    }
    rec.data = rr.address_text();
    out.push_back(std::move(rec));
  }
  return out;
}

inline void fail(QueryOutcome& o, const Error& e) {
  o.ok = false;
  o.error_kind = e.kind();
  o.error = e.what();
  o.timing.end_us = net::mono_us();
}

inline std::string ip_port(const std::string& ip, std::uint16_t port) {
  return ip + ":" + std::to_string(port);
}

} // namespace detail

// --- plain DNS ---------------------------------------------------------------

inline QueryOutcome query_plain_tcp(const std::string& server_ip, std::uint16_t port,
                                    const dns::Message& q, const ClientOptions& opts = {});

// UDP with the RFC-mandated truncation fallback: a tc=1 response triggers a
// TCP retry against the same server, flagged in the outcome.
inline QueryOutcome query_plain_udp(const std::string& server_ip, std::uint16_t port,
                                    const dns::Message& q, const ClientOptions& opts = {}) {
  auto wire = dns::encode_message(q);
  if (wire.size() > dns::kUdpPayloadLimit)
    throw Error(ErrorKind::EncodingOverflow,
                "query exceeds the 512-byte UDP payload limit; use TCP");

  QueryOutcome o;
  o.method = ResolutionMethod::PlainUdp;
  o.endpoint = detail::ip_port(server_ip, port);
  if (!q.questions.empty()) {
    o.domain = q.questions[0].qname.to_text();
    o.qtype = q.questions[0].qtype;
  }
  o.timing.start_us = net::mono_us();

  net::WireLog log;
  try {
    auto deadline = net::Deadline::in(opts.timeout);
    auto sock = net::UdpSocket::connected(server_ip, port);
    if (opts.on_wire_log) sock.attach_log(&log);
    sock.send_datagram(wire.data(), wire.size(), deadline);
    o.app_bytes_sent += wire.size();

    dns::Message resp;
    while (true) {
      auto datagram = sock.recv_datagram(deadline);
      if (o.timing.first_byte_us == 0) o.timing.first_byte_us = net::mono_us();
      o.app_bytes_received += datagram.size();
      try {
        resp = dns::decode_message(datagram);
      } catch (const Error& e) {
        throw Error(ErrorKind::MalformedResponse, e.what());
      }
      if (resp.header.id != q.header.id)
        throw Error(ErrorKind::IdMismatch, "response id does not match query id");
      break;
    }

    if (resp.header.tc) {
      // the UDP answer is unusable; ask again over TCP
      ClientOptions tcp_opts = opts;
      QueryOutcome tcp = query_plain_tcp(server_ip, port, q, tcp_opts);
      tcp.method = ResolutionMethod::PlainUdp;
      tcp.truncated_retried = true;
      tcp.timing.start_us = o.timing.start_us;
      tcp.app_bytes_sent += o.app_bytes_sent;
      tcp.app_bytes_received += o.app_bytes_received;
      tcp.wire_bytes_sent += o.app_bytes_sent;
      tcp.wire_bytes_received += o.app_bytes_received;
      if (opts.on_wire_log) {
        opts.on_wire_log(std::move(log));
        log.events.clear();
      }
      return tcp;
    }

    o.ok = true;
    o.rcode = resp.header.rcode;
    o.answers = detail::collect_answers(resp);
    o.wire_bytes_sent = o.app_bytes_sent;
    o.wire_bytes_received = o.app_bytes_received;
    o.timing.end_us = net::mono_us();
  } catch (const Error& e) {
    detail::fail(o, e);
  }
  if (opts.on_wire_log && !log.events.empty()) opts.on_wire_log(std::move(log));
  return o;
}

inline QueryOutcome query_plain_tcp(const std::string& server_ip, std::uint16_t port,
                                    const dns::Message& q, const ClientOptions& opts) {
  QueryOutcome o;
  o.method = ResolutionMethod::PlainTcp;
  o.endpoint = detail::ip_port(server_ip, port);
  if (!q.questions.empty()) {
    o.domain = q.questions[0].qname.to_text();
    o.qtype = q.questions[0].qtype;
  }
  o.timing.start_us = net::mono_us();

  net::WireLog log;
  try {
    auto deadline = net::Deadline::in(opts.timeout);
    auto framed = dns::tcp_frame(dns::encode_message(q));
    auto sock = net::TcpSocket::connect(server_ip, port, deadline);
    if (opts.on_wire_log) sock.attach_log(&log);
    sock.send_all(framed.data(), framed.size(), deadline);
    o.app_bytes_sent = framed.size();

    std::vector<std::uint8_t> buf;
    std::uint8_t chunk[4096];
    dns::Message resp;
    while (true) {
      std::size_t n = sock.recv_some(chunk, sizeof(chunk), deadline);
      if (n == 0) throw Error(ErrorKind::NetworkError, "server closed before a full response");
      if (o.timing.first_byte_us == 0) o.timing.first_byte_us = net::mono_us();
      o.app_bytes_received += n;
      buf.insert(buf.end(), chunk, chunk + n);
      auto frames = dns::tcp_unframe(buf);
      if (!frames.messages.empty()) {
        try {
          resp = dns::decode_message(frames.messages[0]);
        } catch (const Error& e) {
          throw Error(ErrorKind::MalformedResponse, e.what());
        }
        break;
      }
    }
    if (resp.header.id != q.header.id)
      throw Error(ErrorKind::IdMismatch, "response id does not match query id");

    o.ok = true;
    o.rcode = resp.header.rcode;
    o.answers = detail::collect_answers(resp);
    o.wire_bytes_sent = o.app_bytes_sent;
    o.wire_bytes_received = o.app_bytes_received;
    o.timing.end_us = net::mono_us();
  } catch (const Error& e) {
    detail::fail(o, e);
  }
  if (opts.on_wire_log && !log.events.empty()) opts.on_wire_log(std::move(log));
  return o;
}

// --- DoH transport -----------------------------------------------------------

// One HTTPS connection to a DoH endpoint, HTTP/1.1 or HTTP/2 per ALPN.
// Session mode keeps it open across queries; single-query helpers open and
// close one per call.
class DohConnection {
public:
  static DohConnection open(const DohEndpoint& ep, const ClientOptions& opts) {
    auto deadline = net::Deadline::in(opts.timeout);
    std::string ip = pick_address(ep, opts);

    auto sock = net::TcpSocket::connect(ip, ep.port, deadline);
    auto conn = std::make_unique<Connection>();
    if (opts.on_wire_log) sock.attach_log(&conn->log);

    net::TlsClientConfig tls;
    tls.sni_host = ep.host;
    tls.min_version = opts.tls_min;
    tls.max_version = opts.tls_max;
    tls.verify_peer = opts.verify_peer;
    tls.ca_file = opts.ca_file;
    switch (ep.preferred_http) {
      case HttpPreference::Auto: tls.alpn = {"h2", "http/1.1"}; break;
      case HttpPreference::H2: tls.alpn = {"h2"}; break;
      case HttpPreference::H1: tls.alpn = {"http/1.1"}; break;
    }
    conn->tls = std::make_unique<net::TlsConnection>(
        net::TlsConnection::connect(std::move(sock), tls, deadline));
    conn->is_h2 = conn->tls->negotiated_alpn() == "h2";
    if (conn->is_h2)
      conn->h2 = std::make_unique<http::h2::ClientSession>(std::move(*conn->tls), deadline);
    return DohConnection(ep, std::move(conn));
  }

  http::Response exchange(const http::Request& req, const net::Deadline& deadline) {
    if (conn_->is_h2) return conn_->h2->request(req, deadline);
    return http::h1::roundtrip(*conn_->tls, req, deadline);
  }

  const char* http_version() const { return conn_->is_h2 ? "h2" : "http/1.1"; }

  net::TlsConnection& tls() { return conn_->is_h2 ? conn_->h2->connection() : *conn_->tls; }

  void close(const ClientOptions& opts) {
    if (!conn_) return;
    auto deadline = net::Deadline::in(std::chrono::milliseconds(500));
    if (conn_->is_h2 && conn_->h2) {
      conn_->h2->close(deadline);
    } else if (conn_->tls) {
      conn_->tls->shutdown(deadline);
    }
    if (opts.on_wire_log && !conn_->log.events.empty()) opts.on_wire_log(std::move(conn_->log));
    conn_.reset();
  }

  bool is_open() const { return conn_ != nullptr; }
  const DohEndpoint& endpoint() const { return ep_; }

private:
  struct Connection {
    net::WireLog log;
    std::unique_ptr<net::TlsConnection> tls;
    std::unique_ptr<http::h2::ClientSession> h2;
    bool is_h2 = false;
  };

  DohConnection(DohEndpoint ep, std::unique_ptr<Connection> conn)
      : ep_(std::move(ep)), conn_(std::move(conn)) {}

  static std::string pick_address(const DohEndpoint& ep, const ClientOptions& opts) {
    if (!ep.bootstrap_address.empty()) return ep.bootstrap_address;
    if (capture::IpAddr::from_text(ep.host).valid()) return ep.host;
    if (!opts.bootstrap_resolver.empty()) {
      auto [ip, port] = split_host_port(opts.bootstrap_resolver, 53);
      auto q = dns::make_query(ep.host, dns::kTypeA, std::uint16_t(net::mono_us() & 0xffff));
      ClientOptions sub;
      sub.timeout = opts.timeout;
      auto outcome = query_plain_udp(ip, port, q, sub);
      if (outcome.ok)
        for (const auto& a : outcome.answers)
          if (a.rtype == dns::kTypeA) return a.data;
      throw Error(ErrorKind::NetworkError,
                  "bootstrap resolver could not resolve " + ep.host);
    }
    auto addrs = net::resolve_host(ep.host);
    if (addrs.empty()) throw Error(ErrorKind::NetworkError, "cannot resolve " + ep.host);
    return addrs[0];
  }

  static std::pair<std::string, std::uint16_t> split_host_port(const std::string& s,
                                                               std::uint16_t default_port) {
    std::size_t colon = s.rfind(':');
    if (colon == std::string::npos || s.find(':') != colon) return {s, default_port};
    return {s.substr(0, colon), std::uint16_t(std::stoi(s.substr(colon + 1)))};
  }

  DohEndpoint ep_;
  std::unique_ptr<Connection> conn_;
};

namespace detail {

inline bool content_type_is(const http::Response& resp, const std::string& want) {
  std::string ct = http::h1::lowercase(resp.header("content-type"));
  if (auto semi = ct.find(';'); semi != std::string::npos) ct.resize(semi);
  while (!ct.empty() && ct.back() == ' ') ct.pop_back();
  return ct == want;
}

inline void finalize_http_outcome(QueryOutcome& o, const http::Response& resp) {
  o.http_status = resp.status;
  o.response_headers = resp.headers;
  if (resp.first_byte_mono_us) o.timing.first_byte_us = resp.first_byte_mono_us;
}

// Runs one wire-format exchange (GET or POST) on an open connection.
inline QueryOutcome doh_wire_exchange(DohConnection& conn, const dns::Message& q, bool use_get,
                                      const ClientOptions& opts) {
  QueryOutcome o;
  o.method = use_get ? ResolutionMethod::DohGet : ResolutionMethod::DohPost;
  o.endpoint = conn.endpoint().url;
  if (!q.questions.empty()) {
    o.domain = q.questions[0].qname.to_text();
    o.qtype = q.questions[0].qtype;
  }
  o.timing.start_us = net::mono_us();
  o.http_version = conn.http_version();

  try {
    auto deadline = net::Deadline::in(opts.timeout);
    auto wire = dns::encode_message(q);

    http::Request req;
    req.host = conn.endpoint().host;
    if (use_get) {
      req.method = "GET";
      req.target = conn.endpoint().path + "?dns=" + base64url_encode_nopad(wire);
      req.headers.emplace_back("accept", "application/dns-message");
    } else {
      req.method = "POST";
      req.target = conn.endpoint().path;
      req.headers.emplace_back("accept", "application/dns-message");
      req.headers.emplace_back("content-type", "application/dns-message");
      req.body = wire;
    }

    auto& tls = conn.tls();
    std::uint64_t app_sent0 = tls.app_bytes_sent();
    std::uint64_t app_recv0 = tls.app_bytes_received();
    std::uint64_t wire_sent0 = tls.wire_bytes_sent();
    std::uint64_t wire_recv0 = tls.wire_bytes_received();

    auto resp = conn.exchange(req, deadline);
    o.app_bytes_sent = tls.app_bytes_sent() - app_sent0;
    o.app_bytes_received = tls.app_bytes_received() - app_recv0;
    o.wire_bytes_sent = tls.wire_bytes_sent() - wire_sent0;
    o.wire_bytes_received = tls.wire_bytes_received() - wire_recv0;
    detail::finalize_http_outcome(o, resp);

    if (resp.status < 200 || resp.status > 299)
      throw Error(ErrorKind::HttpError, "HTTP status " + std::to_string(resp.status));
    if (!content_type_is(resp, "application/dns-message")) {
      if (opts.strict_content_type)
        throw Error(ErrorKind::UnsupportedContentType,
                    "content-type '" + resp.header("content-type") + "'");
    }
    dns::Message answer;
    try {
      answer = dns::decode_message(resp.body);
    } catch (const Error& e) {
      throw Error(ErrorKind::MalformedResponse, e.what());
    }
    o.ok = true;
    o.rcode = answer.header.rcode;
    o.answers = collect_answers(answer);
    o.timing.end_us = net::mono_us();
  } catch (const Error& e) {
    detail::fail(o, e);
  }
  return o;
}

inline QueryOutcome doh_json_exchange(DohConnection& conn, const std::string& name,
                                      const std::string& qtype_text, const ClientOptions& opts) {
  QueryOutcome o;
  o.method = ResolutionMethod::DohJson;
  o.endpoint = conn.endpoint().url;
  o.domain = name;
  try {
    o.qtype = dns::rtype_from_text(qtype_text);
  } catch (const Error& e) {
    detail::fail(o, e);
    return o;
  }
  o.timing.start_us = net::mono_us();
  o.http_version = conn.http_version();

  try {
    auto deadline = net::Deadline::in(opts.timeout);
    http::Request req;
    req.method = "GET";
    req.host = conn.endpoint().host;
    req.target = conn.endpoint().path + "?name=" + name + "&type=" + qtype_text;
    req.headers.emplace_back("accept", "application/dns-json");

    auto& tls = conn.tls();
    std::uint64_t app_sent0 = tls.app_bytes_sent();
    std::uint64_t app_recv0 = tls.app_bytes_received();
    std::uint64_t wire_sent0 = tls.wire_bytes_sent();
    std::uint64_t wire_recv0 = tls.wire_bytes_received();

    auto resp = conn.exchange(req, deadline);
    o.app_bytes_sent = tls.app_bytes_sent() - app_sent0;
    o.app_bytes_received = tls.app_bytes_received() - app_recv0;
    o.wire_bytes_sent = tls.wire_bytes_sent() - wire_sent0;
    o.wire_bytes_received = tls.wire_bytes_received() - wire_recv0;
    detail::finalize_http_outcome(o, resp);

    if (resp.status < 200 || resp.status > 299)
      throw Error(ErrorKind::HttpError, "HTTP status " + std::to_string(resp.status));
    if (!content_type_is(resp, "application/dns-json") &&
        !content_type_is(resp, "application/json")) {
      if (opts.strict_content_type)
        throw Error(ErrorKind::UnsupportedContentType,
                    "content-type '" + resp.header("content-type") + "'");
    }
    auto parsed =
        JsonAnswer::parse(std::string(resp.body.begin(), resp.body.end()));
    o.ok = true;
    o.rcode = parsed.status;
    o.answers = parsed.answer;
    o.timing.end_us = net::mono_us();
  } catch (const Error& e) {
    detail::fail(o, e);
  }
  return o;
}

} // namespace detail

// Single-query mode: fresh connection per call, torn down before returning,
// which makes each query one self-contained flow.
inline QueryOutcome doh_get(const DohEndpoint& ep, const dns::Message& q,
                            const ClientOptions& opts = {}) {
  QueryOutcome o;
  try {
    auto conn = DohConnection::open(ep, opts);
    o = detail::doh_wire_exchange(conn, q, /*use_get=*/true, opts);
    conn.close(opts);
  } catch (const Error& e) {
    o.method = ResolutionMethod::DohGet;
    o.endpoint = ep.url;
    if (!q.questions.empty()) o.domain = q.questions[0].qname.to_text();
    detail::fail(o, e);
  }
  return o;
}

inline QueryOutcome doh_post(const DohEndpoint& ep, const dns::Message& q,
                             const ClientOptions& opts = {}) {
  QueryOutcome o;
  try {
    auto conn = DohConnection::open(ep, opts);
    o = detail::doh_wire_exchange(conn, q, /*use_get=*/false, opts);
    conn.close(opts);
  } catch (const Error& e) {
    o.method = ResolutionMethod::DohPost;
    o.endpoint = ep.url;
    if (!q.questions.empty()) o.domain = q.questions[0].qname.to_text();
    detail::fail(o, e);
  }
  return o;
}

inline QueryOutcome doh_json(const DohEndpoint& ep, const std::string& name,
                             const std::string& qtype_text, const ClientOptions& opts = {}) {
  QueryOutcome o;
  try {
    auto conn = DohConnection::open(ep, opts);
    o = detail::doh_json_exchange(conn, name, qtype_text, opts);
    conn.close(opts);
  } catch (const Error& e) {
    o.method = ResolutionMethod::DohJson;
    o.endpoint = ep.url;
    o.domain = name;
    detail::fail(o, e);
  }
  return o;
}

// Session mode: one connection, many queries. Not safe for concurrent use;
// run one session per worker instead.
class DohSession {
public:
  DohSession(const DohEndpoint& ep, const ClientOptions& opts)
      : opts_(opts), conn_(DohConnection::open(ep, opts)) {}

  ~DohSession() {
    try {
      close();
    } catch (...) {
    }
  }

  QueryOutcome get(const dns::Message& q) {
    return detail::doh_wire_exchange(conn_, q, /*use_get=*/true, opts_);
  }

  QueryOutcome post(const dns::Message& q) {
    return detail::doh_wire_exchange(conn_, q, /*use_get=*/false, opts_);
  }

  QueryOutcome json(const std::string& name, const std::string& qtype_text) {
    return detail::doh_json_exchange(conn_, name, qtype_text, opts_);
  }

  const char* http_version() const { return conn_.http_version(); }

  void close() {
    if (conn_.is_open()) conn_.close(opts_);
  }

private:
  ClientOptions opts_;
  DohConnection conn_;
};

// --- outcome serialization -----------------------------------------------------

inline constexpr const char* kOutcomeSchema = "dohscope.outcome.v1";

inline nlohmann::json outcome_to_json(const QueryOutcome& o) {
  nlohmann::json j;
  j["schema"] = kOutcomeSchema;
  j["method"] = method_name(o.method);
  j["endpoint"] = o.endpoint;
  j["domain"] = o.domain;
  j["qtype"] = o.qtype;
  j["ok"] = o.ok;
  if (o.error_kind != ErrorKind::None) {
    j["error_kind"] = error_kind_name(o.error_kind);
    j["error"] = o.error;
  }
  if (o.rcode) j["rcode"] = *o.rcode;
  j["answers"] = nlohmann::json::array();
  for (const auto& a : o.answers) {
    nlohmann::json e;
    e["name"] = a.name;
    e["rtype"] = a.rtype;
    e["ttl"] = a.ttl;
    if (!a.rdata_hex.empty()) e["rdata_hex"] = a.rdata_hex;
    if (!a.data.empty()) e["data"] = a.data;
    j["answers"].push_back(e);
  }
  j["timing_us"] = {{"start", o.timing.start_us},
                    {"first_byte", o.timing.first_byte_us},
                    {"end", o.timing.end_us}};
  j["app_bytes_sent"] = o.app_bytes_sent;
  j["app_bytes_received"] = o.app_bytes_received;
  j["wire_bytes_sent"] = o.wire_bytes_sent;
  j["wire_bytes_received"] = o.wire_bytes_received;
  if (o.http_status) j["http_status"] = *o.http_status;
  if (o.http_version) j["http_version"] = *o.http_version;
  if (!o.response_headers.empty()) {
    j["response_headers"] = nlohmann::json::array();
    for (const auto& [n, v] : o.response_headers) j["response_headers"].push_back({n, v});
  }
  j["truncated_retried"] = o.truncated_retried;
  return j;
}

} // namespace dohscope::doh
