#pragma once

// In-process fixture servers: a scriptable plain-DNS server (UDP + TCP)
// and a DoH server speaking HTTP/1.1 and HTTP/2 over the project's own
// TLS/h2 stack, with knobs for every deployment quirk the probes detect.

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dohscope/base64url.hpp"
#include "dohscope/dns_codec.hpp"
#include "dohscope/http/h1.hpp"
#include "dohscope/http/h2.hpp"
#include "dohscope/net/socket.hpp"
#include "dohscope/net/tls.hpp"
#include "support/test_certs.hpp"

namespace testsupport {

using dohscope::dns::Message;
using dohscope::dns::ResourceRecord;

// --- shared zone -------------------------------------------------------------

struct Zone {
  std::map<std::string, std::vector<ResourceRecord>> records; // lowercased qname

  static std::string keyify(const dohscope::dns::Name& n) {
    std::string t = n.to_text();
    for (auto& c : t) c = char(std::tolower(static_cast<unsigned char>(c)));
    return t;
  }

  void add_a(const std::string& name, const std::string& ip, std::uint32_t ttl = 300) {
    ResourceRecord rr;
    rr.name = dohscope::dns::Name::from_text(name);
    rr.rtype = dohscope::dns::kTypeA;
    rr.ttl = ttl;
    in_addr a{};
    inet_pton(AF_INET, ip.c_str(), &a);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&a);
    rr.rdata.assign(p, p + 4);
    records[lower(name)].push_back(rr);
  }

  void add_aaaa(const std::string& name, const std::string& ip, std::uint32_t ttl = 300) {
    ResourceRecord rr;
    rr.name = dohscope::dns::Name::from_text(name);
    rr.rtype = dohscope::dns::kTypeAAAA;
    rr.ttl = ttl;
    in6_addr a{};
    inet_pton(AF_INET6, ip.c_str(), &a);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&a);
    rr.rdata.assign(p, p + 16);
    records[lower(name)].push_back(rr);
  }

  void add_txt(const std::string& name, std::size_t text_len, std::uint32_t ttl = 300) {
    ResourceRecord rr;
    rr.name = dohscope::dns::Name::from_text(name);
    rr.rtype = dohscope::dns::kTypeTXT;
    rr.ttl = ttl;
    // TXT rdata: length-prefixed strings of at most 255 bytes
    std::size_t remaining = text_len;
    while (remaining > 0) {
      std::size_t n = std::min<std::size_t>(remaining, 255);
      rr.rdata.push_back(std::uint8_t(n));
      rr.rdata.insert(rr.rdata.end(), n, 'x');
      remaining -= n;
    }
    records[lower(name)].push_back(rr);
  }

  static Zone standard() {
    Zone z;
    z.add_a("example.com", "93.184.216.34");
    z.add_aaaa("example.com", "2606:2800:220:1:248:1893:25c8:1946");
    z.add_a("www.example.com", "93.184.216.34");
    z.add_a("test.example", "192.0.2.7");
    return z;
  }

  Message answer(const Message& query, bool pad_txt = false) const {
    Message resp;
    resp.header = query.header;
    resp.header.qr = true;
    resp.header.ra = true;
    resp.header.aa = false;
    resp.header.tc = false;
    resp.questions = query.questions;
    if (!query.questions.empty()) {
      const auto& q = query.questions[0];
      auto it = records.find(keyify(q.qname));
      if (it == records.end()) {
        resp.header.rcode = dohscope::dns::kRcodeNxDomain;
      } else {
        for (const auto& rr : it->second) {
          if (rr.rtype == q.qtype || q.qtype == 255) {
            ResourceRecord out = rr;
            out.name = q.qname; // echo the asked case
            resp.answers.push_back(out);
          }
        }
        if (resp.answers.empty() && !pad_txt) resp.header.rcode = dohscope::dns::kRcodeNoError;
      }
    }
    resp.sync_counts();
    return resp;
  }

private:
  static std::string lower(std::string s) {
    for (auto& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }
};

// --- plain DNS fixture ---------------------------------------------------------

struct DnsFixtureConfig {
  Zone zone = Zone::standard();
  bool truncate_udp = false; // answer tc=1 with empty answer section over UDP
  bool drop_udp = false;     // never answer (timeout path)
  bool wrong_id = false;     // corrupt the id in responses
  bool udp_enabled = true;
  bool tcp_enabled = true;
};

class DnsFixtureServer {
public:
  explicit DnsFixtureServer(DnsFixtureConfig cfg = {}) : cfg_(std::move(cfg)) {
    using namespace dohscope;
    // DNS convention puts UDP and TCP on one port number; grab a pair.
    for (int attempt = 0; attempt < 32; attempt++) {
      udp_ = net::UdpSocket::bound("127.0.0.1", 0);
      udp_port_ = udp_.local_endpoint().port;
      if (!cfg_.tcp_enabled) break;
      try {
        tcp_ = std::make_unique<net::TcpListener>("127.0.0.1", udp_port_);
        break;
      } catch (const Error&) {
        tcp_.reset();
        if (attempt == 31) throw;
      }
    }
    running_ = true;
    if (cfg_.udp_enabled) udp_thread_ = std::thread([this] { udp_loop(); });
    if (cfg_.tcp_enabled) tcp_thread_ = std::thread([this] { tcp_loop(); });
  }

  ~DnsFixtureServer() { stop(); }

  void stop() {
    if (!running_.exchange(false)) return;
    if (tcp_) tcp_->close();
    if (udp_thread_.joinable()) udp_thread_.join();
    if (tcp_thread_.joinable()) tcp_thread_.join();
  }

  std::uint16_t port() const { return udp_port_; }
  std::string address() const { return "127.0.0.1"; }

private:
  void udp_loop() {
    using namespace dohscope;
    while (running_) {
      sockaddr_storage from{};
      socklen_t fromlen = sizeof(from);
      std::uint8_t buf[4096];
      pollfd pfd{udp_.fd(), POLLIN, 0};
      if (::poll(&pfd, 1, 200) <= 0) continue;
      ssize_t n = ::recvfrom(udp_.fd(), buf, sizeof(buf), 0, reinterpret_cast<sockaddr*>(&from),
                             &fromlen);
      if (n <= 0 || !running_) continue;
      if (cfg_.drop_udp) continue;
      try {
        Message query = dns::decode_message(buf, std::size_t(n));
        Message resp;
        if (cfg_.truncate_udp) {
          resp = query;
          resp.header.qr = true;
          resp.header.tc = true;
          resp.header.ra = true;
          resp.answers.clear();
          resp.authority.clear();
          resp.additional.clear();
          resp.sync_counts();
        } else {
          resp = cfg_.zone.answer(query);
        }
        if (cfg_.wrong_id) resp.header.id = std::uint16_t(resp.header.id + 1);
        auto wire = dns::encode_message(resp);
        ::sendto(udp_.fd(), wire.data(), wire.size(), 0, reinterpret_cast<sockaddr*>(&from),
                 fromlen);
      } catch (const Error&) {
        // unparseable datagram: stay silent like a confused resolver
      }
    }
  }

  void tcp_loop() {
    using namespace dohscope;
    while (running_) {
      auto conn = tcp_->accept(net::Deadline::in(std::chrono::milliseconds(200)));
      if (!conn.valid()) continue;
      std::thread([this, c = std::move(conn)]() mutable {
        try {
          auto deadline = net::Deadline::in(std::chrono::seconds(10));
          std::vector<std::uint8_t> buf;
          std::uint8_t chunk[4096];
          while (running_) {
            auto res = dns::tcp_unframe(buf);
            if (!res.messages.empty()) {
              for (const auto& msg : res.messages) {
                Message query = dns::decode_message(msg);
                Message resp = cfg_.zone.answer(query);
                if (cfg_.wrong_id) resp.header.id = std::uint16_t(resp.header.id + 1);
                auto wire = dns::tcp_frame(dns::encode_message(resp));
                c.send_all(wire.data(), wire.size(), deadline);
              }
              buf.erase(buf.begin(), buf.begin() + std::ptrdiff_t(res.consumed));
            }
            std::size_t n = c.recv_some(chunk, sizeof(chunk), deadline);
            if (n == 0) break;
            buf.insert(buf.end(), chunk, chunk + n);
          }
        } catch (const Error&) {
        }
      }).detach();
    }
  }

  DnsFixtureConfig cfg_;
  dohscope::net::UdpSocket udp_;
  std::unique_ptr<dohscope::net::TcpListener> tcp_;
  std::uint16_t udp_port_ = 0;
  std::atomic<bool> running_{false};
  std::thread udp_thread_;
  std::thread tcp_thread_;
};

// --- DoH fixture ----------------------------------------------------------------

struct DohFixtureConfig {
  Zone zone = Zone::standard();
  std::vector<std::string> alpn = {"h2", "http/1.1"};
  dohscope::net::TlsVersion tls_min = dohscope::net::TlsVersion::V1_2;
  dohscope::net::TlsVersion tls_max = dohscope::net::TlsVersion::Any;
  bool allow_legacy_tls = false;
  std::string issuer_org = "dohscope test CA";
  std::string path = "/dns-query";
  bool enable_get = true;          // 404 when off
  bool enable_post = true;         // 405 when off
  bool enable_json = true;         // 404 on name= form when off
  std::string json_body_override;  // served verbatim on the JSON route
  std::string content_type_override; // nonstandard content-type for wire answers
  bool omit_content_length = false;  // HTTP/1.1: close-delimited body
  dohscope::http::HeaderList extra_headers; // appended verbatim
  bool enable_blob_route = true;     // GET /blob/<n> for bulk-HTTPS traffic
  bool bind_v6 = false;              // additionally listen on ::1
};

class DohFixtureServer {
public:
  explicit DohFixtureServer(DohFixtureConfig cfg = {}) : cfg_(std::move(cfg)) {
    using namespace dohscope;
    const CertBundle& certs = test_cert_bundle(cfg_.issuer_org);
    net::TlsServerConfig scfg;
    scfg.cert_pem = certs.leaf_cert_pem;
    scfg.key_pem = certs.leaf_key_pem;
    scfg.chain_pem = certs.ca_cert_pem;
    scfg.alpn_allowed = cfg_.alpn;
    scfg.min_version = cfg_.tls_min;
    scfg.max_version = cfg_.tls_max;
    scfg.allow_legacy = cfg_.allow_legacy_tls;
    tls_ = std::make_unique<net::TlsServerContext>(scfg);

    listener_ = std::make_unique<net::TcpListener>("127.0.0.1", 0);
    port_ = listener_->port();
    if (cfg_.bind_v6) listener6_ = std::make_unique<net::TcpListener>("::1", port_);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(listener_.get()); });
    if (listener6_) accept6_thread_ = std::thread([this] { accept_loop(listener6_.get()); });
  }

  ~DohFixtureServer() { stop(); }

  void stop() {
    if (!running_.exchange(false)) return;
    listener_->close();
    if (listener6_) listener6_->close();
    if (accept_thread_.joinable()) accept_thread_.join();
    if (accept6_thread_.joinable()) accept6_thread_.join();
  }

  std::uint16_t port() const { return port_; }
  std::string url() const { return "https://127.0.0.1:" + std::to_string(port_) + cfg_.path; }
  const std::string& ca_pem() const { return test_cert_bundle(cfg_.issuer_org).ca_cert_pem; }

private:
  void accept_loop(dohscope::net::TcpListener* listener) {
    using namespace dohscope;
    while (running_) {
      auto sock = listener->accept(net::Deadline::in(std::chrono::milliseconds(200)));
      if (!sock.valid()) continue;
      std::thread([this, s = std::move(sock)]() mutable { serve(std::move(s)); }).detach();
    }
  }

  void serve(dohscope::net::TcpSocket sock) {
    using namespace dohscope;
    try {
      auto deadline = net::Deadline::in(std::chrono::seconds(30));
      auto conn = tls_->accept(std::move(sock), deadline);
      std::string alpn = conn.negotiated_alpn();
      auto handler = [this](const http::h1::ParsedRequest& req) { return route(req); };
      if (alpn == "h2") {
        http::h2::ServerSession session(conn, handler);
        session.run(deadline);
      } else {
        while (true) {
          http::h1::ParsedRequest req;
          if (!http::h1::read_request(conn, req, deadline)) break;
          auto resp = route(req);
          resp.omit_content_length = cfg_.omit_content_length;
          http::h1::write_response(conn, resp, deadline);
          if (resp.omit_content_length) break; // close-delimited body ends the connection
        }
      }
      conn.shutdown(net::Deadline::in(std::chrono::milliseconds(500)));
    } catch (const Error&) {
      // handshake refusals and client aborts are expected under probing
    }
  }

  dohscope::http::h1::ServerResponse route(const dohscope::http::h1::ParsedRequest& req) {
    using namespace dohscope;
    http::h1::ServerResponse resp;

    std::string path = req.target;
    std::string query_string;
    if (auto qm = path.find('?'); qm != std::string::npos) {
      query_string = path.substr(qm + 1);
      path.resize(qm);
    }

    if (cfg_.enable_blob_route && req.method == "GET" && path.rfind("/blob/", 0) == 0) {
      std::size_t n = std::stoul(path.substr(6));
      resp.status = 200;
      resp.headers.emplace_back("content-type", "application/octet-stream");
      std::mt19937 rng{std::uint32_t(n)};
      resp.body.resize(n);
      for (auto& b : resp.body) b = std::uint8_t(rng());
      append_extra(resp);
      return resp;
    }

    if (path != cfg_.path) {
      resp.status = 404;
      resp.status_text = "Not Found";
      resp.headers.emplace_back("content-type", "text/plain");
      resp.body = {'n', 'o'};
      append_extra(resp);
      return resp;
    }

    auto params = parse_query(query_string);

    if (req.method == "GET" && params.count("dns")) {
      if (!cfg_.enable_get) return not_found();
      try {
        auto wire = base64url_decode_nopad(params["dns"]);
        return wire_answer(dns::decode_message(wire));
      } catch (const Error&) {
        return bad_request();
      }
    }

    if (req.method == "POST") {
      if (!cfg_.enable_post) {
        resp.status = 405;
        resp.status_text = "Method Not Allowed";
        resp.headers.emplace_back("content-type", "text/plain");
        append_extra(resp);
        return resp;
      }
      try {
        return wire_answer(dns::decode_message(req.body));
      } catch (const Error&) {
        return bad_request();
      }
    }

    if (req.method == "GET" && params.count("name")) {
      if (!cfg_.enable_json) return not_found();
      return json_answer(params["name"], params.count("type") ? params["type"] : "A");
    }

    return not_found();
  }

  dohscope::http::h1::ServerResponse wire_answer(const Message& query) {
    using namespace dohscope;
    http::h1::ServerResponse resp;
    Message answer = cfg_.zone.answer(query);
    resp.status = 200;
    resp.headers.emplace_back("content-type", cfg_.content_type_override.empty()
                                                  ? "application/dns-message"
                                                  : cfg_.content_type_override);
    resp.body = dns::encode_message(answer);
    append_extra(resp);
    return resp;
  }

  dohscope::http::h1::ServerResponse json_answer(const std::string& name,
                                                 const std::string& type) {
    using namespace dohscope;
    http::h1::ServerResponse resp;
    nlohmann::json j;
    std::uint16_t qtype = 1;
    try {
      qtype = dns::rtype_from_text(type);
    } catch (const Error&) {
      return bad_request();
    }

    Message query;
    try {
      query = dns::make_query(name, qtype, 0);
    } catch (const Error&) {
      return bad_request();
    }
    Message answer = cfg_.zone.answer(query);

    j["Status"] = answer.header.rcode;
    j["TC"] = answer.header.tc;
    j["RD"] = true;
    j["RA"] = true;
    j["AD"] = false;
    j["CD"] = false;
    j["Question"] = nlohmann::json::array();
    j["Question"].push_back({{"name", name + "."}, {"type", qtype}});
    j["Answer"] = nlohmann::json::array();
    for (const auto& rr : answer.answers) {
      nlohmann::json a;
      a["name"] = rr.name.to_text() + ".";
      a["type"] = rr.rtype;
      a["TTL"] = rr.ttl;
      std::string text = rr.address_text();
      a["data"] = text.empty() ? "\\# opaque" : text;
      j["Answer"].push_back(a);
    }
    resp.status = 200;
    resp.headers.emplace_back("content-type", "application/dns-json");
    std::string body = j.dump();
    resp.body.assign(body.begin(), body.end());
    append_extra(resp);
    return resp;
  }

  dohscope::http::h1::ServerResponse not_found() {
    dohscope::http::h1::ServerResponse resp;
    resp.status = 404;
    resp.status_text = "Not Found";
    resp.headers.emplace_back("content-type", "text/plain");
    append_extra(resp);
    return resp;
  }

  dohscope::http::h1::ServerResponse bad_request() {
    dohscope::http::h1::ServerResponse resp;
    resp.status = 400;
    resp.status_text = "Bad Request";
    resp.headers.emplace_back("content-type", "text/plain");
    append_extra(resp);
    return resp;
  }

  void append_extra(dohscope::http::h1::ServerResponse& resp) {
    for (const auto& h : cfg_.extra_headers) resp.headers.push_back(h);
  }

  static std::map<std::string, std::string> parse_query(const std::string& qs) {
    std::map<std::string, std::string> out;
    std::size_t at = 0;
    while (at < qs.size()) {
      std::size_t amp = qs.find('&', at);
      if (amp == std::string::npos) amp = qs.size();
      std::string pair = qs.substr(at, amp - at);
      std::size_t eq = pair.find('=');
      if (eq != std::string::npos) {
        out[pair.substr(0, eq)] = pair.substr(eq + 1);
      } else if (!pair.empty()) {
        out[pair] = "";
      }
      at = amp + 1;
    }
    return out;
  }

  DohFixtureConfig cfg_;
  std::unique_ptr<dohscope::net::TlsServerContext> tls_;
  std::unique_ptr<dohscope::net::TcpListener> listener_;
  std::unique_ptr<dohscope::net::TcpListener> listener6_;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::thread accept6_thread_;
};

} // namespace testsupport
