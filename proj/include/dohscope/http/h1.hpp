#pragma once

// Minimal HTTP/1.1 over an established TLS connection: exact serialization
// of requests (so byte accounting is byte-true) and an incremental response
// parser handling content-length, chunked, and close-delimited bodies.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <string>
#include <vector>

#include "dohscope/errors.hpp"
#include "dohscope/http/hpack.hpp"
#include "dohscope/net/tls.hpp"

namespace dohscope::http {

struct Request {
  std::string method = "GET";
  std::string target = "/";
  std::string host;
  HeaderList headers; // name lowercased on our side
  std::vector<std::uint8_t> body;
};

struct Response {
  int status = 0;
  HeaderList headers;            // names lowercased
  std::vector<std::uint8_t> body;
  std::uint64_t raw_header_bytes = 0; // status line through the blank line, inclusive
  std::string version = "http/1.1";
  std::int64_t first_byte_mono_us = 0; // when the first response byte arrived

  std::string header(const std::string& name) const {
    for (const auto& [n, v] : headers)
      if (n == name) return v;
    return "";
  }

  bool has_header(const std::string& name) const {
    for (const auto& [n, v] : headers) {
      (void)v;
      if (n == name) return true;
    }
    return false;
  }
};

namespace h1 {

inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return char(std::tolower(c)); });
  return s;
}

inline std::vector<std::uint8_t> serialize_request(const Request& req) {
  std::string head = req.method + " " + req.target + " HTTP/1.1\r\n";
  head += "host: " + req.host + "\r\n";
  for (const auto& [name, value] : req.headers) head += name + ": " + value + "\r\n";
  if (!req.body.empty() || req.method == "POST" || req.method == "PUT")
    head += "content-length: " + std::to_string(req.body.size()) + "\r\n";
  head += "\r\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), req.body.begin(), req.body.end());
  return out;
}

namespace detail {

inline bool parse_head(const std::string& head, Response& resp) {
  std::size_t line_end = head.find("\r\n");
  if (line_end == std::string::npos) return false;
  std::string status_line = head.substr(0, line_end);
  if (status_line.size() < 12 || status_line.compare(0, 5, "HTTP/") != 0) return false;
  std::size_t sp1 = status_line.find(' ');
  if (sp1 == std::string::npos || sp1 + 4 > status_line.size()) return false;
  resp.status = std::atoi(status_line.c_str() + sp1 + 1);
  if (resp.status < 100 || resp.status > 599) return false;

  std::size_t at = line_end + 2;
  while (at < head.size()) {
    std::size_t end = head.find("\r\n", at);
    if (end == std::string::npos) break;
    if (end == at) break; // blank line
    std::string line = head.substr(at, end - at);
    std::size_t colon = line.find(':');
    if (colon != std::string::npos) {
      std::string name = lowercase(line.substr(0, colon));
      std::size_t vstart = colon + 1;
      while (vstart < line.size() && (line[vstart] == ' ' || line[vstart] == '\t')) vstart++;
      std::size_t vend = line.size();
      while (vend > vstart && (line[vend - 1] == ' ' || line[vend - 1] == '\t')) vend--;
      resp.headers.emplace_back(name, line.substr(vstart, vend - vstart));
    }
    at = end + 2;
  }
  return true;
}

} // namespace detail

// Sends one request and reads one response. Connection reuse is up to the
// caller; "connection: close" responses consume the rest of the stream.
inline Response roundtrip(net::TlsConnection& conn, const Request& req,
                          const net::Deadline& deadline) {
  auto wire = serialize_request(req);
  conn.write(wire, deadline);

  std::string buf;
  std::uint8_t chunk[8192];
  std::size_t head_end = std::string::npos;
  std::int64_t first_byte_us = 0;
  while (head_end == std::string::npos) {
    std::size_t n = conn.read_some(chunk, sizeof(chunk), deadline);
    if (n == 0)
      throw Error(ErrorKind::MalformedResponse, "connection closed before response head");
    if (first_byte_us == 0) first_byte_us = net::mono_us();
    buf.append(reinterpret_cast<char*>(chunk), n);
    head_end = buf.find("\r\n\r\n");
    if (buf.size() > 1 << 20)
      throw Error(ErrorKind::MalformedResponse, "response head beyond 1 MiB");
  }

  Response resp;
  resp.first_byte_mono_us = first_byte_us;
  resp.raw_header_bytes = head_end + 4;
  if (!detail::parse_head(buf.substr(0, head_end + 4), resp))
    throw Error(ErrorKind::MalformedResponse, "unparseable response head");

  std::string rest = buf.substr(head_end + 4);
  std::vector<std::uint8_t> body(rest.begin(), rest.end());

  auto read_more = [&](bool tolerate_eof) -> std::size_t {
    std::size_t n = conn.read_some(chunk, sizeof(chunk), deadline);
    if (n == 0 && !tolerate_eof)
      throw Error(ErrorKind::MalformedResponse, "connection closed mid-body");
    body.insert(body.end(), chunk, chunk + n);
    return n;
  };

  std::string te = h1::lowercase(resp.header("transfer-encoding"));
  if (te.find("chunked") != std::string::npos) {
    // de-chunk into resp.body
    std::size_t at = 0;
    while (true) {
      std::size_t line_end;
      while ((line_end = std::string(body.begin() + std::ptrdiff_t(at), body.end())
                             .find("\r\n")) == std::string::npos) {
        read_more(false);
      }
      std::string size_line(body.begin() + std::ptrdiff_t(at),
                            body.begin() + std::ptrdiff_t(at + line_end));
      std::size_t semi = size_line.find(';');
      if (semi != std::string::npos) size_line.resize(semi);
      std::size_t chunk_len = std::stoul(size_line, nullptr, 16);
      std::size_t data_at = at + line_end + 2;
      while (body.size() < data_at + chunk_len + 2) read_more(false);
      if (chunk_len == 0) break;
      resp.body.insert(resp.body.end(), body.begin() + std::ptrdiff_t(data_at),
                       body.begin() + std::ptrdiff_t(data_at + chunk_len));
      at = data_at + chunk_len + 2;
    }
    return resp;
  }

  std::string cl = resp.header("content-length");
  if (!cl.empty()) {
    std::size_t want = std::stoul(cl);
    while (body.size() < want) read_more(false);
    body.resize(want);
    resp.body = std::move(body);
    return resp;
  }

  // no length information: body runs to EOF
  while (read_more(true) > 0) {
  }
  resp.body = std::move(body);
  return resp;
}

// --- server-side helpers (fixtures) -----------------------------------------

struct ParsedRequest {
  std::string method;
  std::string target;
  HeaderList headers;
  std::vector<std::uint8_t> body;
};

// Reads one request from the connection; false on clean close before any
// bytes (keep-alive ending).
inline bool read_request(net::TlsConnection& conn, ParsedRequest& out,
                         const net::Deadline& deadline) {
  std::string buf;
  std::uint8_t chunk[8192];
  std::size_t head_end;
  while ((head_end = buf.find("\r\n\r\n")) == std::string::npos) {
    std::size_t n = conn.read_some(chunk, sizeof(chunk), deadline);
    if (n == 0) {
      if (buf.empty()) return false;
      throw Error(ErrorKind::MalformedResponse, "client closed mid-request");
    }
    buf.append(reinterpret_cast<char*>(chunk), n);
  }
  std::string head = buf.substr(0, head_end);
  std::size_t line_end = head.find("\r\n");
  std::string request_line = line_end == std::string::npos ? head : head.substr(0, line_end);
  std::size_t sp1 = request_line.find(' ');
  std::size_t sp2 = request_line.rfind(' ');
  if (sp1 == std::string::npos || sp2 == sp1)
    throw Error(ErrorKind::MalformedResponse, "bad request line");
  out.method = request_line.substr(0, sp1);
  out.target = request_line.substr(sp1 + 1, sp2 - sp1 - 1);

  std::size_t at = line_end == std::string::npos ? head.size() : line_end + 2;
  std::size_t content_length = 0;
  while (at < head.size()) {
    std::size_t end = head.find("\r\n", at);
    if (end == std::string::npos) end = head.size();
    std::string line = head.substr(at, end - at);
    std::size_t colon = line.find(':');
    if (colon != std::string::npos) {
      std::string name = lowercase(line.substr(0, colon));
      std::size_t vstart = colon + 1;
      while (vstart < line.size() && line[vstart] == ' ') vstart++;
      std::string value = line.substr(vstart);
      if (name == "content-length") content_length = std::stoul(value);
      out.headers.emplace_back(name, value);
    }
    at = end + 2;
  }

  std::string rest = buf.substr(head_end + 4);
  out.body.assign(rest.begin(), rest.end());
  while (out.body.size() < content_length) {
    std::size_t n = conn.read_some(chunk, sizeof(chunk), deadline);
    if (n == 0) throw Error(ErrorKind::MalformedResponse, "client closed mid-body");
    out.body.insert(out.body.end(), chunk, chunk + n);
  }
  out.body.resize(content_length);
  return true;
}

struct ServerResponse {
  int status = 200;
  std::string status_text = "OK";
  HeaderList headers;
  std::vector<std::uint8_t> body;
  bool omit_content_length = false; // close-delimited body
};

inline void write_response(net::TlsConnection& conn, const ServerResponse& resp,
                           const net::Deadline& deadline) {
  std::string head = "HTTP/1.1 " + std::to_string(resp.status) + " " + resp.status_text + "\r\n";
  for (const auto& [name, value] : resp.headers) head += name + ": " + value + "\r\n";
  if (!resp.omit_content_length)
    head += "content-length: " + std::to_string(resp.body.size()) + "\r\n";
  head += "\r\n";
  std::vector<std::uint8_t> wire(head.begin(), head.end());
  wire.insert(wire.end(), resp.body.begin(), resp.body.end());
  conn.write(wire, deadline);
}

} // namespace h1
} // namespace dohscope::http
