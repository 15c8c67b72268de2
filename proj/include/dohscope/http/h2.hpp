#pragma once

// HTTP/2 (RFC 7540) — the subset a DoH client and a test server need:
// one request per stream, sequential streams on one connection, HPACK
// header blocks with CONTINUATION, DATA with padding, SETTINGS/PING/
// GOAWAY/RST_STREAM/WINDOW_UPDATE handling, and both-direction flow
// control. No push, no priorities.

#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dohscope/errors.hpp"
#include "dohscope/http/h1.hpp"
#include "dohscope/http/hpack.hpp"
#include "dohscope/net/tls.hpp"

namespace dohscope::http::h2 {

inline constexpr char kPreface[] = "PRI * HTTP/2.0\r\n\r\nSM\r\n\r\n";
inline constexpr std::size_t kPrefaceLen = 24;
inline constexpr std::size_t kMaxFrameSize = 16384;
inline constexpr std::int64_t kDefaultWindow = 65535;

enum class FrameType : std::uint8_t {
  Data = 0,
  Headers = 1,
  Priority = 2,
  RstStream = 3,
  Settings = 4,
  PushPromise = 5,
  Ping = 6,
  GoAway = 7,
  WindowUpdate = 8,
  Continuation = 9,
};

constexpr std::uint8_t kFlagEndStream = 0x1;
constexpr std::uint8_t kFlagAck = 0x1;
constexpr std::uint8_t kFlagEndHeaders = 0x4;
constexpr std::uint8_t kFlagPadded = 0x8;
constexpr std::uint8_t kFlagPriority = 0x20;

constexpr std::uint16_t kSettingsHeaderTableSize = 0x1;
constexpr std::uint16_t kSettingsEnablePush = 0x2;
constexpr std::uint16_t kSettingsInitialWindowSize = 0x4;
constexpr std::uint16_t kSettingsMaxFrameSize = 0x5;

struct Frame {
  FrameType type = FrameType::Data;
  std::uint8_t flags = 0;
  std::uint32_t stream_id = 0;
  std::vector<std::uint8_t> payload;

  bool has(std::uint8_t flag) const { return (flags & flag) != 0; }
};

namespace detail {

inline void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

inline std::uint32_t get_u32be(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

} // namespace detail

// Frame-level I/O over one TLS connection.
class FrameIo {
public:
  explicit FrameIo(net::TlsConnection& conn) : conn_(conn) {}

  void write(FrameType type, std::uint8_t flags, std::uint32_t stream_id,
             const std::uint8_t* payload, std::size_t len, const net::Deadline& deadline) {
    std::vector<std::uint8_t> frame;
    frame.reserve(9 + len);
    frame.push_back(std::uint8_t(len >> 16));
    frame.push_back(std::uint8_t(len >> 8));
    frame.push_back(std::uint8_t(len));
    frame.push_back(std::uint8_t(type));
    frame.push_back(flags);
    detail::put_u32be(frame, stream_id & 0x7fffffff);
    frame.insert(frame.end(), payload, payload + len);
    conn_.write(frame, deadline);
  }

  void write(FrameType type, std::uint8_t flags, std::uint32_t stream_id,
             const std::vector<std::uint8_t>& payload, const net::Deadline& deadline) {
    write(type, flags, stream_id, payload.data(), payload.size(), deadline);
  }

  Frame read(const net::Deadline& deadline) {
    fill(9, deadline);
    std::size_t len =
        (std::size_t(buf_[0]) << 16) | (std::size_t(buf_[1]) << 8) | std::size_t(buf_[2]);
    if (len > kMaxFrameSize * 4)
      throw Error(ErrorKind::MalformedResponse, "HTTP/2 frame beyond sane size");
    Frame f;
    f.type = FrameType(buf_[3]);
    f.flags = buf_[4];
    f.stream_id = detail::get_u32be(&buf_[5]) & 0x7fffffff;
    fill(9 + len, deadline);
    f.payload.assign(buf_.begin() + 9, buf_.begin() + std::ptrdiff_t(9 + len));
    buf_.erase(buf_.begin(), buf_.begin() + std::ptrdiff_t(9 + len));
    return f;
  }

  // Raw stream helpers for the preface.
  void write_raw(const std::uint8_t* data, std::size_t len, const net::Deadline& deadline) {
    conn_.write(data, len, deadline);
  }

  void read_exact_raw(std::uint8_t* out, std::size_t len, const net::Deadline& deadline) {
    fill(len, deadline);
    std::copy(buf_.begin(), buf_.begin() + std::ptrdiff_t(len), out);
    buf_.erase(buf_.begin(), buf_.begin() + std::ptrdiff_t(len));
  }

  net::TlsConnection& connection() { return conn_; }

private:
  void fill(std::size_t need, const net::Deadline& deadline) {
    std::uint8_t chunk[16384];
    while (buf_.size() < need) {
      std::size_t n = conn_.read_some(chunk, sizeof(chunk), deadline);
      if (n == 0)
        throw Error(ErrorKind::NetworkError, "HTTP/2 peer closed the connection");
      buf_.insert(buf_.end(), chunk, chunk + n);
    }
  }

  net::TlsConnection& conn_;
  std::vector<std::uint8_t> buf_;
};

namespace detail {

struct PayloadView {
  const std::uint8_t* data;
  std::size_t len;
};

// Strips padding (and the priority block on HEADERS) per frame flags.
inline PayloadView strip_padding(const Frame& f, bool headers_frame) {
  const std::uint8_t* p = f.payload.data();
  std::size_t len = f.payload.size();
  std::size_t pad = 0;
  if (f.has(kFlagPadded)) {
    if (len < 1) throw Error(ErrorKind::MalformedResponse, "padded frame too short");
    pad = *p;
    p++;
    len--;
  }
  if (headers_frame && f.has(kFlagPriority)) {
    if (len < 5) throw Error(ErrorKind::MalformedResponse, "priority block cut short");
    p += 5;
    len -= 5;
  }
  if (pad > len) throw Error(ErrorKind::MalformedResponse, "padding beyond frame payload");
  return {p, len - pad};
}

inline std::vector<std::uint8_t> settings_payload(
    const std::vector<std::pair<std::uint16_t, std::uint32_t>>& settings) {
  std::vector<std::uint8_t> out;
  for (auto [id, value] : settings) {
    out.push_back(std::uint8_t(id >> 8));
    out.push_back(std::uint8_t(id));
    put_u32be(out, value);
  }
  return out;
}

} // namespace detail

// Client side: one connection, sequential requests on odd stream ids.
class ClientSession {
public:
  explicit ClientSession(net::TlsConnection conn, const net::Deadline& deadline)
      : conn_(std::move(conn)), io_(conn_) {
    io_.write_raw(reinterpret_cast<const std::uint8_t*>(kPreface), kPrefaceLen, deadline);
    io_.write(FrameType::Settings, 0,
              0, detail::settings_payload({{kSettingsEnablePush, 0}}), deadline);
    // The server must open with SETTINGS.
    Frame f = io_.read(deadline);
    if (f.type != FrameType::Settings || f.has(kFlagAck))
      throw Error(ErrorKind::MalformedResponse, "HTTP/2 server did not open with SETTINGS");
    apply_peer_settings(f);
    io_.write(FrameType::Settings, kFlagAck, 0, nullptr, 0, deadline);
  }

  Response request(const Request& req, const net::Deadline& deadline) {
    std::uint32_t stream_id = next_stream_id_;
    next_stream_id_ += 2;

    HeaderList block;
    block.emplace_back(":method", req.method);
    block.emplace_back(":scheme", "https");
    block.emplace_back(":authority", req.host);
    block.emplace_back(":path", req.target);
    for (const auto& h : req.headers) block.push_back(h);
    auto encoded = hpack::encode(block);

    bool has_body = !req.body.empty();
    io_.write(FrameType::Headers,
              std::uint8_t(kFlagEndHeaders | (has_body ? 0 : kFlagEndStream)), stream_id, encoded,
              deadline);
    if (has_body) {
      std::size_t at = 0;
      while (at < req.body.size()) {
        std::size_t n = std::min(req.body.size() - at, kMaxFrameSize);
        bool last = at + n == req.body.size();
        io_.write(FrameType::Data, last ? kFlagEndStream : 0, stream_id, req.body.data() + at, n,
                  deadline);
        at += n;
      }
    }

    Response resp;
    resp.version = "h2";
    std::vector<std::uint8_t> header_block;
    bool headers_done = false;
    bool saw_headers = false;

    while (true) {
      Frame f = io_.read(deadline);
      if (resp.first_byte_mono_us == 0 && f.stream_id == stream_id)
        resp.first_byte_mono_us = net::mono_us();
      switch (f.type) {
        case FrameType::Settings:
          if (!f.has(kFlagAck)) {
            apply_peer_settings(f);
            io_.write(FrameType::Settings, kFlagAck, 0, nullptr, 0, deadline);
          }
          break;
        case FrameType::Ping:
          if (!f.has(kFlagAck))
            io_.write(FrameType::Ping, kFlagAck, 0, f.payload, deadline);
          break;
        case FrameType::GoAway:
          throw Error(ErrorKind::NetworkError, "HTTP/2 server sent GOAWAY");
        case FrameType::RstStream:
          if (f.stream_id == stream_id)
            throw Error(ErrorKind::HttpError, "HTTP/2 stream reset by server");
          break;
        case FrameType::WindowUpdate:
        case FrameType::Priority:
          break;
        case FrameType::Headers: {
          if (f.stream_id != stream_id) break; // stale stream, ignore
          auto view = detail::strip_padding(f, true);
          header_block.assign(view.data, view.data + view.len);
          headers_done = f.has(kFlagEndHeaders);
          saw_headers = true;
          if (headers_done) consume_headers(header_block, resp);
          if (f.has(kFlagEndStream) && headers_done) return finish(resp);
          break;
        }
        case FrameType::Continuation: {
          if (f.stream_id != stream_id) break;
          header_block.insert(header_block.end(), f.payload.begin(), f.payload.end());
          headers_done = f.has(kFlagEndHeaders);
          if (headers_done) consume_headers(header_block, resp);
          break;
        }
        case FrameType::Data: {
          if (f.stream_id != stream_id) break;
          if (!saw_headers || !headers_done)
            throw Error(ErrorKind::MalformedResponse, "DATA before response headers");
          auto view = detail::strip_padding(f, false);
          resp.body.insert(resp.body.end(), view.data, view.data + view.len);
          // Replenish both windows by what we consumed.
          if (!f.payload.empty()) {
            std::vector<std::uint8_t> upd;
            detail::put_u32be(upd, std::uint32_t(f.payload.size()));
            io_.write(FrameType::WindowUpdate, 0, 0, upd, deadline);
            io_.write(FrameType::WindowUpdate, 0, stream_id, upd, deadline);
          }
          if (f.has(kFlagEndStream)) return finish(resp);
          break;
        }
        default:
          break; // unknown frame types are ignored by design
      }
    }
  }

  // Ordinary session teardown: GOAWAY then close_notify.
  void close(const net::Deadline& deadline) {
    try {
      std::vector<std::uint8_t> payload;
      detail::put_u32be(payload, next_stream_id_ - 2);
      detail::put_u32be(payload, 0); // NO_ERROR
      io_.write(FrameType::GoAway, 0, 0, payload, deadline);
      conn_.shutdown(deadline);
    } catch (const Error&) {
    }
  }

  net::TlsConnection& connection() { return conn_; }

private:
  void apply_peer_settings(const Frame& f) {
    if (f.payload.size() % 6 != 0)
      throw Error(ErrorKind::MalformedResponse, "bad SETTINGS payload length");
    for (std::size_t at = 0; at + 6 <= f.payload.size(); at += 6) {
      std::uint16_t id = std::uint16_t((f.payload[at] << 8) | f.payload[at + 1]);
      std::uint32_t value = detail::get_u32be(&f.payload[at + 2]);
      if (id == kSettingsHeaderTableSize) decoder_.set_capacity_limit(value);
    }
  }

  void consume_headers(const std::vector<std::uint8_t>& block, Response& resp) {
    HeaderList headers = decoder_.decode(block);
    for (auto& [name, value] : headers) {
      if (name == ":status") {
        resp.status = std::atoi(value.c_str());
      } else if (!name.empty() && name[0] == ':') {
        // other pseudo-headers are not part of the header list
      } else {
        resp.headers.emplace_back(name, value);
      }
    }
  }

  Response finish(Response& resp) {
    // Decompressed header-list size, the standard H2 accounting; the
    // :status pseudo-header counts as one entry like any other.
    HeaderList with_status = resp.headers;
    with_status.emplace_back(":status", std::to_string(resp.status));
    resp.raw_header_bytes = header_list_size(with_status);
    return std::move(resp);
  }

  net::TlsConnection conn_;
  FrameIo io_;
  hpack::Decoder decoder_;
  std::uint32_t next_stream_id_ = 1;
};

// Server side used by the fixture servers: accepts sequential requests and
// serves one response per stream. The handler returns h1::ServerResponse so
// fixtures share route logic between protocol versions.
class ServerSession {
public:
  using Handler = std::function<h1::ServerResponse(const h1::ParsedRequest&)>;

  ServerSession(net::TlsConnection& conn, Handler handler)
      : conn_(conn), io_(conn), handler_(std::move(handler)) {}

  // Serves until the client goes away or the deadline passes.
  void run(const net::Deadline& deadline) {
    std::uint8_t preface[kPrefaceLen];
    io_.read_exact_raw(preface, kPrefaceLen, deadline);
    if (std::memcmp(preface, kPreface, kPrefaceLen) != 0)
      throw Error(ErrorKind::MalformedResponse, "bad HTTP/2 client preface");
    io_.write(FrameType::Settings, 0, 0, detail::settings_payload({}), deadline);

    struct StreamState {
      std::vector<std::uint8_t> header_block;
      bool headers_done = false;
      HeaderList headers;
      std::vector<std::uint8_t> body;
    };
    std::map<std::uint32_t, StreamState> streams;

    while (true) {
      Frame f;
      try {
        f = io_.read(deadline);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::NetworkError) return; // client closed
        throw;
      }
      switch (f.type) {
        case FrameType::Settings:
          if (!f.has(kFlagAck)) {
            for (std::size_t at = 0; at + 6 <= f.payload.size(); at += 6) {
              std::uint16_t id = std::uint16_t((f.payload[at] << 8) | f.payload[at + 1]);
              std::uint32_t value = detail::get_u32be(&f.payload[at + 2]);
              if (id == kSettingsHeaderTableSize) decoder_.set_capacity_limit(value);
              if (id == kSettingsInitialWindowSize) initial_stream_window_ = value;
            }
            io_.write(FrameType::Settings, kFlagAck, 0, nullptr, 0, deadline);
          }
          break;
        case FrameType::Ping:
          if (!f.has(kFlagAck)) io_.write(FrameType::Ping, kFlagAck, 0, f.payload, deadline);
          break;
        case FrameType::GoAway:
          return;
        case FrameType::RstStream:
          streams.erase(f.stream_id);
          break;
        case FrameType::WindowUpdate: {
          if (f.payload.size() == 4) {
            std::uint32_t inc = detail::get_u32be(f.payload.data()) & 0x7fffffff;
            if (f.stream_id == 0)
              conn_window_ += inc;
            else
              stream_window_[f.stream_id] += inc;
          }
          break;
        }
        case FrameType::Headers: {
          auto view = detail::strip_padding(f, true);
          auto& st = streams[f.stream_id];
          st.header_block.assign(view.data, view.data + view.len);
          st.headers_done = f.has(kFlagEndHeaders);
          if (st.headers_done) st.headers = decoder_.decode(st.header_block);
          if (f.has(kFlagEndStream) && st.headers_done) {
            respond(f.stream_id, st.headers, st.body, deadline);
            streams.erase(f.stream_id);
          }
          break;
        }
        case FrameType::Continuation: {
          auto& st = streams[f.stream_id];
          st.header_block.insert(st.header_block.end(), f.payload.begin(), f.payload.end());
          st.headers_done = f.has(kFlagEndHeaders);
          if (st.headers_done) st.headers = decoder_.decode(st.header_block);
          break;
        }
        case FrameType::Data: {
          auto& st = streams[f.stream_id];
          auto view = detail::strip_padding(f, false);
          st.body.insert(st.body.end(), view.data, view.data + view.len);
          if (!f.payload.empty()) {
            std::vector<std::uint8_t> upd;
            detail::put_u32be(upd, std::uint32_t(f.payload.size()));
            io_.write(FrameType::WindowUpdate, 0, 0, upd, deadline);
            io_.write(FrameType::WindowUpdate, 0, f.stream_id, upd, deadline);
          }
          if (f.has(kFlagEndStream)) {
            respond(f.stream_id, st.headers, st.body, deadline);
            streams.erase(f.stream_id);
          }
          break;
        }
        default:
          break;
      }
    }
  }

private:
  void respond(std::uint32_t stream_id, const HeaderList& req_headers,
               const std::vector<std::uint8_t>& req_body, const net::Deadline& deadline) {
    h1::ParsedRequest req;
    for (const auto& [name, value] : req_headers) {
      if (name == ":method") {
        req.method = value;
      } else if (name == ":path") {
        req.target = value;
      } else if (name == ":authority") {
        req.headers.emplace_back("host", value);
      } else if (!name.empty() && name[0] != ':') {
        req.headers.emplace_back(name, value);
      }
    }
    req.body = req_body;
    h1::ServerResponse resp = handler_(req);

    HeaderList block;
    block.emplace_back(":status", std::to_string(resp.status));
    for (const auto& h : resp.headers) block.push_back(h);
    if (!resp.omit_content_length)
      block.emplace_back("content-length", std::to_string(resp.body.size()));
    auto encoded = hpack::encode(block);
    bool has_body = !resp.body.empty();
    io_.write(FrameType::Headers,
              std::uint8_t(kFlagEndHeaders | (has_body ? 0 : kFlagEndStream)), stream_id, encoded,
              deadline);

    std::size_t at = 0;
    std::uint32_t stream_window =
        stream_window_.count(stream_id) ? stream_window_[stream_id] : initial_stream_window_;
    std::int64_t swin = std::int64_t(stream_window);
    while (at < resp.body.size()) {
      while (conn_window_ <= 0 || swin <= 0) {
        Frame f = io_.read(deadline);
        if (f.type == FrameType::WindowUpdate && f.payload.size() == 4) {
          std::uint32_t inc = detail::get_u32be(f.payload.data()) & 0x7fffffff;
          if (f.stream_id == 0)
            conn_window_ += inc;
          else if (f.stream_id == stream_id)
            swin += inc;
        } else if (f.type == FrameType::GoAway) {
          return;
        } else if (f.type == FrameType::Ping && !f.has(kFlagAck)) {
          io_.write(FrameType::Ping, kFlagAck, 0, f.payload, deadline);
        } else if (f.type == FrameType::Settings && !f.has(kFlagAck)) {
          io_.write(FrameType::Settings, kFlagAck, 0, nullptr, 0, deadline);
        }
      }
      std::size_t n = std::min({resp.body.size() - at, kMaxFrameSize, std::size_t(conn_window_),
                                std::size_t(swin)});
      bool last = at + n == resp.body.size();
      io_.write(FrameType::Data, last ? kFlagEndStream : 0, stream_id, resp.body.data() + at, n,
                deadline);
      at += n;
      conn_window_ -= std::int64_t(n);
      swin -= std::int64_t(n);
    }
    stream_window_.erase(stream_id);
  }

  net::TlsConnection& conn_;
  FrameIo io_;
  hpack::Decoder decoder_;
  ServerSession::Handler handler_;
  std::int64_t conn_window_ = kDefaultWindow;
  std::uint32_t initial_stream_window_ = std::uint32_t(kDefaultWindow);
  std::map<std::uint32_t, std::uint32_t> stream_window_;
};

} // namespace dohscope::http::h2
