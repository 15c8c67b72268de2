#pragma once

// Non-blocking POSIX sockets with deadlines and byte-level accounting.
// Every chunk moved over a connection can be recorded as a wire event,
// which later feeds the trace synthesizer.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "dohscope/errors.hpp"

namespace dohscope::net {

using Clock = std::chrono::steady_clock;

inline std::int64_t wall_clock_us() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

inline std::int64_t mono_us() {
  return std::chrono::duration_cast<std::chrono::microseconds>(Clock::now().time_since_epoch())
      .count();
}

class Deadline {
public:
  static Deadline in(std::chrono::milliseconds d) { return Deadline{Clock::now() + d}; }
  static Deadline never() { return Deadline{Clock::time_point::max()}; }

  bool expired() const { return Clock::now() >= at_; }

  int remaining_ms() const {
    if (at_ == Clock::time_point::max()) return -1;
    auto d = std::chrono::duration_cast<std::chrono::milliseconds>(at_ - Clock::now()).count();
    if (d <= 0) return 0;
    return int(std::min<long long>(d, 1 << 30));
  }

private:
  explicit Deadline(Clock::time_point at) : at_(at) {}
  Clock::time_point at_;
};

struct Endpoint {
  std::string ip;
  std::uint16_t port = 0;
};

enum class WireDir { Out, In };

struct WireEvent {
  std::int64_t ts_us = 0; // wall clock
  WireDir dir = WireDir::Out;
  std::uint32_t bytes = 0;
};

// Byte chunks seen on one connection, with the connection's addressing.
// Transport payload exactly as handed to / received from the kernel, which
// for TLS connections means TLS record bytes.
struct WireLog {
  Endpoint local;
  Endpoint peer;
  bool is_tcp = true;
  std::vector<WireEvent> events;

  void record(WireDir dir, std::size_t n) {
    events.push_back({wall_clock_us(), dir, std::uint32_t(n)});
  }
};

namespace detail {

inline Endpoint endpoint_of(const sockaddr_storage& ss) {
  Endpoint ep;
  char buf[INET6_ADDRSTRLEN] = {};
  if (ss.ss_family == AF_INET) {
    const auto* a = reinterpret_cast<const sockaddr_in*>(&ss);
    inet_ntop(AF_INET, &a->sin_addr, buf, sizeof(buf));
    ep.port = ntohs(a->sin_port);
  } else if (ss.ss_family == AF_INET6) {
    const auto* a = reinterpret_cast<const sockaddr_in6*>(&ss);
    inet_ntop(AF_INET6, &a->sin6_addr, buf, sizeof(buf));
    ep.port = ntohs(a->sin6_port);
  }
  ep.ip = buf;
  return ep;
}

inline sockaddr_storage make_sockaddr(const std::string& ip, std::uint16_t port, int& family,
                                      socklen_t& len) {
  sockaddr_storage ss{};
  in_addr v4{};
  in6_addr v6{};
  if (inet_pton(AF_INET, ip.c_str(), &v4) == 1) {
    auto* a = reinterpret_cast<sockaddr_in*>(&ss);
    a->sin_family = AF_INET;
    a->sin_addr = v4;
    a->sin_port = htons(port);
    family = AF_INET;
    len = sizeof(sockaddr_in);
  } else if (inet_pton(AF_INET6, ip.c_str(), &v6) == 1) {
    auto* a = reinterpret_cast<sockaddr_in6*>(&ss);
    a->sin6_family = AF_INET6;
    a->sin6_addr = v6;
    a->sin6_port = htons(port);
    family = AF_INET6;
    len = sizeof(sockaddr_in6);
  } else {
    throw Error(ErrorKind::ConfigError, "not an IP literal: " + ip);
  }
  return ss;
}

inline void wait_fd(int fd, short events, const Deadline& deadline, const char* what) {
  pollfd pfd{fd, events, 0};
  int ms = deadline.remaining_ms();
  if (ms == 0) throw Error(ErrorKind::Timeout, std::string(what) + " timed out");
  int rc = ::poll(&pfd, 1, ms);
  if (rc == 0) throw Error(ErrorKind::Timeout, std::string(what) + " timed out");
  if (rc < 0) throw Error(ErrorKind::NetworkError, std::string("poll: ") + std::strerror(errno));
}

} // namespace detail

// Resolves a host name or IP literal to address texts, via getaddrinfo.
inline std::vector<std::string> resolve_host(const std::string& host, int family = AF_UNSPEC) {
  addrinfo hints{};
  hints.ai_family = family;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) return {};
  std::vector<std::string> out;
  for (addrinfo* p = res; p; p = p->ai_next) {
    char buf[INET6_ADDRSTRLEN] = {};
    if (p->ai_family == AF_INET) {
      inet_ntop(AF_INET, &reinterpret_cast<sockaddr_in*>(p->ai_addr)->sin_addr, buf, sizeof(buf));
    } else if (p->ai_family == AF_INET6) {
      inet_ntop(AF_INET6, &reinterpret_cast<sockaddr_in6*>(p->ai_addr)->sin6_addr, buf,
                sizeof(buf));
    } else {
      continue;
    }
    if (buf[0]) out.emplace_back(buf);
  }
  freeaddrinfo(res);
  // de-dup, preserving order
  std::vector<std::string> uniq;
  for (auto& a : out)
    if (std::find(uniq.begin(), uniq.end(), a) == uniq.end()) uniq.push_back(a);
  return uniq;
}

class TcpSocket {
public:
  TcpSocket() = default;
  explicit TcpSocket(int fd) : fd_(fd) { set_nonblocking(); }

  TcpSocket(TcpSocket&& o) noexcept : fd_(std::exchange(o.fd_, -1)), log_(o.log_) {}
  TcpSocket& operator=(TcpSocket&& o) noexcept {
    if (this != &o) {
      close_fd();
      fd_ = std::exchange(o.fd_, -1);
      log_ = o.log_;
    }
    return *this;
  }
  TcpSocket(const TcpSocket&) = delete;
  TcpSocket& operator=(const TcpSocket&) = delete;
  ~TcpSocket() { close_fd(); }

  static TcpSocket connect(const std::string& ip, std::uint16_t port, const Deadline& deadline) {
    int family = 0;
    socklen_t slen = 0;
    sockaddr_storage ss = detail::make_sockaddr(ip, port, family, slen);
    int fd = ::socket(family, SOCK_STREAM | SOCK_NONBLOCK, 0);
    if (fd < 0) throw Error(ErrorKind::NetworkError, std::strerror(errno));
    TcpSocket s(fd);
    int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&ss), slen);
    if (rc != 0 && errno != EINPROGRESS)
      throw Error(ErrorKind::NetworkError,
                  "connect " + ip + ":" + std::to_string(port) + ": " + std::strerror(errno));
    if (rc != 0) {
      detail::wait_fd(fd, POLLOUT, deadline, "connect");
      int err = 0;
      socklen_t elen = sizeof(err);
      getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &elen);
      if (err != 0)
        throw Error(ErrorKind::NetworkError,
                    "connect " + ip + ":" + std::to_string(port) + ": " + std::strerror(err));
    }
    int one = 1;
    setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    return s;
  }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }

  void attach_log(WireLog* log) {
    log_ = log;
    if (log_) {
      log_->local = local_endpoint();
      log_->peer = peer_endpoint();
      log_->is_tcp = true;
    }
  }
  WireLog* log() const { return log_; }

  Endpoint local_endpoint() const {
    sockaddr_storage ss{};
    socklen_t len = sizeof(ss);
    getsockname(fd_, reinterpret_cast<sockaddr*>(&ss), &len);
    return detail::endpoint_of(ss);
  }

  Endpoint peer_endpoint() const {
    sockaddr_storage ss{};
    socklen_t len = sizeof(ss);
    getpeername(fd_, reinterpret_cast<sockaddr*>(&ss), &len);
    return detail::endpoint_of(ss);
  }

  // Writes the whole buffer or throws (Timeout / NetworkError).
  void send_all(const std::uint8_t* data, std::size_t len, const Deadline& deadline) {
    std::size_t at = 0;
    while (at < len) {
      ssize_t n = ::send(fd_, data + at, len - at, MSG_NOSIGNAL);
      if (n > 0) {
        if (log_) log_->record(WireDir::Out, std::size_t(n));
        at += std::size_t(n);
        continue;
      }
      if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK)) {
        detail::wait_fd(fd_, POLLOUT, deadline, "send");
        continue;
      }
      throw Error(ErrorKind::NetworkError, std::string("send: ") + std::strerror(errno));
    }
  }

  // Reads at least one byte unless the peer closed (returns 0). Throws on
  // timeout or error.
  std::size_t recv_some(std::uint8_t* buf, std::size_t cap, const Deadline& deadline) {
    while (true) {
      ssize_t n = ::recv(fd_, buf, cap, 0);
      if (n > 0) {
        if (log_) log_->record(WireDir::In, std::size_t(n));
        return std::size_t(n);
      }
      if (n == 0) return 0;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        detail::wait_fd(fd_, POLLIN, deadline, "recv");
        continue;
      }
      throw Error(ErrorKind::NetworkError, std::string("recv: ") + std::strerror(errno));
    }
  }

  // Non-blocking poll: true when readable within the deadline.
  bool readable(const Deadline& deadline) const {
    pollfd pfd{fd_, POLLIN, 0};
    return ::poll(&pfd, 1, deadline.remaining_ms()) > 0;
  }

  void shutdown_write() {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
  }

private:
  void set_nonblocking() {
    int flags = fcntl(fd_, F_GETFL, 0);
    fcntl(fd_, F_SETFL, flags | O_NONBLOCK);
  }

  void close_fd() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  int fd_ = -1;
  WireLog* log_ = nullptr;
};

class TcpListener {
public:
  explicit TcpListener(const std::string& ip, std::uint16_t port = 0) {
    int family = 0;
    socklen_t slen = 0;
    sockaddr_storage ss = detail::make_sockaddr(ip, port, family, slen);
    fd_ = ::socket(family, SOCK_STREAM, 0);
    if (fd_ < 0) throw Error(ErrorKind::NetworkError, std::strerror(errno));
    int one = 1;
    setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&ss), slen) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw Error(ErrorKind::NetworkError, std::string("bind: ") + std::strerror(errno));
    }
    if (::listen(fd_, 32) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw Error(ErrorKind::NetworkError, std::string("listen: ") + std::strerror(errno));
    }
  }

  ~TcpListener() { close(); }
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const {
    sockaddr_storage ss{};
    socklen_t len = sizeof(ss);
    getsockname(fd_, reinterpret_cast<sockaddr*>(&ss), &len);
    return detail::endpoint_of(ss).port;
  }

  // Accepts one connection; empty socket on timeout or after close().
  TcpSocket accept(const Deadline& deadline) {
    pollfd pfd{fd_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, deadline.remaining_ms());
    if (rc <= 0) return TcpSocket();
    int cfd = ::accept(fd_, nullptr, nullptr);
    if (cfd < 0) return TcpSocket();
    return TcpSocket(cfd);
  }

  void close() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  int fd() const { return fd_; }

private:
  int fd_ = -1;
};

class UdpSocket {
public:
  UdpSocket() = default;

  static UdpSocket bound(const std::string& ip, std::uint16_t port = 0) {
    int family = 0;
    socklen_t slen = 0;
    sockaddr_storage ss = detail::make_sockaddr(ip, port, family, slen);
    UdpSocket s;
    s.fd_ = ::socket(family, SOCK_DGRAM | SOCK_NONBLOCK, 0);
    if (s.fd_ < 0) throw Error(ErrorKind::NetworkError, std::strerror(errno));
    if (::bind(s.fd_, reinterpret_cast<sockaddr*>(&ss), slen) != 0)
      throw Error(ErrorKind::NetworkError, std::string("bind: ") + std::strerror(errno));
    return s;
  }

  static UdpSocket connected(const std::string& ip, std::uint16_t port) {
    int family = 0;
    socklen_t slen = 0;
    sockaddr_storage ss = detail::make_sockaddr(ip, port, family, slen);
    UdpSocket s;
    s.fd_ = ::socket(family, SOCK_DGRAM | SOCK_NONBLOCK, 0);
    if (s.fd_ < 0) throw Error(ErrorKind::NetworkError, std::strerror(errno));
    if (::connect(s.fd_, reinterpret_cast<sockaddr*>(&ss), slen) != 0)
      throw Error(ErrorKind::NetworkError, std::string("connect: ") + std::strerror(errno));
    return s;
  }

  UdpSocket(UdpSocket&& o) noexcept : fd_(std::exchange(o.fd_, -1)), log_(o.log_) {}
  UdpSocket& operator=(UdpSocket&& o) noexcept {
    if (this != &o) {
      close_fd();
      fd_ = std::exchange(o.fd_, -1);
      log_ = o.log_;
    }
    return *this;
  }
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;
  ~UdpSocket() { close_fd(); }

  int fd() const { return fd_; }

  void attach_log(WireLog* log) {
    log_ = log;
    if (log_) {
      log_->local = local_endpoint();
      log_->peer = peer_endpoint();
      log_->is_tcp = false;
    }
  }

  Endpoint local_endpoint() const {
    sockaddr_storage ss{};
    socklen_t len = sizeof(ss);
    getsockname(fd_, reinterpret_cast<sockaddr*>(&ss), &len);
    return detail::endpoint_of(ss);
  }

  Endpoint peer_endpoint() const {
    sockaddr_storage ss{};
    socklen_t len = sizeof(ss);
    getpeername(fd_, reinterpret_cast<sockaddr*>(&ss), &len);
    return detail::endpoint_of(ss);
  }

  void send_datagram(const std::uint8_t* data, std::size_t len, const Deadline& deadline) {
    while (true) {
      ssize_t n = ::send(fd_, data, len, MSG_NOSIGNAL);
      if (n >= 0) {
        if (log_) log_->record(WireDir::Out, std::size_t(n));
        return;
      }
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        detail::wait_fd(fd_, POLLOUT, deadline, "send");
        continue;
      }
      throw Error(ErrorKind::NetworkError, std::string("send: ") + std::strerror(errno));
    }
  }

  std::vector<std::uint8_t> recv_datagram(const Deadline& deadline) {
    std::vector<std::uint8_t> buf(65536);
    while (true) {
      ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
      if (n >= 0) {
        if (log_) log_->record(WireDir::In, std::size_t(n));
        buf.resize(std::size_t(n));
        return buf;
      }
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        detail::wait_fd(fd_, POLLIN, deadline, "recv");
        continue;
      }
      throw Error(ErrorKind::NetworkError, std::string("recv: ") + std::strerror(errno));
    }
  }

private:
  void close_fd() {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  int fd_ = -1;
  WireLog* log_ = nullptr;
};

} // namespace dohscope::net
