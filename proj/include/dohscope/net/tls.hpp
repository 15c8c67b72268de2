#pragma once

// TLS client/server on OpenSSL memory BIOs. All record bytes pass through
// our own socket calls, so wire-byte accounting and trace synthesis see
// the handshake, application data, and close_notify alike.

#include <openssl/err.h>
#include <openssl/ssl.h>
#include <openssl/x509.h>
#include <openssl/x509v3.h>

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dohscope/errors.hpp"
#include "dohscope/net/socket.hpp"

namespace dohscope::net {

enum class TlsVersion : int {
  Any = 0,
  V1_0 = TLS1_VERSION,
  V1_1 = TLS1_1_VERSION,
  V1_2 = TLS1_2_VERSION,
  V1_3 = TLS1_3_VERSION,
};

inline const char* tls_version_label(TlsVersion v) {
  switch (v) {
    case TlsVersion::V1_0: return "TLSv1";
    case TlsVersion::V1_1: return "TLSv1.1";
    case TlsVersion::V1_2: return "TLSv1.2";
    case TlsVersion::V1_3: return "TLSv1.3";
    default: return "any";
  }
}

struct TlsClientConfig {
  std::string sni_host;                  // also used for verification when enabled
  std::vector<std::string> alpn;         // empty = no ALPN extension
  TlsVersion min_version = TlsVersion::V1_2;
  TlsVersion max_version = TlsVersion::Any;
  bool verify_peer = false;              // measurement tool: connect to anything by default
  std::string ca_file;                   // optional trust anchor override
  bool allow_legacy = false;             // drop to security level 0 for TLS < 1.2
};

struct TlsServerConfig {
  std::string cert_pem;                  // leaf (+ the caller appends any chain)
  std::string key_pem;
  std::string chain_pem;                 // optional intermediates
  std::vector<std::string> alpn_allowed; // empty = accept whatever / no ALPN
  TlsVersion min_version = TlsVersion::V1_2;
  TlsVersion max_version = TlsVersion::Any;
  bool allow_legacy = false;
};

namespace detail {

struct SslCtxDeleter {
  void operator()(SSL_CTX* p) const { SSL_CTX_free(p); }
};
struct SslDeleter {
  void operator()(SSL* p) const { SSL_free(p); }
};

inline std::string ssl_error_text(const char* prefix) {
  std::string out = prefix;
  unsigned long e;
  while ((e = ERR_get_error()) != 0) {
    char buf[256];
    ERR_error_string_n(e, buf, sizeof(buf));
    out += "; ";
    out += buf;
  }
  return out;
}

inline std::vector<std::uint8_t> alpn_wire(const std::vector<std::string>& protos) {
  std::vector<std::uint8_t> wire;
  for (const auto& p : protos) {
    wire.push_back(std::uint8_t(p.size()));
    wire.insert(wire.end(), p.begin(), p.end());
  }
  return wire;
}

// Server-side ALPN selection: first client protocol present in the allowed
// list wins; a client offering ALPN with no overlap is rejected with a
// fatal alert, as an h2-only deployment would.
inline int alpn_select_cb(SSL*, const unsigned char** out, unsigned char* outlen,
                          const unsigned char* in, unsigned int inlen, void* arg) {
  const auto* allowed = static_cast<const std::vector<std::string>*>(arg);
  unsigned int at = 0;
  while (at < inlen) {
    unsigned int len = in[at];
    if (at + 1 + len > inlen) break;
    std::string proto(reinterpret_cast<const char*>(in + at + 1), len);
    for (const auto& a : *allowed) {
      if (a == proto) {
        *out = in + at + 1;
        *outlen = (unsigned char)len;
        return SSL_TLSEXT_ERR_OK;
      }
    }
    at += 1 + len;
  }
  return SSL_TLSEXT_ERR_ALERT_FATAL;
}

} // namespace detail

// One established TLS session over a TcpSocket. Reads and writes move
// plaintext; the underlying socket (and its WireLog) sees TLS records.
class TlsConnection {
public:
  TlsConnection(TlsConnection&&) = default;
  TlsConnection& operator=(TlsConnection&&) = default;

  static TlsConnection connect(TcpSocket socket, const TlsClientConfig& cfg,
                               const Deadline& deadline) {
    std::unique_ptr<SSL_CTX, detail::SslCtxDeleter> ctx(SSL_CTX_new(TLS_client_method()));
    if (!ctx) throw Error(ErrorKind::TlsError, detail::ssl_error_text("SSL_CTX_new"));
    if (cfg.allow_legacy) {
      SSL_CTX_set_security_level(ctx.get(), 0);
      SSL_CTX_set_cipher_list(ctx.get(), "ALL:@SECLEVEL=0");
    }
    if (cfg.min_version != TlsVersion::Any &&
        SSL_CTX_set_min_proto_version(ctx.get(), int(cfg.min_version)) != 1)
      throw Error(ErrorKind::TlsError, "minimum TLS version not supported by this build");
    if (cfg.max_version != TlsVersion::Any &&
        SSL_CTX_set_max_proto_version(ctx.get(), int(cfg.max_version)) != 1)
      throw Error(ErrorKind::TlsError, "maximum TLS version not supported by this build");
    if (cfg.verify_peer) {
      SSL_CTX_set_verify(ctx.get(), SSL_VERIFY_PEER, nullptr);
      if (!cfg.ca_file.empty()) {
        if (SSL_CTX_load_verify_locations(ctx.get(), cfg.ca_file.c_str(), nullptr) != 1)
          throw Error(ErrorKind::TlsError, "cannot load CA file " + cfg.ca_file);
      } else {
        SSL_CTX_set_default_verify_paths(ctx.get());
      }
    }

    TlsConnection conn(std::move(socket), std::move(ctx), /*server=*/false);
    SSL* ssl = conn.ssl_.get();
    if (!cfg.sni_host.empty()) {
      SSL_set_tlsext_host_name(ssl, cfg.sni_host.c_str());
      if (cfg.verify_peer) SSL_set1_host(ssl, cfg.sni_host.c_str());
    }
    if (!cfg.alpn.empty()) {
      auto wire = detail::alpn_wire(cfg.alpn);
      SSL_set_alpn_protos(ssl, wire.data(), (unsigned)wire.size());
    }
    SSL_set_connect_state(ssl);
    conn.handshake(deadline);
    return conn;
  }

  static TlsConnection accept(TcpSocket socket, SSL_CTX* server_ctx, const Deadline& deadline) {
    TlsConnection conn(std::move(socket), nullptr, /*server=*/true, server_ctx);
    SSL_set_accept_state(conn.ssl_.get());
    conn.handshake(deadline);
    return conn;
  }

  // Plaintext write. Throws Timeout / NetworkError / TlsError.
  void write(const std::uint8_t* data, std::size_t len, const Deadline& deadline) {
    std::size_t at = 0;
    while (at < len) {
      std::size_t written = 0;
      int rc = SSL_write_ex(ssl_.get(), data + at, len - at, &written);
      if (rc == 1) {
        app_sent_ += written;
        at += written;
        flush_out(deadline);
        continue;
      }
      pump(rc, deadline, "TLS write");
    }
  }

  void write(const std::vector<std::uint8_t>& data, const Deadline& deadline) {
    write(data.data(), data.size(), deadline);
  }

  // Plaintext read of at least 1 byte; 0 means the peer closed cleanly.
  std::size_t read_some(std::uint8_t* buf, std::size_t cap, const Deadline& deadline) {
    while (true) {
      std::size_t got = 0;
      int rc = SSL_read_ex(ssl_.get(), buf, cap, &got);
      if (rc == 1) {
        app_received_ += got;
        return got;
      }
      int err = SSL_get_error(ssl_.get(), rc);
      if (err == SSL_ERROR_ZERO_RETURN) return 0;
      pump(rc, deadline, "TLS read");
    }
  }

  // Best-effort close_notify so byte accounting includes connection teardown.
  void shutdown(const Deadline& deadline) {
    if (!ssl_) return;
    int rc = SSL_shutdown(ssl_.get());
    try {
      flush_out(deadline);
      if (rc == 0) {
        SSL_shutdown(ssl_.get());
        flush_out(deadline);
      }
    } catch (const Error&) {
      // teardown is advisory
    }
  }

  std::string negotiated_version() const { return SSL_get_version(ssl_.get()); }

  std::string negotiated_alpn() const {
    const unsigned char* proto = nullptr;
    unsigned int len = 0;
    SSL_get0_alpn_selected(ssl_.get(), &proto, &len);
    return proto ? std::string(reinterpret_cast<const char*>(proto), len) : "";
  }

  // One-line RFC 2253 form of the peer leaf certificate's issuer.
  std::string peer_cert_issuer() const {
    X509* cert = SSL_get_peer_certificate(ssl_.get());
    if (!cert) return "";
    std::string out = name_oneline(X509_get_issuer_name(cert));
    X509_free(cert);
    return out;
  }

  // Issuer organizationName attributes (usually one).
  std::vector<std::string> peer_cert_issuer_organizations() const {
    std::vector<std::string> orgs;
    X509* cert = SSL_get_peer_certificate(ssl_.get());
    if (!cert) return orgs;
    X509_NAME* name = X509_get_issuer_name(cert);
    int idx = -1;
    while ((idx = X509_NAME_get_index_by_NID(name, NID_organizationName, idx)) >= 0) {
      X509_NAME_ENTRY* entry = X509_NAME_get_entry(name, idx);
      ASN1_STRING* v = X509_NAME_ENTRY_get_data(entry);
      unsigned char* utf8 = nullptr;
      int len = ASN1_STRING_to_UTF8(&utf8, v);
      if (len >= 0 && utf8) {
        orgs.emplace_back(reinterpret_cast<char*>(utf8), std::size_t(len));
        OPENSSL_free(utf8);
      }
    }
    X509_free(cert);
    return orgs;
  }

  std::uint64_t wire_bytes_sent() const { return wire_sent_; }
  std::uint64_t wire_bytes_received() const { return wire_received_; }
  std::uint64_t app_bytes_sent() const { return app_sent_; }
  std::uint64_t app_bytes_received() const { return app_received_; }

  TcpSocket& socket() { return sock_; }
  const TcpSocket& socket() const { return sock_; }

private:
  TlsConnection(TcpSocket sock, std::unique_ptr<SSL_CTX, detail::SslCtxDeleter> own_ctx,
                bool server, SSL_CTX* ext_ctx = nullptr)
      : sock_(std::move(sock)), ctx_(std::move(own_ctx)) {
    (void)server;
    SSL_CTX* ctx = ctx_ ? ctx_.get() : ext_ctx;
    ssl_.reset(SSL_new(ctx));
    if (!ssl_) throw Error(ErrorKind::TlsError, detail::ssl_error_text("SSL_new"));
    rbio_ = BIO_new(BIO_s_mem());
    wbio_ = BIO_new(BIO_s_mem());
    BIO_set_mem_eof_return(rbio_, -1);
    BIO_set_mem_eof_return(wbio_, -1);
    SSL_set_bio(ssl_.get(), rbio_, wbio_); // SSL owns the BIOs now
  }

  void handshake(const Deadline& deadline) {
    while (true) {
      int rc = SSL_do_handshake(ssl_.get());
      if (rc == 1) {
        flush_out(deadline);
        return;
      }
      pump(rc, deadline, "TLS handshake");
    }
  }

  void flush_out(const Deadline& deadline) {
    std::uint8_t buf[16384];
    int n;
    while ((n = BIO_read(wbio_, buf, sizeof(buf))) > 0) {
      sock_.send_all(buf, std::size_t(n), deadline);
      wire_sent_ += std::size_t(n);
    }
  }

  // Drives the handshake/IO state machine after a WANT_READ/WANT_WRITE.
  void pump(int rc, const Deadline& deadline, const char* what) {
    int err = SSL_get_error(ssl_.get(), rc);
    if (err == SSL_ERROR_WANT_WRITE || err == SSL_ERROR_WANT_READ) {
      flush_out(deadline);
      if (err == SSL_ERROR_WANT_READ) {
        std::uint8_t buf[16384];
        std::size_t n = sock_.recv_some(buf, sizeof(buf), deadline);
        if (n == 0)
          throw Error(ErrorKind::TlsError, std::string(what) + ": peer closed the connection");
        wire_received_ += n;
        BIO_write(rbio_, buf, int(n));
      }
      return;
    }
    if (err == SSL_ERROR_SSL || err == SSL_ERROR_SYSCALL) {
      // surface any alert we generated before reporting
      try {
        flush_out(deadline);
      } catch (const Error&) {
      }
      throw Error(ErrorKind::TlsError, detail::ssl_error_text(what));
    }
    throw Error(ErrorKind::TlsError, std::string(what) + ": unexpected SSL error state");
  }

  std::string name_oneline(X509_NAME* name) const {
    BIO* bio = BIO_new(BIO_s_mem());
    X509_NAME_print_ex(bio, name, 0, XN_FLAG_RFC2253);
    char* data = nullptr;
    long len = BIO_get_mem_data(bio, &data);
    std::string out(data, std::size_t(len));
    BIO_free(bio);
    return out;
  }

  TcpSocket sock_;
  std::unique_ptr<SSL_CTX, detail::SslCtxDeleter> ctx_;
  std::unique_ptr<SSL, detail::SslDeleter> ssl_;
  BIO* rbio_ = nullptr; // network -> SSL
  BIO* wbio_ = nullptr; // SSL -> network
  std::uint64_t wire_sent_ = 0;
  std::uint64_t wire_received_ = 0;
  std::uint64_t app_sent_ = 0;
  std::uint64_t app_received_ = 0;
};

// Server-side context shared across accepted connections.
class TlsServerContext {
public:
  explicit TlsServerContext(const TlsServerConfig& cfg)
      : alpn_allowed_(cfg.alpn_allowed), ctx_(SSL_CTX_new(TLS_server_method())) {
    if (!ctx_) throw Error(ErrorKind::TlsError, detail::ssl_error_text("SSL_CTX_new"));
    if (cfg.allow_legacy) {
      SSL_CTX_set_security_level(ctx_.get(), 0);
      SSL_CTX_set_cipher_list(ctx_.get(), "ALL:@SECLEVEL=0");
    }
    if (cfg.min_version != TlsVersion::Any)
      SSL_CTX_set_min_proto_version(ctx_.get(), int(cfg.min_version));
    if (cfg.max_version != TlsVersion::Any)
      SSL_CTX_set_max_proto_version(ctx_.get(), int(cfg.max_version));

    load_cert(cfg);
    if (!alpn_allowed_.empty())
      SSL_CTX_set_alpn_select_cb(ctx_.get(), detail::alpn_select_cb, &alpn_allowed_);
  }

  TlsConnection accept(TcpSocket socket, const Deadline& deadline) {
    return TlsConnection::accept(std::move(socket), ctx_.get(), deadline);
  }

  SSL_CTX* raw() const { return ctx_.get(); }

private:
  void load_cert(const TlsServerConfig& cfg) {
    BIO* cbio = BIO_new_mem_buf(cfg.cert_pem.data(), int(cfg.cert_pem.size()));
    X509* cert = PEM_read_bio_X509(cbio, nullptr, nullptr, nullptr);
    BIO_free(cbio);
    if (!cert) throw Error(ErrorKind::TlsError, "cannot parse server certificate PEM");
    SSL_CTX_use_certificate(ctx_.get(), cert);
    X509_free(cert);

    BIO* kbio = BIO_new_mem_buf(cfg.key_pem.data(), int(cfg.key_pem.size()));
    EVP_PKEY* key = PEM_read_bio_PrivateKey(kbio, nullptr, nullptr, nullptr);
    BIO_free(kbio);
    if (!key) throw Error(ErrorKind::TlsError, "cannot parse server key PEM");
    SSL_CTX_use_PrivateKey(ctx_.get(), key);
    EVP_PKEY_free(key);

    if (!cfg.chain_pem.empty()) {
      BIO* xbio = BIO_new_mem_buf(cfg.chain_pem.data(), int(cfg.chain_pem.size()));
      X509* extra;
      while ((extra = PEM_read_bio_X509(xbio, nullptr, nullptr, nullptr)) != nullptr)
        SSL_CTX_add_extra_chain_cert(ctx_.get(), extra); // ownership moves to ctx
      BIO_free(xbio);
      ERR_clear_error();
    }
    if (SSL_CTX_check_private_key(ctx_.get()) != 1)
      throw Error(ErrorKind::TlsError, "server certificate and key do not match");
  }

  std::vector<std::string> alpn_allowed_;
  std::unique_ptr<SSL_CTX, detail::SslCtxDeleter> ctx_;
};

} // namespace dohscope::net
