#pragma once

#include <stdexcept>
#include <string>

namespace dohscope {

// Error kinds shared across the toolkit. Network-level failures are carried
// as data inside outcome records; these enumerate the structured reasons.
enum class ErrorKind {
  None,
  InvalidDomain,
  EncodingOverflow,
  Truncated,
  MalformedName,
  CountMismatch,
  InvalidBase64,
  InvalidMessage,
  Timeout,
  NetworkError,
  MalformedResponse,
  IdMismatch,
  HttpError,
  UnsupportedContentType,
  TlsError,
  JsonParseError,
  UnsupportedLinkType,
  CorruptCapture,
  EmptyIndex,
  EmptyGroup,
  SingleClassInput,
  ConfigError,
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::None: return "none";
    case ErrorKind::InvalidDomain: return "invalid_domain";
    case ErrorKind::EncodingOverflow: return "encoding_overflow";
    case ErrorKind::Truncated: return "truncated";
    case ErrorKind::MalformedName: return "malformed_name";
    case ErrorKind::CountMismatch: return "count_mismatch";
    case ErrorKind::InvalidBase64: return "invalid_base64";
    case ErrorKind::InvalidMessage: return "invalid_message";
    case ErrorKind::Timeout: return "timeout";
    case ErrorKind::NetworkError: return "network_error";
    case ErrorKind::MalformedResponse: return "malformed_response";
    case ErrorKind::IdMismatch: return "id_mismatch";
    case ErrorKind::HttpError: return "http_error";
    case ErrorKind::UnsupportedContentType: return "unsupported_content_type";
    case ErrorKind::TlsError: return "tls_error";
    case ErrorKind::JsonParseError: return "json_parse_error";
    case ErrorKind::UnsupportedLinkType: return "unsupported_link_type";
    case ErrorKind::CorruptCapture: return "corrupt_capture";
    case ErrorKind::EmptyIndex: return "empty_index";
    case ErrorKind::EmptyGroup: return "empty_group";
    case ErrorKind::SingleClassInput: return "single_class_input";
    case ErrorKind::ConfigError: return "config_error";
  }
  return "unknown";
}

// Exception thrown by pure in-memory operations (codec, analyzers).
// I/O paths report failures as data instead of throwing.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

} // namespace dohscope
