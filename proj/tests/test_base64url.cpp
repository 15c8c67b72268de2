#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "dohscope/base64url.hpp"
#include "dohscope/dns_codec.hpp"

using namespace dohscope;

TEST_CASE("base64url empty input is identity") {
  CHECK(base64url_encode_nopad(nullptr, 0) == "");
  CHECK(base64url_decode_nopad("").empty());
}

TEST_CASE("base64url known vectors, unpadded") {
  // RFC 4648 test vectors with padding stripped and url-safe alphabet.
  auto enc = [](std::string_view s) {
    return base64url_encode_nopad(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  };
  CHECK(enc("f") == "Zg");
  CHECK(enc("fo") == "Zm8");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foob") == "Zm9vYg");
  CHECK(enc("fooba") == "Zm9vYmE");
  CHECK(enc("foobar") == "Zm9vYmFy");
  // bytes that exercise the url-safe alphabet positions 62/63
  std::vector<std::uint8_t> tricky = {0xfb, 0xff, 0xbf};
  CHECK(base64url_encode_nopad(tricky) == "-_-_");
}

TEST_CASE("base64url roundtrips random input") {
  std::mt19937 rng(77);
  std::uniform_int_distribution<int> byte(0, 255);
  for (std::size_t len = 0; len <= 40; len++) {
    std::vector<std::uint8_t> data(len);
    for (auto& b : data) b = std::uint8_t(byte(rng));
    auto text = base64url_encode_nopad(data);
    CHECK(text.find('=') == std::string::npos);
    CHECK(base64url_decode_nopad(text) == data);
  }
}

TEST_CASE("base64url rejects bad input") {
  auto kind_of = [](const char* s) {
    try {
      base64url_decode_nopad(s);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::None;
  };
  CHECK(kind_of("abc=") == ErrorKind::InvalidBase64);   // padding not allowed
  CHECK(kind_of("a+b/") == ErrorKind::InvalidBase64);   // wrong alphabet
  CHECK(kind_of("abcde") == ErrorKind::InvalidBase64);  // length residue 1
  CHECK(kind_of("a b") == ErrorKind::InvalidBase64);
}

TEST_CASE("encoded query bytes survive the dns= parameter roundtrip") {
  auto wire = dns::encode_message(dns::make_query("www.example.com", dns::kTypeA, 0));
  auto text = base64url_encode_nopad(wire);
  CHECK(text.find('=') == std::string::npos);
  auto back = base64url_decode_nopad(text);
  CHECK(back == wire);
  CHECK(dns::decode_message(back) == dns::make_query("www.example.com", dns::kTypeA, 0));
}
