#include "microsctp/cookie.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>

#include "microsctp/error.hpp"

namespace microsctp {

namespace {

// Fixed part of the serialized body, before the address list and the MAC.
constexpr std::size_t kFixedBodySize = 4 + 4 + 4 + 2 + 2 + 2 + 4 + 4 + 4 + 8 + 1;

void put16(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

void put32(Bytes& b, std::uint32_t v) {
  put16(b, static_cast<std::uint16_t>(v >> 16));
  put16(b, static_cast<std::uint16_t>(v));
}

std::uint16_t get16(std::span<const std::uint8_t> d, std::size_t& at) {
  auto v = static_cast<std::uint16_t>((d[at] << 8) | d[at + 1]);
  at += 2;
  return v;
}

std::uint32_t get32(std::span<const std::uint8_t> d, std::size_t& at) {
  std::uint32_t hi = get16(d, at);
  return (hi << 16) | get16(d, at);
}

std::array<std::uint8_t, kCookieMacSize> hmac(const CookieKey& key, std::span<const std::uint8_t> body) {
  std::array<std::uint8_t, kCookieMacSize> out{};
  unsigned int len = 0;
  HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), body.data(), body.size(), out.data(), &len);
  return out;
}

}  // namespace

StreamLimits negotiate_streams(const wire::InitBody& peer, StreamLimits local) noexcept {
  return {std::min(local.outbound, peer.max_inbound_streams),
          std::min(local.max_inbound, peer.outbound_streams)};
}

Bytes make_cookie(const CookieKey& secret, const wire::InitBody& init, const Address& peer_addr,
                  std::uint32_t local_tag, std::uint32_t local_initial_tsn, StreamLimits local,
                  Millis now) {
  auto negotiated = negotiate_streams(init, local);
  auto addrs = init.ipv4_addresses();
  if (addrs.size() > kMaxCookieAddresses) addrs.resize(kMaxCookieAddresses);

  Bytes blob;
  blob.reserve(kFixedBodySize + 4 * addrs.size() + kCookieMacSize);
  put32(blob, init.initiate_tag);
  put32(blob, local_tag);
  put32(blob, peer_addr.ip);
  put16(blob, peer_addr.port);
  put16(blob, negotiated.outbound);
  put16(blob, negotiated.max_inbound);
  put32(blob, init.initial_tsn);
  put32(blob, local_initial_tsn);
  put32(blob, init.a_rwnd);
  auto issued = static_cast<std::uint64_t>(now.count());
  put32(blob, static_cast<std::uint32_t>(issued >> 32));
  put32(blob, static_cast<std::uint32_t>(issued));
  blob.push_back(static_cast<std::uint8_t>(addrs.size()));
  for (auto a : addrs) put32(blob, a);

  auto mac = hmac(secret, blob);
  blob.insert(blob.end(), mac.begin(), mac.end());
  return blob;
}

StateCookie verify_cookie(const CookieKey& secret, std::span<const std::uint8_t> blob,
                          const Address& peer_addr, Millis now, Millis max_age) {
  if (blob.size() < kFixedBodySize + kCookieMacSize || blob.size() > kMaxCookieSize) {
    throw Error(Errc::BadMac, "cookie size out of range");
  }
  auto body = blob.first(blob.size() - kCookieMacSize);
  auto expected = hmac(secret, body);
  if (CRYPTO_memcmp(expected.data(), blob.data() + body.size(), kCookieMacSize) != 0) {
    throw Error(Errc::BadMac);
  }

  StateCookie c;
  std::size_t at = 0;
  c.peer_initiate_tag = get32(body, at);
  c.local_tag = get32(body, at);
  c.peer_addr.ip = get32(body, at);
  c.peer_addr.port = get16(body, at);
  c.negotiated_outbound_streams = get16(body, at);
  c.negotiated_inbound_streams = get16(body, at);
  c.peer_initial_tsn = get32(body, at);
  c.local_initial_tsn = get32(body, at);
  c.peer_a_rwnd = get32(body, at);
  std::uint64_t issued = static_cast<std::uint64_t>(get32(body, at)) << 32;
  issued |= get32(body, at);
  c.issued_at = Millis{static_cast<std::int64_t>(issued)};
  std::size_t naddrs = body[at++];
  // Authentic cookies are always well formed; this guards a leaked key only.
  if (body.size() != kFixedBodySize + 4 * naddrs) throw Error(Errc::BadMac, "cookie layout");
  for (std::size_t i = 0; i < naddrs; ++i) c.peer_addresses.push_back(get32(body, at));
  std::copy(blob.end() - kCookieMacSize, blob.end(), c.mac.begin());

  if (c.peer_addr != peer_addr) throw Error(Errc::AddrMismatch, "cookie echoed from " + peer_addr.to_string());
  if (now - c.issued_at > max_age) throw Error(Errc::StaleCookie);
  return c;
}

}  // namespace microsctp
