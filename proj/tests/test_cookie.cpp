#include <gtest/gtest.h>

#include <openssl/sha.h>

#include <random>

#include "gen.hpp"
#include "microsctp/cookie.hpp"
#include "microsctp/error.hpp"

namespace microsctp {
namespace {

const CookieKey kKey = [] {
  CookieKey k{};
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<std::uint8_t>(i * 7 + 1);
  return k;
}();
const Address kPeer = Address::parse("192.0.2.7:4000");

wire::InitBody sample_init() {
  wire::InitBody b;
  b.initiate_tag = 0xCAFEBABE;
  b.a_rwnd = 65536;
  b.outbound_streams = 4;
  b.max_inbound_streams = 20;
  b.initial_tsn = 1000;
  b.add_ipv4_address(Address::parse("192.0.2.7").ip);
  b.add_ipv4_address(Address::parse("198.51.100.7").ip);
  return b;
}

Errc verify_error(std::span<const std::uint8_t> blob, const Address& from, Millis now, const CookieKey& key = kKey) {
  try {
    verify_cookie(key, blob, from, now);
  } catch (const Error& e) {
    return e.errc();
  }
  ADD_FAILURE() << "cookie verified";
  return Errc{};
}

// HMAC-SHA-256 from its definition over the raw hash.
std::array<std::uint8_t, 32> reference_hmac(const CookieKey& key, std::span<const std::uint8_t> msg) {
  std::array<std::uint8_t, 64> ipad{}, opad{};
  for (std::size_t i = 0; i < 64; ++i) {
    const std::uint8_t k = i < key.size() ? key[i] : 0;
    ipad[i] = k ^ 0x36;
    opad[i] = k ^ 0x5c;
  }
  Bytes inner(ipad.begin(), ipad.end());
  inner.insert(inner.end(), msg.begin(), msg.end());
  std::array<std::uint8_t, 32> ih{};
  SHA256(inner.data(), inner.size(), ih.data());
  Bytes outer(opad.begin(), opad.end());
  outer.insert(outer.end(), ih.begin(), ih.end());
  std::array<std::uint8_t, 32> out{};
  SHA256(outer.data(), outer.size(), out.data());
  return out;
}

TEST(Cookie, VerifiesAndCarriesHandshakeState) {
  const auto init = sample_init();
  const Bytes blob = make_cookie(kKey, init, kPeer, 0x1234, 77, {10, 10}, Millis{500});
  EXPECT_LE(blob.size(), kMaxCookieSize);
  const StateCookie c = verify_cookie(kKey, blob, kPeer, Millis{1500});
  EXPECT_EQ(c.peer_initiate_tag, 0xCAFEBABEu);
  EXPECT_EQ(c.local_tag, 0x1234u);
  EXPECT_EQ(c.peer_addr, kPeer);
  EXPECT_EQ(c.negotiated_outbound_streams, 10);  // min(10, peer max_in 20)
  EXPECT_EQ(c.negotiated_inbound_streams, 4);    // min(10, peer out 4)
  EXPECT_EQ(c.peer_initial_tsn, 1000u);
  EXPECT_EQ(c.local_initial_tsn, 77u);
  EXPECT_EQ(c.peer_a_rwnd, 65536u);
  EXPECT_EQ(c.peer_addresses, init.ipv4_addresses());
  EXPECT_EQ(c.issued_at, Millis{500});
}

TEST(Cookie, MacIsHmacSha256OverBody) {
  const Bytes blob = make_cookie(kKey, sample_init(), kPeer, 1, 2, {10, 10}, Millis{0});
  const auto body = std::span(blob).first(blob.size() - kCookieMacSize);
  const auto expected = reference_hmac(kKey, body);
  EXPECT_TRUE(std::equal(expected.begin(), expected.end(), blob.end() - kCookieMacSize));
}

TEST(Cookie, Deterministic) {
  EXPECT_EQ(make_cookie(kKey, sample_init(), kPeer, 5, 6, {3, 3}, Millis{9}),
            make_cookie(kKey, sample_init(), kPeer, 5, 6, {3, 3}, Millis{9}));
}

TEST(Cookie, ReplayedCookieVerifiesRepeatedly) {
  const Bytes blob = make_cookie(kKey, sample_init(), kPeer, 5, 6, {3, 3}, Millis{0});
  for (int i = 0; i < 3; ++i) EXPECT_NO_THROW(verify_cookie(kKey, blob, kPeer, Millis{i * 1000}));
}

TEST(Cookie, TamperedByteRejected) {
  const Bytes blob = make_cookie(kKey, sample_init(), kPeer, 5, 6, {3, 3}, Millis{0});
  for (std::size_t i = 0; i < blob.size(); ++i) {
    Bytes t = blob;
    t[i] ^= 0x01;
    EXPECT_EQ(verify_error(t, kPeer, Millis{0}), Errc::BadMac) << "byte " << i;
  }
}

TEST(Cookie, WrongKeyRejected) {
  const Bytes blob = make_cookie(kKey, sample_init(), kPeer, 5, 6, {3, 3}, Millis{0});
  CookieKey other = kKey;
  other[0] ^= 0xFF;
  EXPECT_EQ(verify_error(blob, kPeer, Millis{0}, other), Errc::BadMac);
}

TEST(Cookie, RandomBlobsRejected) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 2000; ++i) {
    const Bytes b = gen::bytes(rng, 0, 600);
    EXPECT_EQ(verify_error(b, kPeer, Millis{0}), Errc::BadMac);
  }
}

TEST(Cookie, AddressMismatch) {
  const Bytes blob = make_cookie(kKey, sample_init(), kPeer, 5, 6, {3, 3}, Millis{0});
  EXPECT_EQ(verify_error(blob, kPeer.with_port(4001), Millis{0}), Errc::AddrMismatch);
  EXPECT_EQ(verify_error(blob, Address::parse("192.0.2.8:4000"), Millis{0}), Errc::AddrMismatch);
}

TEST(Cookie, Staleness) {
  const Bytes blob = make_cookie(kKey, sample_init(), kPeer, 5, 6, {3, 3}, Millis{1000});
  EXPECT_NO_THROW(verify_cookie(kKey, blob, kPeer, Millis{1000} + kDefaultCookieMaxAge));
  EXPECT_EQ(verify_error(blob, kPeer, Millis{1001} + kDefaultCookieMaxAge), Errc::StaleCookie);
  EXPECT_NO_THROW(verify_cookie(kKey, blob, kPeer, Millis{1100}, Millis{100}));
  EXPECT_THROW(verify_cookie(kKey, blob, kPeer, Millis{1101}, Millis{100}), Error);
}

TEST(Cookie, AddressListCapped) {
  auto init = sample_init();
  for (std::uint32_t i = 0; i < 40; ++i) init.add_ipv4_address(0x0A000000u + i);
  const Bytes blob = make_cookie(kKey, init, kPeer, 5, 6, {3, 3}, Millis{0});
  EXPECT_LE(blob.size(), kMaxCookieSize);
  EXPECT_EQ(verify_cookie(kKey, blob, kPeer, Millis{0}).peer_addresses.size(), kMaxCookieAddresses);
}

TEST(Negotiate, MinOfEachDirection) {
  wire::InitBody peer;
  peer.outbound_streams = 3;
  peer.max_inbound_streams = 100;
  auto n = negotiate_streams(peer, {10, 10});
  EXPECT_EQ(n.outbound, 10);
  EXPECT_EQ(n.max_inbound, 3);
  peer.outbound_streams = 500;
  peer.max_inbound_streams = 1;
  n = negotiate_streams(peer, {10, 10});
  EXPECT_EQ(n.outbound, 1);
  EXPECT_EQ(n.max_inbound, 10);
}

}  // namespace
}  // namespace microsctp
