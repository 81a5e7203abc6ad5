#pragma once

// State cookie: everything a listener needs to create an association,
// authenticated with HMAC-SHA-256 so the listener can stay stateless until the
// peer echoes it back.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "microsctp/types.hpp"
#include "microsctp/wire.hpp"

namespace microsctp {

using CookieKey = std::array<std::uint8_t, 32>;

inline constexpr std::size_t kCookieMacSize = 32;
inline constexpr std::size_t kMaxCookieSize = 512;
inline constexpr std::size_t kMaxCookieAddresses = 16;
inline constexpr Millis kDefaultCookieMaxAge{60'000};

struct StreamLimits {
  std::uint16_t outbound = 10;
  std::uint16_t max_inbound = 10;
};

struct StateCookie {
  std::uint32_t peer_initiate_tag = 0;
  std::uint32_t local_tag = 0;
  Address peer_addr;
  std::uint16_t negotiated_outbound_streams = 0;
  std::uint16_t negotiated_inbound_streams = 0;
  std::uint32_t peer_initial_tsn = 0;
  std::uint32_t local_initial_tsn = 0;
  std::uint32_t peer_a_rwnd = 0;
  std::vector<std::uint32_t> peer_addresses;  // IPv4 addresses advertised in the INIT
  Millis issued_at{0};
  std::array<std::uint8_t, kCookieMacSize> mac{};

  bool operator==(const StateCookie&) const = default;
};

/// Negotiated (outbound, inbound) stream counts for an INIT against local limits.
StreamLimits negotiate_streams(const wire::InitBody& peer, StreamLimits local) noexcept;

/// Deterministic in its inputs. The result is at most kMaxCookieSize bytes.
Bytes make_cookie(const CookieKey& secret, const wire::InitBody& init, const Address& peer_addr,
                  std::uint32_t local_tag, std::uint32_t local_initial_tsn, StreamLimits local,
                  Millis now);

/// Throws Error{BadMac} for forged or corrupted blobs, Error{AddrMismatch} when
/// echoed from an address other than the INIT's source, Error{StaleCookie}
/// when older than `max_age`.
StateCookie verify_cookie(const CookieKey& secret, std::span<const std::uint8_t> blob,
                          const Address& peer_addr, Millis now, Millis max_age = kDefaultCookieMaxAge);

}  // namespace microsctp
