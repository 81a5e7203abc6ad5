#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace microsctp {

using Bytes = std::vector<std::uint8_t>;

/// All protocol time is expressed in milliseconds since the owning clock's epoch.
using Millis = std::chrono::milliseconds;

/// Endpoint-local association identifier, assigned monotonically from 1.
using AssocId = std::uint32_t;

/// IPv4 address plus port. The port doubles as the SCTP port of the endpoint
/// that owns the address.
struct Address {
  std::uint32_t ip = 0;
  std::uint16_t port = 0;

  constexpr Address() = default;
  constexpr Address(std::uint32_t ip_host_order, std::uint16_t p) : ip(ip_host_order), port(p) {}

  /// Parses "a.b.c.d:port" or "a.b.c.d" (port then defaults to `default_port`).
  /// Throws Error{InvalidArgument} on malformed text.
  static Address parse(std::string_view text, std::uint16_t default_port = 0);

  std::string to_string() const;
  bool unspecified() const { return ip == 0; }

  Address with_port(std::uint16_t p) const { return {ip, p}; }

  auto operator<=>(const Address&) const = default;
};

std::vector<Address> parse_address_list(std::string_view csv, std::uint16_t default_port = 0);

struct AddressHash {
  std::size_t operator()(const Address& a) const noexcept {
    return std::hash<std::uint64_t>{}((static_cast<std::uint64_t>(a.ip) << 16) | a.port);
  }
};

}  // namespace microsctp
