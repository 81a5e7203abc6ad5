#pragma once

#include <cstdint>

namespace microsctp {

// Serial-number comparison for wrapping TSN (32-bit) and SSN (16-bit) spaces.

constexpr bool serial_lt(std::uint32_t a, std::uint32_t b) noexcept {
  return a != b && static_cast<std::int32_t>(a - b) < 0;
}
constexpr bool serial_le(std::uint32_t a, std::uint32_t b) noexcept { return a == b || serial_lt(a, b); }

constexpr bool serial_lt16(std::uint16_t a, std::uint16_t b) noexcept {
  return a != b && static_cast<std::int16_t>(static_cast<std::uint16_t>(a - b)) < 0;
}

/// Strict weak ordering over any set of TSNs spanning less than 2^31.
struct SerialLess {
  constexpr bool operator()(std::uint32_t a, std::uint32_t b) const noexcept { return serial_lt(a, b); }
};

}  // namespace microsctp
