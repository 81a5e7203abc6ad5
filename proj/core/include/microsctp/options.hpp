#pragma once

#include <cstdint>

#include "microsctp/types.hpp"

namespace microsctp {

/// Association initialization parameters.
struct InitOptions {
  std::uint16_t num_out_streams = 10;
  std::uint16_t max_in_streams = 10;
  int max_init_attempts = 8;
  Millis init_timeout{1000};
  /// When false, small messages sent back to back may share a packet.
  bool no_delay = true;

  /// Throws Error{InvalidArgument} on zero stream counts, attempts < 1 or a
  /// non-positive timeout.
  void validate() const;

  bool operator==(const InitOptions&) const = default;
};

/// Per-message ancillary data supplied by the sender.
struct SendInfo {
  std::uint16_t sid = 0;
  std::uint32_t ppid = 0;

  bool operator==(const SendInfo&) const = default;
};

/// Per-message ancillary data returned with every delivered message.
struct ReceiveInfo {
  std::uint16_t sid = 0;
  std::uint16_t ssn = 0;
  std::uint32_t ppid = 0;
  AssocId aid = 0;
  Address src;

  bool operator==(const ReceiveInfo&) const = default;
};

}  // namespace microsctp
