#pragma once

#include <stdexcept>
#include <string>
#include <system_error>

namespace microsctp {

enum class Errc {
  // wire
  Truncated = 1,
  BadChecksum,
  BadLength,
  Malformed,
  ChunkTooLarge,
  EmptyPacket,
  // cookie
  BadMac,
  StaleCookie,
  AddrMismatch,
  // streams / api
  EmptyMessage,
  UnknownStream,
  InvalidStream,
  NotConnected,
  MessageTooBig,
  Timeout,
  Refused,
  Closed,
  WouldBlock,
  InvalidArgument,
  ProtocolViolation,
  // transport
  BindFailure,
  UnknownAddress,
  DatagramTooLarge,
  SendFailed,
};

const std::error_category& error_category() noexcept;

inline std::error_code make_error_code(Errc e) noexcept {
  return {static_cast<int>(e), error_category()};
}

const char* to_string(Errc e) noexcept;

/// Every failure raised by the library carries one of the Errc codes.
class Error : public std::system_error {
 public:
  explicit Error(Errc code) : std::system_error(make_error_code(code)), errc_(code) {}
  Error(Errc code, const std::string& detail)
      : std::system_error(make_error_code(code), detail), errc_(code) {}

  Errc errc() const noexcept { return errc_; }

 private:
  Errc errc_;
};

}  // namespace microsctp

template <>
struct std::is_error_code_enum<microsctp::Errc> : std::true_type {};
