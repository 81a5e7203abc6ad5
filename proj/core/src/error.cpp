#include "microsctp/error.hpp"

namespace microsctp {

const char* to_string(Errc e) noexcept {
  switch (e) {
    case Errc::Truncated: return "Truncated";
    case Errc::BadChecksum: return "BadChecksum";
    case Errc::BadLength: return "BadLength";
    case Errc::Malformed: return "Malformed";
    case Errc::ChunkTooLarge: return "ChunkTooLarge";
    case Errc::EmptyPacket: return "EmptyPacket";
    case Errc::BadMac: return "BadMac";
    case Errc::StaleCookie: return "StaleCookie";
    case Errc::AddrMismatch: return "AddrMismatch";
    case Errc::EmptyMessage: return "EmptyMessage";
    case Errc::UnknownStream: return "UnknownStream";
    case Errc::InvalidStream: return "InvalidStream";
    case Errc::NotConnected: return "NotConnected";
    case Errc::MessageTooBig: return "MessageTooBig";
    case Errc::Timeout: return "Timeout";
    case Errc::Refused: return "Refused";
    case Errc::Closed: return "Closed";
    case Errc::WouldBlock: return "WouldBlock";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ProtocolViolation: return "ProtocolViolation";
    case Errc::BindFailure: return "BindFailure";
    case Errc::UnknownAddress: return "UnknownAddress";
    case Errc::DatagramTooLarge: return "DatagramTooLarge";
    case Errc::SendFailed: return "SendFailed";
  }
  return "Unknown";
}

namespace {

class Category final : public std::error_category {
 public:
  const char* name() const noexcept override { return "microsctp"; }
  std::string message(int ev) const override { return to_string(static_cast<Errc>(ev)); }
};

}  // namespace

const std::error_category& error_category() noexcept {
  static const Category instance;
  return instance;
}

}  // namespace microsctp
