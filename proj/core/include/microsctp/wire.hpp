#pragma once

// On-the-wire layout of packets and chunks.
//
// Packet:  src_port:16 dst_port:16 verification_tag:32 checksum:32  chunk...
// Chunk:   type:8 flags:8 length:16 body... (zero padded to a multiple of 4)
//
// All integers are big-endian. The checksum is CRC-32C over the whole packet
// with the checksum field zeroed.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "microsctp/types.hpp"

namespace microsctp::wire {

/// CRC-32C (Castagnoli, reflected, init and final xor 0xFFFFFFFF).
std::uint32_t crc32c(std::span<const std::uint8_t> data) noexcept;

enum class ChunkType : std::uint8_t {
  Data = 0,
  Init = 1,
  InitAck = 2,
  Sack = 3,
  Heartbeat = 4,
  HeartbeatAck = 5,
  Abort = 6,
  Shutdown = 7,
  ShutdownAck = 8,
  CookieEcho = 10,
  CookieAck = 11,
  ShutdownComplete = 14,
};

const char* to_string(ChunkType t) noexcept;

inline constexpr std::size_t kCommonHeaderSize = 12;
inline constexpr std::size_t kChunkHeaderSize = 4;
inline constexpr std::size_t kDataChunkHeaderSize = 16;
inline constexpr std::size_t kMaxChunkLength = 65535;

inline constexpr std::uint16_t kParamIpv4Address = 5;
inline constexpr std::uint16_t kParamStateCookie = 7;

inline constexpr std::uint8_t kFlagDataEnd = 0x01;
inline constexpr std::uint8_t kFlagDataBegin = 0x02;
inline constexpr std::uint8_t kFlagTagReflected = 0x01;

struct CommonHeader {
  std::uint16_t src_port = 0;
  std::uint16_t dst_port = 0;
  std::uint32_t verification_tag = 0;
  std::uint32_t checksum = 0;  // filled by encode_packet, verified by decode_packet

  bool operator==(const CommonHeader&) const = default;
};

struct DataChunk {
  std::uint32_t tsn = 0;
  std::uint16_t sid = 0;
  std::uint16_t ssn = 0;
  std::uint32_t ppid = 0;
  bool beginning = true;  // B flag
  bool ending = true;     // E flag
  Bytes payload;

  bool operator==(const DataChunk&) const = default;
};

struct Parameter {
  std::uint16_t type = 0;
  Bytes value;

  bool operator==(const Parameter&) const = default;
};

/// Body shared by INIT and INIT-ACK.
struct InitBody {
  std::uint32_t initiate_tag = 0;
  std::uint32_t a_rwnd = 0;
  std::uint16_t outbound_streams = 1;
  std::uint16_t max_inbound_streams = 1;
  std::uint32_t initial_tsn = 0;
  std::vector<Parameter> params;

  const Bytes* cookie() const;
  std::vector<std::uint32_t> ipv4_addresses() const;
  void add_ipv4_address(std::uint32_t ip);

  bool operator==(const InitBody&) const = default;
};

struct InitChunk : InitBody {
  bool operator==(const InitChunk&) const = default;
};

struct InitAckChunk : InitBody {
  bool operator==(const InitAckChunk&) const = default;
};

struct GapBlock {
  std::uint16_t start = 1;  // offsets relative to cumulative_tsn_ack
  std::uint16_t end = 1;

  bool operator==(const GapBlock&) const = default;
};

struct SackChunk {
  std::uint32_t cumulative_tsn_ack = 0;
  std::uint32_t a_rwnd = 0;
  std::vector<GapBlock> gaps;
  std::vector<std::uint32_t> duplicates;

  bool operator==(const SackChunk&) const = default;
};

struct HeartbeatInfo {
  std::uint64_t nonce = 0;
  std::uint64_t sent_at_ms = 0;

  bool operator==(const HeartbeatInfo&) const = default;
};

struct HeartbeatChunk {
  HeartbeatInfo info;
  bool operator==(const HeartbeatChunk&) const = default;
};

struct HeartbeatAckChunk {
  HeartbeatInfo info;
  bool operator==(const HeartbeatAckChunk&) const = default;
};

struct AbortChunk {
  bool tag_reflected = false;  // T flag: verification tag is the receiver's peer tag
  bool operator==(const AbortChunk&) const = default;
};

struct ShutdownChunk {
  std::uint32_t cumulative_tsn_ack = 0;
  bool operator==(const ShutdownChunk&) const = default;
};

struct ShutdownAckChunk {
  bool operator==(const ShutdownAckChunk&) const = default;
};

struct CookieEchoChunk {
  Bytes cookie;
  bool operator==(const CookieEchoChunk&) const = default;
};

struct CookieAckChunk {
  bool operator==(const CookieAckChunk&) const = default;
};

struct ShutdownCompleteChunk {
  bool tag_reflected = false;
  bool operator==(const ShutdownCompleteChunk&) const = default;
};

/// Chunk of a type this implementation does not know; kept verbatim.
struct UnknownChunk {
  std::uint8_t type = 0;
  std::uint8_t flags = 0;
  Bytes body;

  bool operator==(const UnknownChunk&) const = default;
};

using Chunk = std::variant<DataChunk, InitChunk, InitAckChunk, SackChunk, HeartbeatChunk,
                           HeartbeatAckChunk, AbortChunk, ShutdownChunk, ShutdownAckChunk,
                           CookieEchoChunk, CookieAckChunk, ShutdownCompleteChunk, UnknownChunk>;

/// Type byte of a chunk (for UnknownChunk, the preserved raw type).
std::uint8_t chunk_type_byte(const Chunk& c) noexcept;
std::optional<ChunkType> chunk_type(const Chunk& c) noexcept;
/// Human-readable chunk name ("DATA", "INIT_ACK", "UNKNOWN(99)").
std::string chunk_name(const Chunk& c);

/// Serialized size of the chunk including trailing padding.
std::size_t encoded_size(const Chunk& c);

struct Packet {
  CommonHeader header;
  std::vector<Chunk> chunks;

  bool operator==(const Packet&) const = default;
};

/// Throws Error{EmptyPacket} or Error{ChunkTooLarge}. The checksum field of
/// `header` is ignored and recomputed.
Bytes encode_packet(const CommonHeader& header, std::span<const Chunk> chunks);
inline Bytes encode_packet(const Packet& p) { return encode_packet(p.header, p.chunks); }

/// Total over arbitrary input. Throws Error{Truncated, BadChecksum, BadLength,
/// Malformed}; never reads outside `data`.
Packet decode_packet(std::span<const std::uint8_t> data);

}  // namespace microsctp::wire
