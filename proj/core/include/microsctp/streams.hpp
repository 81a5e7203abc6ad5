#pragma once

// Stream layer: splits user messages into DATA fragments on the way out and
// reassembles and orders them per stream on the way in. Streams never wait on
// each other; a gap on one stream only holds back that stream.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "microsctp/serial.hpp"
#include "microsctp/types.hpp"
#include "microsctp/wire.hpp"

namespace microsctp {

inline constexpr std::size_t kDefaultMtu = 1232;
/// Common header, DATA chunk header and room for a bundled SACK.
inline constexpr std::size_t kPacketOverhead = 48;
inline constexpr std::size_t kReassemblyCap = 2 * 1024 * 1024;

constexpr std::size_t max_data_payload(std::size_t mtu) noexcept { return mtu - kPacketOverhead; }

struct OutStream {
  std::uint16_t sid = 0;
  std::uint16_t next_ssn = 0;

  bool operator==(const OutStream&) const = default;
};

/// Splits `msg` into ceil(size / max_payload) TSN-less DATA chunks sharing one
/// SSN taken from `out`. Throws Error{EmptyMessage} for an empty message.
std::vector<wire::DataChunk> fragment_message(std::span<const std::uint8_t> msg, std::uint16_t sid,
                                              std::uint32_t ppid, OutStream& out, std::size_t max_payload);

struct StreamMessage {
  Bytes payload;
  std::uint16_t sid = 0;
  std::uint16_t ssn = 0;
  std::uint32_t ppid = 0;

  bool operator==(const StreamMessage&) const = default;
};

struct InStream {
  std::uint16_t sid = 0;
  std::uint16_t next_expected_ssn = 0;
  std::map<std::uint16_t, StreamMessage> pending;                 // complete, waiting for order
  std::map<std::uint32_t, wire::DataChunk, SerialLess> fragments;  // incomplete, keyed by TSN

  bool operator==(const InStream&) const = default;
};

struct InboundResult {
  std::vector<StreamMessage> deliverable;
  std::optional<std::uint16_t> partial_notify;  // a message's first fragment arrived, rest pending
  bool unknown_stream = false;
  bool over_capacity = false;  // reassembly cap exceeded; the association must abort
};

class InboundStreams {
 public:
  InboundStreams() = default;
  explicit InboundStreams(std::uint16_t count, std::size_t reassembly_cap = kReassemblyCap,
                          std::uint16_t initial_ssn = 0);

  /// The chunk's TSN must already have passed duplicate detection.
  InboundResult on_data_chunk(const wire::DataChunk& chunk);

  std::uint16_t count() const { return static_cast<std::uint16_t>(streams_.size()); }
  const InStream& stream(std::uint16_t sid) const { return streams_.at(sid); }

  std::size_t reassembly_bytes() const { return reassembly_bytes_; }
  std::size_t pending_bytes() const { return pending_bytes_; }
  std::size_t buffered_bytes() const { return reassembly_bytes_ + pending_bytes_; }
  std::uint64_t unknown_stream_drops() const { return unknown_stream_drops_; }

  bool operator==(const InboundStreams&) const = default;

 private:
  // Moves a complete B..E run containing `tsn` out of the fragment buffer.
  std::optional<StreamMessage> try_reassemble(InStream& s, std::uint32_t tsn);
  void drain_in_order(InStream& s, std::vector<StreamMessage>& out);

  std::vector<InStream> streams_;
  std::size_t reassembly_cap_ = kReassemblyCap;
  std::size_t reassembly_bytes_ = 0;
  std::size_t pending_bytes_ = 0;
  std::uint64_t unknown_stream_drops_ = 0;
};

}  // namespace microsctp
