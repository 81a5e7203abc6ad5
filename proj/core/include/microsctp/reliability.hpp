#pragma once

// TSN bookkeeping for both directions of an association: the retransmit queue
// and receiver-window gate on the send side, duplicate detection and SACK
// construction on the receive side.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <set>
#include <vector>

#include "microsctp/serial.hpp"
#include "microsctp/types.hpp"
#include "microsctp/wire.hpp"

namespace microsctp {

struct ReliabilityConfig {
  Millis rto_initial{1000};
  Millis rto_min{200};
  Millis rto_max{60'000};
  int max_retransmits = 8;
  int fast_retransmit_threshold = 3;
  std::size_t max_gap_blocks = 128;
  std::size_t max_duplicates_reported = 32;
  std::uint32_t max_tsn_window = 1u << 22;

  bool operator==(const ReliabilityConfig&) const = default;
};

struct OutboundEntry {
  wire::DataChunk chunk;
  int send_count = 0;  // 0: assigned a TSN but held back by the peer's window
  Millis last_sent_at{0};
  std::optional<Address> dest;
  bool gap_acked = false;
  int miss_indications = 0;
  bool fast_retransmitted = false;
  bool marked = false;  // awaiting retransmission after a timeout; `dest` is where it goes

  bool operator==(const OutboundEntry&) const = default;
};

enum class RtoCommand { Keep, Start, Stop };

struct AssignResult {
  std::vector<wire::DataChunk> sendable;
  std::size_t deferred = 0;
  RtoCommand rto = RtoCommand::Keep;
};

struct SackResult {
  bool stale = false;
  bool cum_advanced = false;
  std::size_t newly_acked = 0;
  std::vector<wire::DataChunk> released;          // window opened for held-back chunks
  std::vector<wire::DataChunk> fast_retransmits;  // reported missing by enough SACKs
  std::vector<std::pair<Address, wire::DataChunk>> retransmits;  // marked by an earlier timeout
  RtoCommand rto = RtoCommand::Keep;
};

struct RtoResult {
  std::vector<wire::DataChunk> retransmit;
  bool abort = false;  // earliest chunk exhausted max_retransmits
  RtoCommand rto = RtoCommand::Keep;
};

class ReliabilityState {
 public:
  ReliabilityState() = default;
  ReliabilityState(std::uint32_t local_initial_tsn, std::uint32_t peer_initial_tsn, std::uint32_t peer_rwnd,
                   ReliabilityConfig config = {});

  // ---- send side ----

  /// Assigns consecutive TSNs. Chunks that fit the peer's window are returned
  /// for sending, in order; the rest wait in the queue until the window opens.
  AssignResult assign_and_queue(std::vector<wire::DataChunk> chunks, const Address& dest, Millis now);

  /// `dest` is where released or fast-retransmitted chunks will be sent.
  SackResult on_sack(const wire::SackChunk& sack, const Address& dest, Millis now);

  /// Marks every outstanding chunk for retransmission to `dest` and resends
  /// the earliest ones that fit `packet_budget` bytes. The rest follow as
  /// soon as a SACK shows the peer is reachable again.
  RtoResult on_rto_expiry(const Address& dest, Millis now, std::size_t packet_budget);

  // ---- receive side ----

  /// Returns false for duplicates, which are remembered for the next SACK.
  bool on_inbound_tsn(std::uint32_t tsn);
  wire::SackChunk build_sack(std::uint32_t a_rwnd_local);

  // ---- observers ----

  std::uint32_t next_tsn() const { return next_tsn_; }
  std::uint32_t cumulative_ack_received() const { return cum_ack_received_; }
  const std::deque<OutboundEntry>& retransmit_queue() const { return queue_; }
  bool queue_empty() const { return queue_.empty(); }
  std::size_t in_flight_bytes() const { return in_flight_bytes_; }
  std::size_t deferred_bytes() const { return deferred_bytes_; }
  std::uint32_t peer_rwnd() const { return peer_rwnd_; }
  Millis rto() const { return rto_; }
  bool rto_running() const { return rto_running_; }
  bool sack_pending() const { return sack_pending_; }
  std::uint32_t received_cumulative() const { return recv_cum_; }
  const std::set<std::uint32_t, SerialLess>& received_out_of_order() const { return recv_ooo_; }
  const ReliabilityConfig& config() const { return config_; }
  std::uint64_t total_retransmissions() const { return retransmissions_; }

  void note_rto_stopped() { rto_running_ = false; }
  /// Start if chunks are outstanding and no timer runs.
  RtoCommand resume_rto() { return !rto_running_ && !queue_.empty() ? apply(RtoCommand::Start) : RtoCommand::Keep; }

  bool operator==(const ReliabilityState&) const = default;

 private:
  bool fits_window(std::size_t bytes) const {
    return in_flight_bytes_ + bytes <= peer_rwnd_;
  }
  void mark_sent(OutboundEntry& e, const Address& dest, Millis now);
  std::vector<wire::DataChunk> release_deferred(const Address& dest, Millis now);
  RtoCommand apply(RtoCommand c);

  ReliabilityConfig config_;

  std::uint32_t next_tsn_ = 0;
  std::uint32_t cum_ack_received_ = 0;
  std::deque<OutboundEntry> queue_;  // TSNs cum_ack_received_+1 .. next_tsn_-1, in order
  std::size_t in_flight_bytes_ = 0;
  std::size_t deferred_bytes_ = 0;
  std::size_t deferred_count_ = 0;  // held-back entries, always the queue's tail
  std::size_t marked_count_ = 0;
  std::uint32_t peer_rwnd_ = 0;
  Millis rto_{1000};
  bool rto_running_ = false;
  std::uint64_t retransmissions_ = 0;

  std::uint32_t recv_cum_ = 0;
  std::set<std::uint32_t, SerialLess> recv_ooo_;
  std::vector<std::uint32_t> duplicates_;
  bool sack_pending_ = false;
};

}  // namespace microsctp
