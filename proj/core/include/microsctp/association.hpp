#pragma once

// The association state machine. It performs no I/O: every input is an Event,
// every effect an Action for the owning endpoint to carry out. Time and
// randomness come in from outside (the `now` argument and a seed), so handling
// the same event on equal associations yields equal results.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "microsctp/cookie.hpp"
#include "microsctp/error.hpp"
#include "microsctp/options.hpp"
#include "microsctp/paths.hpp"
#include "microsctp/reliability.hpp"
#include "microsctp/streams.hpp"
#include "microsctp/types.hpp"
#include "microsctp/wire.hpp"

namespace microsctp {

enum class AssocState {
  Closed,
  CookieWait,
  CookieEchoed,
  Established,
  ShutdownPending,
  ShutdownSent,
  ShutdownReceived,
  ShutdownAckSent,
};

const char* to_string(AssocState s) noexcept;

enum class TimerKind { InitRetransmit, CookieRetransmit, Rto, Heartbeat, ShutdownGuard, BundleFlush };

const char* to_string(TimerKind k) noexcept;

struct TimerId {
  TimerKind kind = TimerKind::Rto;
  std::uint16_t path = 0;  // only meaningful for Heartbeat

  auto operator<=>(const TimerId&) const = default;
};

enum class CloseReason {
  Graceful,
  PeerAbort,          // ABORT received after establishment
  Refused,            // ABORT received during the handshake
  LocalAbort,         // the application aborted
  Timeout,            // INIT or COOKIE-ECHO attempts exhausted
  RetransmitLimit,    // one DATA chunk hit max_retransmits
  ProtocolViolation,  // chunk the state chart forbids
  ResourceLimit,      // reassembly buffer cap exceeded
  GuardExpired,       // shutdown did not complete in time
};

const char* to_string(CloseReason r) noexcept;

struct AssocConfig {
  InitOptions options;
  std::vector<Address> local_addrs;  // advertised to the peer; port is the SCTP port
  CookieKey secret{};
  Millis cookie_max_age = kDefaultCookieMaxAge;
  std::size_t mtu = kDefaultMtu;
  std::size_t receive_buffer = kReassemblyCap;  // basis of the advertised window
  std::size_t reassembly_cap = kReassemblyCap;
  ReliabilityConfig reliability;
  Millis heartbeat_interval = kDefaultHeartbeatInterval;
  int path_failure_threshold = kDefaultPathFailureThreshold;
  Millis shutdown_guard{5000};

  std::uint16_t local_port() const { return local_addrs.empty() ? 0 : local_addrs.front().port; }

  bool operator==(const AssocConfig&) const = default;
};

// ---- events ----

namespace ev {
struct InboundChunk {
  wire::Chunk chunk;
  Address src;
};
/// A whole packet that passed tag checks. SACKs owed for its DATA go out once
/// after the last chunk. `dst` is the local address it arrived on.
struct InboundPacket {
  std::vector<wire::Chunk> chunks;
  Address src;
  std::optional<Address> dst;
};
struct AppSend {
  Bytes message;
  SendInfo info;
};
struct AppClose {};
/// Immediate teardown: ABORT to the peer, no draining.
struct AppAbort {};
/// The application read `bytes` of delivered payload.
struct AppConsumed {
  std::size_t bytes = 0;
};
struct TimerFired {
  TimerId id;
};
struct PathDown {
  Address addr;
};
struct PathUp {
  Address addr;
};
}  // namespace ev

using Event = std::variant<ev::InboundChunk, ev::InboundPacket, ev::AppSend, ev::AppClose, ev::AppAbort,
                           ev::AppConsumed, ev::TimerFired, ev::PathDown, ev::PathUp>;

// ---- actions ----

namespace act {
struct SendPacket {
  std::uint32_t verification_tag = 0;
  std::vector<wire::Chunk> chunks;
  Address dest;
  std::optional<Address> source;  // local address to send from, if it matters

  bool operator==(const SendPacket&) const = default;
};
struct DeliverMessage {
  Bytes payload;
  ReceiveInfo info;
  bool operator==(const DeliverMessage&) const = default;
};
struct StartTimer {
  TimerId id;
  Millis delay{0};
  bool operator==(const StartTimer&) const = default;
};
struct StopTimer {
  TimerId id;
  bool operator==(const StopTimer&) const = default;
};
struct NotifyEstablished {
  AssocId aid = 0;
  bool operator==(const NotifyEstablished&) const = default;
};
struct NotifyClosed {
  AssocId aid = 0;
  CloseReason reason = CloseReason::Graceful;
  bool operator==(const NotifyClosed&) const = default;
};
struct NotifyPathFailover {
  AssocId aid = 0;
  Address from;
  Address to;
  bool operator==(const NotifyPathFailover&) const = default;
};
struct NotifyPartialMessage {
  AssocId aid = 0;
  std::uint16_t sid = 0;
  bool operator==(const NotifyPartialMessage&) const = default;
};
}  // namespace act

using Action = std::variant<act::SendPacket, act::DeliverMessage, act::StartTimer, act::StopTimer,
                            act::NotifyEstablished, act::NotifyClosed, act::NotifyPathFailover,
                            act::NotifyPartialMessage>;
using Actions = std::vector<Action>;

struct AssocStats {
  std::uint64_t data_discarded = 0;       // DATA in a state that does not accept it
  std::uint64_t duplicates_received = 0;  // DATA whose TSN was already seen
  std::uint64_t unknown_stream_drops = 0;
  std::uint64_t violations = 0;
  std::uint64_t packets_sent = 0;
  std::uint64_t data_chunks_sent = 0;
  std::uint64_t sends_dropped = 0;  // queued before the handshake on a stream the peer refused
  std::uint64_t failovers = 0;

  bool operator==(const AssocStats&) const = default;
};

class Association {
 public:
  /// Starts the active side: COOKIE_WAIT with an INIT on its way to
  /// `remote.front()`. Throws Error{InvalidArgument} if `remote` is empty.
  static std::pair<Association, Actions> initiate(AssocId aid, AssocConfig config, std::vector<Address> remote,
                                                  std::uint64_t seed, Millis now);

  /// Creates the passive side from a verified cookie: ESTABLISHED, COOKIE-ACK
  /// on its way to `src`, which must be the address the cookie was echoed from.
  static std::pair<Association, Actions> from_cookie(AssocId aid, AssocConfig config, const StateCookie& cookie,
                                                     const Address& src, std::uint64_t seed, Millis now);

  /// Processes one event. Application events are validated first and throw
  /// Error{NotConnected, InvalidStream, EmptyMessage, MessageTooBig} without
  /// changing any state; protocol input never throws.
  Actions handle(const Event& event, Millis now);

  AssocId aid() const { return aid_; }
  AssocState state() const { return state_; }
  bool established() const;
  bool closed() const { return state_ == AssocState::Closed; }
  std::optional<CloseReason> close_reason() const { return close_reason_; }

  std::uint32_t local_tag() const { return local_tag_; }
  std::uint32_t peer_tag() const { return peer_tag_; }
  std::uint16_t outbound_streams() const { return static_cast<std::uint16_t>(out_streams_.size()); }
  std::uint16_t inbound_streams() const { return in_streams_.count(); }

  const AssocConfig& config() const { return config_; }
  const ReliabilityState& reliability() const { return rel_; }
  const InboundStreams& inbound() const { return in_streams_; }
  const PathTable& paths() const { return paths_; }
  const std::set<TimerId>& armed_timers() const { return armed_; }
  const AssocStats& stats() const { return stats_; }

  /// True if `addr` is one of the peer's known destination addresses.
  bool has_peer_address(const Address& addr) const { return paths_.find(addr).has_value(); }

  /// Bytes accepted from the application and not yet acknowledged by the peer.
  std::size_t send_buffered_bytes() const;
  /// The receive window this association would advertise right now.
  std::uint32_t local_window() const;

  bool operator==(const Association&) const = default;

 private:
  struct QueuedMessage {
    Bytes payload;
    SendInfo info;
    bool operator==(const QueuedMessage&) const = default;
  };

  // Outgoing chunks gathered while handling one event, packed at the end.
  struct Outgoing {
    Address dest;
    std::optional<Address> source;
    wire::Chunk chunk;
    bool operator==(const Outgoing&) const = default;
  };

  Association() = default;

  bool accepts_data() const;

  void on_chunk(const wire::Chunk& chunk, const Address& src, Actions& out, Millis now);
  void on_init(const wire::InitChunk& init, const Address& src, Millis now);
  void on_init_ack(const wire::InitAckChunk& ack, const Address& src, Actions& out, Millis now);
  void on_cookie_echo(const wire::CookieEchoChunk& echo, const Address& src, Actions& out, Millis now);
  void on_data(const wire::DataChunk& data, const Address& src, Actions& out);
  void on_sack(const wire::SackChunk& sack, const Address& src, Actions& out, Millis now);
  void on_shutdown(const wire::ShutdownChunk& shutdown, const Address& src, Actions& out, Millis now);
  void on_timer(TimerId id, Actions& out, Millis now);
  void on_app_send(const ev::AppSend& send, Actions& out, Millis now);
  void on_app_close(Actions& out, Millis now);

  void adopt_peer(std::uint32_t peer_tag, std::uint16_t out_streams, std::uint16_t in_streams,
                  std::uint32_t peer_initial_tsn, std::uint32_t peer_rwnd, const Address& src,
                  const std::vector<std::uint32_t>& advertised);
  void enter_established(Actions& out, Millis now);
  void begin_shutdown(Actions& out, Millis now);
  void progress_shutdown(Actions& out, Millis now);
  void violation(const Address& src, Actions& out);
  void abort_with(CloseReason reason, Actions& out);
  void close_with(CloseReason reason, Actions& out);

  void queue_fragments(const QueuedMessage& m);
  void flush_send_buffer(Actions& out, Millis now, std::size_t byte_budget = SIZE_MAX);
  void apply_rto(RtoCommand c, Actions& out);
  void queue_data(const std::vector<wire::DataChunk>& chunks, const Address& dest);
  void queue_control(wire::Chunk chunk, const Address& dest);
  void queue_sack(const Address& dest, const std::optional<Address>& source);
  void emit_packets(Actions& out);
  wire::InitChunk make_init() const;
  std::size_t cookie_echo_room() const;

  void start_timer(TimerId id, Millis delay, Actions& out);
  void stop_timer(TimerId id, Actions& out);

  AssocId aid_ = 0;
  AssocConfig config_;
  AssocState state_ = AssocState::Closed;
  std::optional<CloseReason> close_reason_;
  std::mt19937_64 rng_;

  std::uint32_t local_tag_ = 0;
  std::uint32_t peer_tag_ = 0;
  std::uint32_t local_initial_tsn_ = 0;

  std::vector<OutStream> out_streams_;
  InboundStreams in_streams_;
  ReliabilityState rel_;
  PathTable paths_;

  // Handshake bookkeeping.
  Bytes cookie_;
  int handshake_attempts_ = 0;
  Millis handshake_timeout_{0};
  bool close_requested_ = false;
  std::deque<QueuedMessage> pre_handshake_;

  // Messages fragmented but not yet given TSNs (bundling, handshake).
  std::deque<wire::DataChunk> send_buffer_;
  std::size_t send_buffer_bytes_ = 0;

  std::size_t unread_bytes_ = 0;           // delivered, not yet consumed by the app
  std::uint32_t last_advertised_rwnd_ = 0;
  std::optional<Address> last_local_;      // local address the peer last reached us on
  Millis shutdown_rto_{0};

  std::vector<Outgoing> outgoing_;
  std::vector<act::SendPacket> collision_replies_;  // INIT-ACKs carry the peer's INIT tag, not peer_tag_
  std::set<TimerId> armed_;
  AssocStats stats_;
};

/// Pure form of Association::handle.
std::pair<Association, Actions> transition(Association assoc, const Event& event, Millis now);

// ---- stateless listener side ----

/// INIT-ACK answering `init` from `src`, carrying a fresh cookie. Allocates no
/// association state.
wire::InitAckChunk make_init_ack(const AssocConfig& config, const wire::InitBody& init, const Address& src,
                                 std::uint32_t local_tag, std::uint32_t local_initial_tsn, Millis now);

/// Reply to an INIT received outside any association: one SendPacket with the
/// INIT-ACK. Tag and initial TSN are drawn from `rng`.
Actions responder_on_init(const AssocConfig& config, const wire::InitBody& init, const Address& src, Millis now,
                          std::mt19937_64& rng);

struct CookieEchoOutcome {
  std::optional<Association> assoc;  // engaged iff the cookie verified
  Actions actions;
  std::optional<Errc> rejected;      // BadMac, StaleCookie or AddrMismatch
};

/// Creates an association from a COOKIE-ECHO received outside any association.
/// `vtag` is the packet's verification tag, which must match the cookie.
CookieEchoOutcome responder_on_cookie_echo(AssocId aid, const AssocConfig& config, std::span<const std::uint8_t> blob,
                                           std::uint32_t vtag, const Address& src, std::uint64_t seed, Millis now);

/// Draws a nonzero 32-bit tag.
std::uint32_t draw_tag(std::mt19937_64& rng);

}  // namespace microsctp
