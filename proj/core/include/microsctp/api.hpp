#pragma once

// Socket-style surface. An Endpoint (one-to-many) accepts any number of
// peers; a Connection (one-to-one) talks to exactly one. Both are cheap
// handles onto shared state and may be used from several threads.

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "microsctp/association.hpp"
#include "microsctp/options.hpp"
#include "microsctp/transport.hpp"

namespace microsctp {

enum class EndpointMode { OneToMany, OneToOne };

/// Knobs below the socket API; defaults match the protocol modules.
struct Tuning {
  std::size_t mtu = kDefaultMtu;
  std::size_t receive_buffer = kReassemblyCap;
  std::size_t send_buffer = 4 * 1024 * 1024;  // per association, before send() blocks
  ReliabilityConfig reliability;
  Millis heartbeat_interval = kDefaultHeartbeatInterval;
  int path_failure_threshold = kDefaultPathFailureThreshold;
  Millis shutdown_guard{5000};
  Millis cookie_max_age = kDefaultCookieMaxAge;
};

struct Message {
  Bytes payload;
  ReceiveInfo info;

  std::string text() const { return {payload.begin(), payload.end()}; }
  bool operator==(const Message&) const = default;
};

struct Notification {
  enum class Kind { Established, Closed, PathFailover, PartialMessage };
  Kind kind = Kind::Established;
  AssocId aid = 0;
  std::optional<CloseReason> reason;  // Closed
  Address from, to;                   // PathFailover
  std::uint16_t sid = 0;              // PartialMessage
};

struct EndpointStats {
  std::uint64_t packets_received = 0;
  std::uint64_t packets_sent = 0;
  std::uint64_t decode_errors = 0;     // bad checksum, truncated, malformed
  std::uint64_t bad_tag = 0;           // wrong verification tag from a known peer
  std::uint64_t out_of_the_blue = 0;   // no association and not a handshake chunk
  std::uint64_t init_acks_sent = 0;
  std::uint64_t cookies_rejected = 0;
  std::uint64_t inits_rejected = 0;    // one-to-one endpoint already in use
  std::uint64_t associations_created = 0;
  std::uint64_t messages_delivered = 0;
  std::uint64_t failovers = 0;
  std::uint64_t send_errors = 0;       // transport refused a datagram
};

class EndpointCore;

/// Called for each delivered message on the transport's delivery context,
/// with no endpoint lock held. Replaces queueing for recv.
using MessageHandler = std::function<void(const Message&)>;

class Endpoint {
 public:
  /// Use listen(); the core type is internal.
  explicit Endpoint(std::shared_ptr<EndpointCore> core) : core_(std::move(core)) {}

  const std::vector<Address>& local_addresses() const;
  EndpointMode mode() const;

  /// Queues one message. On a one-to-many endpoint `dest` selects the
  /// association, creating one if none reaches that address. Blocks while the
  /// association's send buffer is full and, for a new association, until it is
  /// established. Throws Error{EmptyMessage, MessageTooBig, InvalidStream,
  /// NotConnected, Timeout, Refused, InvalidArgument}.
  void send(std::span<const std::uint8_t> payload, SendInfo info = {},
            std::optional<Address> dest = std::nullopt);
  void send(const std::string& payload, SendInfo info = {}, std::optional<Address> dest = std::nullopt);
  /// As send, but never blocks: throws Error{WouldBlock} if the buffer is full.
  /// A new association is still set up in the background.
  void try_send(std::span<const std::uint8_t> payload, SendInfo info = {},
                std::optional<Address> dest = std::nullopt);
  /// Queues regardless of buffer occupancy; safe inside a MessageHandler.
  void send_async(std::span<const std::uint8_t> payload, SendInfo info = {},
                  std::optional<Address> dest = std::nullopt);

  /// Next delivered message. Throws Error{Closed} once the endpoint is closed
  /// (or a one-to-one association ends) with nothing left to read, and
  /// Error{WouldBlock} when non-blocking and nothing is pending.
  Message recv_message(bool blocking = true);
  /// Blocking receive bounded by `timeout`; nullopt on expiry.
  std::optional<Message> recv_for(Millis timeout);

  void set_message_handler(MessageHandler handler);

  /// Graceful shutdown of every association, then waits for CLOSED.
  /// Idempotent.
  void close();
  /// ABORT every association immediately.
  void abort();

  /// Live (not CLOSED) associations.
  std::size_t association_count() const;
  std::vector<AssocId> associations() const;
  std::optional<AssocState> state(AssocId aid) const;
  std::optional<std::uint16_t> outbound_streams(AssocId aid) const;
  std::optional<std::uint16_t> inbound_streams(AssocId aid) const;
  std::optional<CloseReason> close_reason(AssocId aid) const;
  std::optional<AssocStats> association_stats(AssocId aid) const;
  EndpointStats stats() const;
  std::vector<Notification> take_notifications();

  Transport& transport() const;

 protected:
  std::shared_ptr<EndpointCore> core_;
};

/// One-to-one handle produced by dial().
class Connection : public Endpoint {
 public:
  using Endpoint::Endpoint;

  AssocId aid() const;
  AssocState state() const;
  std::uint16_t outbound_streams() const;
  std::uint16_t inbound_streams() const;
  std::optional<CloseReason> close_reason() const;
  AssocStats association_stats() const;

  /// Waits for ESTABLISHED. Throws Error{Timeout} when the handshake gave up
  /// (or `timeout` elapsed), Error{Refused} on ABORT, Error{Closed} otherwise.
  void wait_established(std::optional<Millis> timeout = std::nullopt);
};

/// One-to-many endpoint on `local_addrs` (default: every transport address).
/// Throws Error{BindFailure} if an address is not owned by the transport.
Endpoint listen(std::shared_ptr<Transport> transport, InitOptions options = {}, std::vector<Address> local_addrs = {},
                Tuning tuning = {});

/// One-to-one connection. Sends the INIT immediately and returns; the first
/// send waits for the handshake.
Connection dial(std::shared_ptr<Transport> transport, std::vector<Address> remote_addrs, InitOptions options = {},
                std::vector<Address> local_addrs = {}, Tuning tuning = {});

}  // namespace microsctp
