#pragma once

// Destination addresses of a multihomed peer. Heartbeats probe each path;
// a path that misses enough of them in a row is taken out of selection until
// it answers again. The primary designation itself never moves.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "microsctp/types.hpp"
#include "microsctp/wire.hpp"

namespace microsctp {

inline constexpr Millis kDefaultHeartbeatInterval{2000};
inline constexpr int kDefaultPathFailureThreshold = 5;

enum class PathStatus { Active, Inactive };

struct Path {
  Address addr;
  PathStatus status = PathStatus::Active;
  int consecutive_failures = 0;
  bool hb_outstanding = false;
  std::uint64_t hb_nonce = 0;

  bool operator==(const Path&) const = default;
};

struct Failover {
  Address from;
  Address to;
};

struct HeartbeatTick {
  Address dest;
  wire::HeartbeatChunk heartbeat;
  std::optional<Failover> failover;
  bool became_inactive = false;
};

class PathTable {
 public:
  PathTable() = default;
  explicit PathTable(std::vector<Address> addrs, std::size_t primary = 0,
                     int failure_threshold = kDefaultPathFailureThreshold);

  /// Adds a destination unless already known; returns its index.
  std::size_t add(const Address& addr);

  /// Primary if active, else the first active path, else the primary.
  std::size_t select_index() const;
  const Address& select_path() const { return paths_.at(select_index()).addr; }

  /// An active path other than `avoid` for retransmissions, in selection
  /// order; select_path() when there is none.
  const Address& alternate(const Address& avoid) const;

  /// Heartbeat timer for one path. `nonce` must be fresh randomness.
  HeartbeatTick on_heartbeat_timer(std::size_t index, std::uint64_t nonce, Millis now);

  /// Returns the index of the path whose outstanding nonce matched, if any.
  std::optional<std::size_t> on_heartbeat_ack(const wire::HeartbeatInfo& info);

  /// Any acknowledgement arriving from `addr` proves the path is alive.
  void on_ack_from(const Address& addr);

  /// A retransmission timeout on data sent to `addr` counts as one failure.
  std::optional<Failover> on_retransmit_timeout(const Address& addr);

  /// External signals, e.g. interface state. Down reports a selection change.
  std::optional<Failover> mark_down(const Address& addr);
  void mark_up(const Address& addr);

  std::optional<std::size_t> find(const Address& addr) const;
  std::size_t size() const { return paths_.size(); }
  const Path& path(std::size_t i) const { return paths_.at(i); }
  const std::vector<Path>& paths() const { return paths_; }
  std::size_t primary() const { return primary_; }
  int failure_threshold() const { return failure_threshold_; }

  bool operator==(const PathTable&) const = default;

 private:
  void reset(Path& p);
  // Bumps the failure count; returns the selection change if the path went down.
  std::optional<Failover> count_failure(std::size_t index, bool& became_inactive);

  std::vector<Path> paths_;
  std::size_t primary_ = 0;
  int failure_threshold_ = kDefaultPathFailureThreshold;
};

}  // namespace microsctp
