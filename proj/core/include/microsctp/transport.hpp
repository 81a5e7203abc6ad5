#pragma once

// Packet carriers. An endpoint only ever sees this interface, which is also
// its sole source of time and randomness.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "microsctp/types.hpp"

namespace microsctp {

class Clock {
 public:
  using TimerHandle = std::uint64_t;

  virtual ~Clock() = default;

  virtual Millis now() const = 0;
  virtual TimerHandle schedule(Millis delay, std::function<void()> callback) = 0;
  /// Cancelling a fired or unknown handle is a no-op.
  virtual void cancel(TimerHandle handle) = 0;

  /// Returns once `pred` holds (true) or `timeout` elapses (false). A real
  /// clock sleeps until notify(); a virtual clock runs the simulation forward.
  /// `pred` is called without any clock lock held.
  virtual bool wait_until(const std::function<bool()>& pred, std::optional<Millis> timeout = std::nullopt) = 0;
  /// Wakes wait_until callers to re-check their predicates.
  virtual void notify() = 0;
};

/// (datagram, source address, local address it arrived on)
using ReceiveCallback =
    std::function<void(std::span<const std::uint8_t> data, const Address& src, const Address& dst)>;

class Transport {
 public:
  virtual ~Transport() = default;

  /// Sends one datagram; delivery is whole or not at all. Without `source`
  /// the transport picks one of its local addresses.
  virtual void send_datagram(std::span<const std::uint8_t> data, const Address& dest,
                             std::optional<Address> source = std::nullopt) = 0;
  /// Replaces the receiver. It runs on the transport's delivery context.
  virtual void register_receiver(ReceiveCallback callback) = 0;
  virtual std::vector<Address> local_addresses() const = 0;
  virtual Clock& clock() = 0;
  /// Seed material for tags, TSNs and cookie secrets.
  virtual std::uint64_t random_seed() = 0;
  /// Fills `out` from a cryptographic source. Returns false when there is
  /// none, and the endpoint derives its cookie key from random_seed().
  virtual bool fill_key(std::span<std::uint8_t> out) {
    (void)out;
    return false;
  }
};

/// `fallback` unless MICROSCTP_SEED holds an unsigned integer.
std::uint64_t seed_from_env(std::uint64_t fallback);

}  // namespace microsctp
