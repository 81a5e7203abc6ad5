#pragma once

// SCTP over UDP: each packet is exactly one UDP payload, no extra framing.
// One I/O thread polls every bound socket and runs the timers.

#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "microsctp/transport.hpp"

namespace microsctp {

inline constexpr std::size_t kMaxUdpPayload = 65507;
inline constexpr std::uint16_t kDefaultUdpPort = 9899;

class RealClock final : public Clock {
 public:
  RealClock();
  Millis now() const override;
  TimerHandle schedule(Millis delay, std::function<void()> callback) override;
  void cancel(TimerHandle handle) override;
  bool wait_until(const std::function<bool()>& pred, std::optional<Millis> timeout = std::nullopt) override;
  void notify() override;

  /// Runs due callbacks; returns the delay until the next one, if any.
  std::optional<Millis> run_due();
  /// Called whenever the earliest deadline may have moved earlier.
  void set_wakeup(std::function<void()> wake) { wake_ = std::move(wake); }

 private:
  using Steady = std::chrono::steady_clock;
  Steady::time_point epoch_;

  std::mutex timer_mu_;
  std::uint64_t next_handle_ = 1;
  std::map<std::pair<Steady::time_point, TimerHandle>, std::function<void()>> timers_;
  std::map<TimerHandle, Steady::time_point> deadlines_;
  std::function<void()> wake_;

  std::mutex wait_mu_;
  std::condition_variable wait_cv_;
  std::uint64_t generation_ = 0;
};

class UdpTransport final : public Transport {
 public:
  struct Options {
    int socket_buffer_bytes = 8 * 1024 * 1024;
  };

  /// Binds one socket per address. Port 0 on the first address picks an
  /// ephemeral port, which later port-0 addresses then share. Throws
  /// Error{BindFailure} if any bind fails.
  static std::shared_ptr<UdpTransport> bind(const std::vector<Address>& addrs);
  static std::shared_ptr<UdpTransport> bind(const std::vector<Address>& addrs, Options options);
  ~UdpTransport() override;

  UdpTransport(const UdpTransport&) = delete;
  UdpTransport& operator=(const UdpTransport&) = delete;

  /// Throws Error{DatagramTooLarge} above kMaxUdpPayload. Datagrams the
  /// kernel refuses (full buffers) are dropped and counted.
  void send_datagram(std::span<const std::uint8_t> data, const Address& dest,
                     std::optional<Address> source = std::nullopt) override;
  void register_receiver(ReceiveCallback callback) override;
  std::vector<Address> local_addresses() const override;
  Clock& clock() override;
  std::uint64_t random_seed() override;
  bool fill_key(std::span<std::uint8_t> out) override;

  std::uint64_t datagrams_sent() const;
  std::uint64_t datagrams_received() const;
  std::uint64_t send_drops() const;

 private:
  // Everything the I/O thread touches. Shared with the thread so the
  // transport may be destroyed from inside one of its own callbacks.
  struct Core;

  explicit UdpTransport(std::shared_ptr<Core> core);

  std::shared_ptr<Core> core_;
  std::thread io_;
};

}  // namespace microsctp
