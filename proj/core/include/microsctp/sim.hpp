#pragma once

// Deterministic in-process network. A single virtual clock orders packet
// deliveries and timers by (time, insertion order); every random decision
// comes from a per-link generator seeded from the link's configuration.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "microsctp/transport.hpp"
#include "microsctp/types.hpp"

namespace microsctp {

struct SimLinkConfig {
  double loss_rate = 0.0;
  Millis delay{10};
  Millis jitter{0};
  double reorder_rate = 0.0;
  std::uint64_t seed = 1;
  bool up = true;

  bool operator==(const SimLinkConfig&) const = default;
};

struct LinkStats {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;

  bool operator==(const LinkStats&) const = default;
};

class SimNetwork;

class SimClock final : public Clock {
 public:
  explicit SimClock(SimNetwork& net) : net_(net) {}
  Millis now() const override;
  TimerHandle schedule(Millis delay, std::function<void()> callback) override;
  void cancel(TimerHandle handle) override;
  /// Steps the simulation until `pred` holds. Without a timeout the run is
  /// bounded by SimNetwork::max_wait so a predicate that never holds returns.
  bool wait_until(const std::function<bool()>& pred, std::optional<Millis> timeout = std::nullopt) override;
  void notify() override {}

 private:
  SimNetwork& net_;
};

class SimNetwork {
 public:
  /// Returns true to drop a datagram on (src, dst) deterministically.
  using DropFilter = std::function<bool(const Address& src, const Address& dst, std::span<const std::uint8_t>)>;
  using TraceSink = std::function<void(const std::string& line)>;

  /// Links without an explicit configuration use `default_link`, with its
  /// seed mixed with the link's endpoints.
  explicit SimNetwork(SimLinkConfig default_link = {});
  SimNetwork(const SimNetwork&) = delete;
  SimNetwork& operator=(const SimNetwork&) = delete;
  ~SimNetwork();

  /// Registers a host owning `addrs`; throws Error{InvalidArgument} if an
  /// address is taken. The network must outlive the returned transport.
  std::shared_ptr<Transport> add_host(const std::string& name, std::vector<Address> addrs);

  void configure_link(const Address& src, const Address& dst, SimLinkConfig config);
  const SimLinkConfig& link_config(const Address& src, const Address& dst);
  void set_link_up(const Address& src, const Address& dst, bool up);
  /// Both directions between `a` and `b`.
  void set_path_up(const Address& a, const Address& b, bool up);
  LinkStats link_stats(const Address& src, const Address& dst) const;
  LinkStats total_stats() const;

  void set_drop_filter(DropFilter filter) { drop_filter_ = std::move(filter); }
  void set_trace(TraceSink sink) { trace_ = std::move(sink); }

  /// Delivers `data` to `dst` as if sent from `src` (which need not exist),
  /// bypassing link models; arrives at the current virtual time.
  void inject(std::span<const std::uint8_t> data, const Address& src, const Address& dst);

  Millis now() const { return now_; }
  /// Runs every event due within (now, now + delta] and sets the clock to
  /// now + delta. Returns the number of events run.
  std::size_t advance(Millis delta);
  /// Runs the next event, moving the clock to its time. False if none.
  bool step();
  std::optional<Millis> next_event_time() const;
  std::size_t pending_events() const { return events_.size(); }

  /// Upper bound of virtual time a SimClock::wait_until without timeout runs.
  Millis max_wait{3'600'000};

  SimClock& clock() { return clock_; }

 private:
  friend class SimClock;
  class Host;
  struct Link {
    SimLinkConfig config;
    std::mt19937_64 rng;
    LinkStats stats;
    std::optional<std::uint64_t> last_pending;  // event id of the newest undelivered packet
  };
  struct EventKey {
    Millis at;
    std::uint64_t seq;
    auto operator<=>(const EventKey&) const = default;
  };

  std::uint64_t schedule_at(Millis at, std::function<void()> fn);
  void cancel_event(std::uint64_t id);
  Link& link(const Address& src, const Address& dst);
  void send(std::span<const std::uint8_t> data, const Address& src, const Address& dst);
  void deliver(const Bytes& data, const Address& src, const Address& dst, bool via_link);
  void trace(const char* what, const Address& src, const Address& dst, std::span<const std::uint8_t> data);

  SimLinkConfig default_link_;
  SimClock clock_;
  Millis now_{0};
  std::uint64_t next_seq_ = 1;
  std::map<EventKey, std::function<void()>> events_;
  std::map<std::uint64_t, Millis> event_times_;  // id (= seq) to due time
  std::map<std::pair<Address, Address>, Link> links_;
  std::map<Address, std::shared_ptr<Host>> hosts_by_addr_;
  std::uint64_t host_count_ = 0;
  DropFilter drop_filter_;
  TraceSink trace_;
};

/// One trace line body: "<chunk types> [tsns]" for a datagram, or "INVALID".
std::string describe_datagram(std::span<const std::uint8_t> data);

}  // namespace microsctp
