#include "microsctp/sim.hpp"

#include <cstdlib>
#include <sstream>

#include "microsctp/error.hpp"
#include "microsctp/wire.hpp"

namespace microsctp {

namespace {

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t address_key(const Address& a) { return (static_cast<std::uint64_t>(a.ip) << 16) | a.port; }

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* v = std::getenv("MICROSCTP_SEED");
  if (v == nullptr || *v == '\0') return fallback;
  char* end = nullptr;
  const unsigned long long parsed = std::strtoull(v, &end, 10);
  return (end != nullptr && *end == '\0') ? parsed : fallback;
}

std::string describe_datagram(std::span<const std::uint8_t> data) {
  wire::Packet p;
  try {
    p = wire::decode_packet(data);
  } catch (const Error&) {
    return "INVALID";
  }
  std::string types;
  std::string tsns;
  for (const auto& c : p.chunks) {
    if (!types.empty()) types += ',';
    types += wire::chunk_name(c);
    if (const auto* d = std::get_if<wire::DataChunk>(&c)) {
      if (!tsns.empty()) tsns += ',';
      tsns += std::to_string(d->tsn);
    }
  }
  return tsns.empty() ? types : types + ' ' + tsns;
}

// ---------------------------------------------------------------------------

class SimNetwork::Host final : public Transport {
 public:
  Host(SimNetwork& net, std::string name, std::vector<Address> addrs, std::uint64_t seed)
      : net_(net), name_(std::move(name)), addrs_(std::move(addrs)), seed_(seed) {}

  void send_datagram(std::span<const std::uint8_t> data, const Address& dest,
                     std::optional<Address> source) override {
    Address src = addrs_.front();
    if (source) {
      for (const auto& a : addrs_) {
        if (a == *source) src = a;
      }
    }
    net_.send(data, src, dest);
  }
  void register_receiver(ReceiveCallback cb) override { receiver_ = std::move(cb); }
  std::vector<Address> local_addresses() const override { return addrs_; }
  Clock& clock() override { return net_.clock_; }
  std::uint64_t random_seed() override { return mix(seed_ + draws_++); }

  void receive(std::span<const std::uint8_t> data, const Address& src, const Address& dst) {
    if (receiver_) receiver_(data, src, dst);
  }

 private:
  SimNetwork& net_;
  std::string name_;
  std::vector<Address> addrs_;
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  ReceiveCallback receiver_;
};

// ---------------------------------------------------------------------------

Millis SimClock::now() const { return net_.now_; }

Clock::TimerHandle SimClock::schedule(Millis delay, std::function<void()> callback) {
  return net_.schedule_at(net_.now_ + std::max(delay, Millis{0}), std::move(callback));
}

void SimClock::cancel(TimerHandle handle) { net_.cancel_event(handle); }

bool SimClock::wait_until(const std::function<bool()>& pred, std::optional<Millis> timeout) {
  const Millis deadline = net_.now_ + timeout.value_or(net_.max_wait);
  while (!pred()) {
    auto next = net_.next_event_time();
    if (!next || *next > deadline) {
      // Nothing happens before the deadline; jump straight to it.
      if (timeout) net_.now_ = std::max(net_.now_, deadline);
      return pred();
    }
    net_.step();
  }
  return true;
}

// ---------------------------------------------------------------------------

SimNetwork::SimNetwork(SimLinkConfig default_link) : default_link_(default_link), clock_(*this) {
  default_link_.seed = seed_from_env(default_link_.seed);
}

SimNetwork::~SimNetwork() = default;

std::shared_ptr<Transport> SimNetwork::add_host(const std::string& name, std::vector<Address> addrs) {
  if (addrs.empty()) throw Error(Errc::InvalidArgument, "host needs an address");
  for (const auto& a : addrs) {
    if (hosts_by_addr_.contains(a)) throw Error(Errc::InvalidArgument, "address already in use: " + a.to_string());
  }
  auto host = std::make_shared<Host>(*this, name, addrs, mix(default_link_.seed ^ mix(host_count_++)));
  for (const auto& a : addrs) hosts_by_addr_[a] = host;
  return host;
}

SimNetwork::Link& SimNetwork::link(const Address& src, const Address& dst) {
  auto key = std::make_pair(src, dst);
  auto it = links_.find(key);
  if (it == links_.end()) {
    Link l;
    l.config = default_link_;
    l.config.seed = mix(default_link_.seed ^ mix(address_key(src)) ^ (mix(address_key(dst)) << 1));
    l.rng.seed(l.config.seed);
    it = links_.emplace(key, std::move(l)).first;
  }
  return it->second;
}

void SimNetwork::configure_link(const Address& src, const Address& dst, SimLinkConfig config) {
  Link& l = link(src, dst);
  l.config = config;
  // An environment seed perturbs every link while keeping them distinct.
  const std::uint64_t env = seed_from_env(0);
  if (env != 0) l.config.seed = mix(env ^ mix(config.seed));
  l.rng.seed(l.config.seed);
}

const SimLinkConfig& SimNetwork::link_config(const Address& src, const Address& dst) { return link(src, dst).config; }

void SimNetwork::set_link_up(const Address& src, const Address& dst, bool up) { link(src, dst).config.up = up; }

void SimNetwork::set_path_up(const Address& a, const Address& b, bool up) {
  set_link_up(a, b, up);
  set_link_up(b, a, up);
}

LinkStats SimNetwork::link_stats(const Address& src, const Address& dst) const {
  auto it = links_.find({src, dst});
  return it == links_.end() ? LinkStats{} : it->second.stats;
}

LinkStats SimNetwork::total_stats() const {
  LinkStats total;
  for (const auto& [key, l] : links_) {
    total.sent += l.stats.sent;
    total.delivered += l.stats.delivered;
    total.dropped += l.stats.dropped;
  }
  return total;
}

std::uint64_t SimNetwork::schedule_at(Millis at, std::function<void()> fn) {
  const std::uint64_t id = next_seq_++;
  events_.emplace(EventKey{at, id}, std::move(fn));
  event_times_.emplace(id, at);
  return id;
}

void SimNetwork::cancel_event(std::uint64_t id) {
  auto it = event_times_.find(id);
  if (it == event_times_.end()) return;
  events_.erase(EventKey{it->second, id});
  event_times_.erase(it);
}

std::optional<Millis> SimNetwork::next_event_time() const {
  if (events_.empty()) return std::nullopt;
  return events_.begin()->first.at;
}

bool SimNetwork::step() {
  if (events_.empty()) return false;
  auto node = events_.extract(events_.begin());
  event_times_.erase(node.key().seq);
  now_ = std::max(now_, node.key().at);
  node.mapped()();
  return true;
}

std::size_t SimNetwork::advance(Millis delta) {
  const Millis until = now_ + std::max(delta, Millis{0});
  std::size_t n = 0;
  while (!events_.empty() && events_.begin()->first.at <= until && delta.count() > 0) {
    step();
    ++n;
  }
  now_ = until;
  return n;
}

void SimNetwork::trace(const char* what, const Address& src, const Address& dst,
                       std::span<const std::uint8_t> data) {
  if (!trace_) return;
  std::ostringstream line;
  line << now_.count() << ' ' << src.to_string() << "->" << dst.to_string() << ' ' << what << ' '
       << describe_datagram(data);
  trace_(line.str());
}

void SimNetwork::send(std::span<const std::uint8_t> data, const Address& src, const Address& dst) {
  if (!hosts_by_addr_.contains(dst)) throw Error(Errc::UnknownAddress, dst.to_string());
  Link& l = link(src, dst);
  ++l.stats.sent;
  trace("SEND", src, dst, data);

  // Draw every random number up front so outcomes never shift the stream.
  const double loss_draw = unit(l.rng);
  const double reorder_draw = unit(l.rng);
  const auto jitter_draw = l.rng();

  const bool filtered = drop_filter_ && drop_filter_(src, dst, data);
  if (!l.config.up || filtered || loss_draw < l.config.loss_rate) {
    ++l.stats.dropped;
    trace("DROP", src, dst, data);
    return;
  }

  Millis at = now_ + l.config.delay;
  if (l.config.jitter.count() > 0) {
    at += Millis{static_cast<std::int64_t>(jitter_draw % static_cast<std::uint64_t>(l.config.jitter.count() + 1))};
  }

  auto payload = std::make_shared<Bytes>(data.begin(), data.end());

  std::function<void()> arrival = [this, payload, src, dst] { deliver(*payload, src, dst, true); };

  // Reordering: overtake the previous packet still in flight, taking its
  // delivery slot and pushing it back to this packet's.
  if (l.last_pending && reorder_draw < l.config.reorder_rate) {
    auto prev = event_times_.find(*l.last_pending);
    if (prev != event_times_.end()) {
      const Millis prev_at = prev->second;
      auto node = events_.extract(EventKey{prev_at, *l.last_pending});
      event_times_.erase(prev);
      schedule_at(prev_at, std::move(arrival));
      l.last_pending = schedule_at(std::max(at, prev_at), std::move(node.mapped()));
      return;
    }
  }
  l.last_pending = schedule_at(at, std::move(arrival));
}

void SimNetwork::deliver(const Bytes& data, const Address& src, const Address& dst, bool via_link) {
  if (via_link) {
    Link& l = link(src, dst);
    if (!l.config.up) {
      ++l.stats.dropped;
      trace("DROP", src, dst, data);
      return;
    }
    ++l.stats.delivered;
  }
  trace("RECV", src, dst, data);
  auto it = hosts_by_addr_.find(dst);
  if (it != hosts_by_addr_.end()) it->second->receive(data, src, dst);
}

void SimNetwork::inject(std::span<const std::uint8_t> data, const Address& src, const Address& dst) {
  if (!hosts_by_addr_.contains(dst)) throw Error(Errc::UnknownAddress, dst.to_string());
  auto payload = std::make_shared<Bytes>(data.begin(), data.end());
  schedule_at(now_, [this, payload, src, dst] { deliver(*payload, src, dst, false); });
}

}  // namespace microsctp
