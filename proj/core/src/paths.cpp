#include "microsctp/paths.hpp"

#include "microsctp/error.hpp"

namespace microsctp {

PathTable::PathTable(std::vector<Address> addrs, std::size_t primary, int failure_threshold)
    : primary_(primary), failure_threshold_(failure_threshold) {
  if (addrs.empty()) throw Error(Errc::InvalidArgument, "path table needs at least one address");
  if (primary >= addrs.size()) throw Error(Errc::InvalidArgument, "primary index out of range");
  for (auto& a : addrs) add(a);
}

std::size_t PathTable::add(const Address& addr) {
  if (auto i = find(addr)) return *i;
  paths_.push_back(Path{addr});
  return paths_.size() - 1;
}

std::optional<std::size_t> PathTable::find(const Address& addr) const {
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    if (paths_[i].addr == addr) return i;
  }
  return std::nullopt;
}

std::size_t PathTable::select_index() const {
  if (paths_.at(primary_).status == PathStatus::Active) return primary_;
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    if (paths_[i].status == PathStatus::Active) return i;
  }
  return primary_;
}

const Address& PathTable::alternate(const Address& avoid) const {
  const std::size_t n = paths_.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Path& p = paths_[(primary_ + k) % n];
    if (p.status == PathStatus::Active && p.addr != avoid) return p.addr;
  }
  return select_path();
}

void PathTable::reset(Path& p) {
  p.consecutive_failures = 0;
  p.status = PathStatus::Active;
}

std::optional<Failover> PathTable::count_failure(std::size_t index, bool& became_inactive) {
  Path& p = paths_[index];
  ++p.consecutive_failures;
  became_inactive = false;
  if (p.status != PathStatus::Active || p.consecutive_failures < failure_threshold_) return std::nullopt;
  const std::size_t before = select_index();
  p.status = PathStatus::Inactive;
  became_inactive = true;
  const std::size_t after = select_index();
  if (before == after) return std::nullopt;
  return Failover{paths_[before].addr, paths_[after].addr};
}

HeartbeatTick PathTable::on_heartbeat_timer(std::size_t index, std::uint64_t nonce, Millis now) {
  HeartbeatTick tick;
  Path& p = paths_.at(index);
  if (p.hb_outstanding) tick.failover = count_failure(index, tick.became_inactive);
  p.hb_outstanding = true;
  p.hb_nonce = nonce;
  tick.dest = p.addr;
  tick.heartbeat.info = {nonce, static_cast<std::uint64_t>(now.count())};
  return tick;
}

std::optional<std::size_t> PathTable::on_heartbeat_ack(const wire::HeartbeatInfo& info) {
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    Path& p = paths_[i];
    if (p.hb_outstanding && p.hb_nonce == info.nonce) {
      p.hb_outstanding = false;
      p.hb_nonce = 0;
      reset(p);
      return i;
    }
  }
  return std::nullopt;
}

void PathTable::on_ack_from(const Address& addr) {
  if (auto i = find(addr)) reset(paths_[*i]);
}

std::optional<Failover> PathTable::on_retransmit_timeout(const Address& addr) {
  auto i = find(addr);
  if (!i) return std::nullopt;
  bool went_down = false;
  return count_failure(*i, went_down);
}

std::optional<Failover> PathTable::mark_down(const Address& addr) {
  auto i = find(addr);
  if (!i || paths_[*i].status == PathStatus::Inactive) return std::nullopt;
  const std::size_t before = select_index();
  paths_[*i].status = PathStatus::Inactive;
  const std::size_t after = select_index();
  if (before == after) return std::nullopt;
  return Failover{paths_[before].addr, paths_[after].addr};
}

void PathTable::mark_up(const Address& addr) {
  if (auto i = find(addr)) reset(paths_[*i]);
}

}  // namespace microsctp
