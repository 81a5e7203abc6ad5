#include "microsctp/reliability.hpp"

#include <algorithm>

namespace microsctp {

ReliabilityState::ReliabilityState(std::uint32_t local_initial_tsn, std::uint32_t peer_initial_tsn,
                                   std::uint32_t peer_rwnd, ReliabilityConfig config)
    : config_(config),
      next_tsn_(local_initial_tsn),
      cum_ack_received_(local_initial_tsn - 1),
      peer_rwnd_(peer_rwnd),
      rto_(config.rto_initial),
      recv_cum_(peer_initial_tsn - 1) {}

RtoCommand ReliabilityState::apply(RtoCommand c) {
  if (c == RtoCommand::Start) rto_running_ = true;
  if (c == RtoCommand::Stop) rto_running_ = false;
  return c;
}

void ReliabilityState::mark_sent(OutboundEntry& e, const Address& dest, Millis now) {
  if (e.send_count == 0) {
    --deferred_count_;
    deferred_bytes_ -= e.chunk.payload.size();
    in_flight_bytes_ += e.chunk.payload.size();
  } else {
    ++retransmissions_;
  }
  ++e.send_count;
  if (e.marked) --marked_count_;
  e.marked = false;
  e.last_sent_at = now;
  e.dest = dest;
}

AssignResult ReliabilityState::assign_and_queue(std::vector<wire::DataChunk> chunks, const Address& dest,
                                                Millis now) {
  AssignResult result;
  // A chunk may not overtake an earlier one that is still held back.
  bool blocked = deferred_bytes_ > 0;
  for (auto& c : chunks) {
    c.tsn = next_tsn_++;
    OutboundEntry e;
    e.chunk = std::move(c);
    deferred_bytes_ += e.chunk.payload.size();
    ++deferred_count_;
    if (!blocked && fits_window(e.chunk.payload.size())) {
      mark_sent(e, dest, now);
      result.sendable.push_back(e.chunk);
    } else {
      blocked = true;
      ++result.deferred;
    }
    queue_.push_back(std::move(e));
  }
  if (!rto_running_ && !queue_.empty()) result.rto = apply(RtoCommand::Start);
  return result;
}

std::vector<wire::DataChunk> ReliabilityState::release_deferred(const Address& dest, Millis now) {
  std::vector<wire::DataChunk> out;
  for (std::size_t i = queue_.size() - deferred_count_; i < queue_.size(); ++i) {
    auto& e = queue_[i];
    if (!fits_window(e.chunk.payload.size())) break;
    mark_sent(e, dest, now);
    out.push_back(e.chunk);
  }
  return out;
}

SackResult ReliabilityState::on_sack(const wire::SackChunk& sack, const Address& dest, Millis now) {
  SackResult result;
  const std::uint32_t cum = sack.cumulative_tsn_ack;
  // Older than what we already know, or acknowledging TSNs never assigned.
  if (serial_lt(cum, cum_ack_received_) || !serial_lt(cum, next_tsn_)) {
    result.stale = true;
    return result;
  }
  peer_rwnd_ = sack.a_rwnd;

  std::optional<std::uint32_t> highest_newly_acked;
  while (!queue_.empty() && serial_le(queue_.front().chunk.tsn, cum)) {
    auto& e = queue_.front();
    if (!e.gap_acked) {
      highest_newly_acked = e.chunk.tsn;
      if (e.send_count > 0) {
        in_flight_bytes_ -= e.chunk.payload.size();
      } else {
        deferred_bytes_ -= e.chunk.payload.size();
        --deferred_count_;
      }
    }
    if (e.marked) --marked_count_;
    ++result.newly_acked;
    queue_.pop_front();
  }
  result.cum_advanced = cum != cum_ack_received_;
  cum_ack_received_ = cum;

  for (const auto& g : sack.gaps) {
    if (g.start == 0) continue;
    std::size_t first = g.start - 1u;  // queue index of cum + start
    std::size_t last = std::min<std::size_t>(g.end, queue_.size());
    for (std::size_t i = first; i < last; ++i) {
      auto& e = queue_[i];
      if (e.gap_acked || e.send_count == 0) continue;
      e.gap_acked = true;
      if (e.marked) --marked_count_;
      e.marked = false;
      in_flight_bytes_ -= e.chunk.payload.size();
      ++result.newly_acked;
      if (!highest_newly_acked || serial_lt(*highest_newly_acked, e.chunk.tsn)) {
        highest_newly_acked = e.chunk.tsn;
      }
    }
  }

  if (highest_newly_acked) {
    for (auto& e : queue_) {
      if (!serial_lt(e.chunk.tsn, *highest_newly_acked)) break;
      if (e.gap_acked || e.send_count == 0) continue;
      if (++e.miss_indications >= config_.fast_retransmit_threshold && !e.fast_retransmitted) {
        e.fast_retransmitted = true;
        mark_sent(e, dest, now);
        result.fast_retransmits.push_back(e.chunk);
      }
    }
  }

  for (std::size_t i = 0; marked_count_ > 0 && i < queue_.size(); ++i) {
    auto& e = queue_[i];
    if (!e.marked) continue;
    const Address to = e.dest.value_or(dest);
    mark_sent(e, to, now);
    result.retransmits.emplace_back(to, e.chunk);
  }

  result.released = release_deferred(dest, now);

  if (result.cum_advanced) {
    rto_ = config_.rto_initial;
    result.rto = apply(queue_.empty() ? RtoCommand::Stop : RtoCommand::Start);
  } else if (!queue_.empty() && !rto_running_) {
    result.rto = apply(RtoCommand::Start);
  }
  return result;
}

RtoResult ReliabilityState::on_rto_expiry(const Address& dest, Millis now, std::size_t packet_budget) {
  RtoResult result;
  rto_running_ = false;
  auto first = std::find_if(queue_.begin(), queue_.end(), [](const auto& e) { return !e.gap_acked; });
  if (first == queue_.end()) {
    // Everything left is gap-acked; keep probing for the cumulative ack.
    if (!queue_.empty()) result.rto = apply(RtoCommand::Start);
    return result;
  }
  if (first->send_count >= config_.max_retransmits) {
    result.abort = true;
    return result;
  }

  for (auto& e : queue_) {
    if (e.gap_acked || e.send_count == 0) continue;
    if (!e.marked) ++marked_count_;
    e.marked = true;
    e.dest = dest;
  }

  std::size_t used = 0;
  for (auto it = first; it != queue_.end(); ++it) {
    if (it->gap_acked) continue;
    // Held-back chunks go out only as a single window probe at the head.
    if (it->send_count == 0 && it != first) break;
    std::size_t size = wire::kDataChunkHeaderSize + ((it->chunk.payload.size() + 3) & ~std::size_t{3});
    if (it != first && used + size > packet_budget) break;
    used += size;
    mark_sent(*it, dest, now);
    result.retransmit.push_back(it->chunk);
  }
  rto_ = std::min(rto_ * 2, config_.rto_max);
  result.rto = apply(RtoCommand::Start);
  return result;
}

bool ReliabilityState::on_inbound_tsn(std::uint32_t tsn) {
  if (serial_le(tsn, recv_cum_) || recv_ooo_.contains(tsn)) {
    if (duplicates_.size() < config_.max_duplicates_reported) duplicates_.push_back(tsn);
    sack_pending_ = true;
    return false;
  }
  if (tsn - recv_cum_ > config_.max_tsn_window) return false;
  recv_ooo_.insert(tsn);
  while (!recv_ooo_.empty() && *recv_ooo_.begin() == recv_cum_ + 1) {
    recv_ooo_.erase(recv_ooo_.begin());
    ++recv_cum_;
  }
  sack_pending_ = true;
  return true;
}

wire::SackChunk ReliabilityState::build_sack(std::uint32_t a_rwnd_local) {
  wire::SackChunk sack;
  sack.cumulative_tsn_ack = recv_cum_;
  sack.a_rwnd = a_rwnd_local;
  for (auto tsn : recv_ooo_) {
    std::uint32_t offset = tsn - recv_cum_;
    if (offset > 0xFFFF) break;
    auto off16 = static_cast<std::uint16_t>(offset);
    if (!sack.gaps.empty() && sack.gaps.back().end + 1 == off16) {
      sack.gaps.back().end = off16;
    } else {
      if (sack.gaps.size() == config_.max_gap_blocks) break;
      sack.gaps.push_back({off16, off16});
    }
  }
  sack.duplicates = std::move(duplicates_);
  duplicates_.clear();
  sack_pending_ = false;
  return sack;
}

}  // namespace microsctp
