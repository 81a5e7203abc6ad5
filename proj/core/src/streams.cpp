#include "microsctp/streams.hpp"

#include <algorithm>

#include "microsctp/error.hpp"

namespace microsctp {

std::vector<wire::DataChunk> fragment_message(std::span<const std::uint8_t> msg, std::uint16_t sid,
                                              std::uint32_t ppid, OutStream& out, std::size_t max_payload) {
  if (msg.empty()) throw Error(Errc::EmptyMessage);
  if (max_payload == 0) throw Error(Errc::InvalidArgument, "max_payload must be positive");

  const std::uint16_t ssn = out.next_ssn++;
  const std::size_t count = (msg.size() + max_payload - 1) / max_payload;
  std::vector<wire::DataChunk> chunks;
  chunks.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto piece = msg.subspan(i * max_payload, std::min(max_payload, msg.size() - i * max_payload));
    wire::DataChunk c;
    c.sid = sid;
    c.ssn = ssn;
    c.ppid = ppid;
    c.beginning = i == 0;
    c.ending = i + 1 == count;
    c.payload.assign(piece.begin(), piece.end());
    chunks.push_back(std::move(c));
  }
  return chunks;
}

InboundStreams::InboundStreams(std::uint16_t count, std::size_t reassembly_cap, std::uint16_t initial_ssn)
    : reassembly_cap_(reassembly_cap) {
  streams_.resize(count);
  for (std::uint16_t i = 0; i < count; ++i) {
    streams_[i].sid = i;
    streams_[i].next_expected_ssn = initial_ssn;
  }
}

InboundResult InboundStreams::on_data_chunk(const wire::DataChunk& chunk) {
  InboundResult result;
  if (chunk.sid >= streams_.size()) {
    ++unknown_stream_drops_;
    result.unknown_stream = true;
    return result;
  }
  InStream& s = streams_[chunk.sid];
  // Already delivered or already complete: nothing left to do with it.
  if (serial_lt16(chunk.ssn, s.next_expected_ssn) || s.pending.contains(chunk.ssn)) return result;

  if (chunk.beginning && chunk.ending) {
    pending_bytes_ += chunk.payload.size();
    s.pending.emplace(chunk.ssn, StreamMessage{chunk.payload, chunk.sid, chunk.ssn, chunk.ppid});
  } else {
    if (reassembly_bytes_ + chunk.payload.size() > reassembly_cap_) {
      result.over_capacity = true;
      return result;
    }
    if (!s.fragments.emplace(chunk.tsn, chunk).second) return result;
    reassembly_bytes_ += chunk.payload.size();
    if (auto msg = try_reassemble(s, chunk.tsn)) {
      pending_bytes_ += msg->payload.size();
      auto ssn = msg->ssn;
      s.pending.emplace(ssn, std::move(*msg));
    } else if (chunk.beginning) {
      result.partial_notify = chunk.sid;
    }
  }
  drain_in_order(s, result.deliverable);
  return result;
}

std::optional<StreamMessage> InboundStreams::try_reassemble(InStream& s, std::uint32_t tsn) {
  const auto& probe = s.fragments.at(tsn);
  const std::uint16_t ssn = probe.ssn;

  std::uint32_t first = tsn;
  while (true) {
    auto it = s.fragments.find(first);
    if (it == s.fragments.end() || it->second.ssn != ssn) return std::nullopt;
    if (it->second.beginning) break;
    --first;
  }
  std::uint32_t last = tsn;
  while (true) {
    auto it = s.fragments.find(last);
    if (it == s.fragments.end() || it->second.ssn != ssn) return std::nullopt;
    if (it->second.ending) break;
    ++last;
  }

  StreamMessage msg{{}, s.sid, ssn, s.fragments.at(first).ppid};
  for (std::uint32_t t = first;; ++t) {
    auto node = s.fragments.extract(t);
    auto& payload = node.mapped().payload;
    reassembly_bytes_ -= payload.size();
    msg.payload.insert(msg.payload.end(), payload.begin(), payload.end());
    if (t == last) break;
  }
  return msg;
}

void InboundStreams::drain_in_order(InStream& s, std::vector<StreamMessage>& out) {
  for (auto it = s.pending.find(s.next_expected_ssn); it != s.pending.end();
       it = s.pending.find(s.next_expected_ssn)) {
    pending_bytes_ -= it->second.payload.size();
    out.push_back(std::move(it->second));
    s.pending.erase(it);
    ++s.next_expected_ssn;
  }
}

}  // namespace microsctp
