#pragma once

// Random well-formed chunks and packets for property tests.

#include <random>

#include "microsctp/wire.hpp"

namespace gen {

using namespace microsctp;

inline Bytes bytes(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  Bytes b(len(rng));
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

template <typename T>
T uint(std::mt19937_64& rng, T lo, T hi) {
  return static_cast<T>(std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng));
}

inline wire::InitBody init_body(std::mt19937_64& rng, bool with_cookie) {
  wire::InitBody b;
  b.initiate_tag = uint<std::uint32_t>(rng, 1, UINT32_MAX);
  b.a_rwnd = static_cast<std::uint32_t>(rng());
  b.outbound_streams = uint<std::uint16_t>(rng, 1, UINT16_MAX);
  b.max_inbound_streams = uint<std::uint16_t>(rng, 1, UINT16_MAX);
  b.initial_tsn = static_cast<std::uint32_t>(rng());
  const int addrs = uint(rng, 0, 3);
  for (int i = 0; i < addrs; ++i) b.add_ipv4_address(static_cast<std::uint32_t>(rng()));
  if (with_cookie) b.params.push_back({wire::kParamStateCookie, bytes(rng, 1, 80)});
  if (rng() % 4 == 0) b.params.push_back({uint<std::uint16_t>(rng, 0x8000, 0x8fff), bytes(rng, 0, 9)});
  return b;
}

inline wire::Chunk chunk(std::mt19937_64& rng) {
  switch (rng() % 13) {
    case 0: {
      wire::DataChunk d;
      d.tsn = static_cast<std::uint32_t>(rng());
      d.sid = static_cast<std::uint16_t>(rng());
      d.ssn = static_cast<std::uint16_t>(rng());
      d.ppid = static_cast<std::uint32_t>(rng());
      d.beginning = rng() & 1;
      d.ending = rng() & 1;
      d.payload = bytes(rng, 1, 64);
      return d;
    }
    case 1: {
      wire::InitChunk c;
      static_cast<wire::InitBody&>(c) = init_body(rng, false);
      return c;
    }
    case 2: {
      wire::InitAckChunk c;
      static_cast<wire::InitBody&>(c) = init_body(rng, true);
      return c;
    }
    case 3: {
      wire::SackChunk s;
      s.cumulative_tsn_ack = static_cast<std::uint32_t>(rng());
      s.a_rwnd = static_cast<std::uint32_t>(rng());
      std::uint16_t at = 0;
      const int ngaps = uint(rng, 0, 5);
      for (int i = 0; i < ngaps && at < 60000; ++i) {
        const auto start = static_cast<std::uint16_t>(at + 1 + rng() % 100);
        const auto end = static_cast<std::uint16_t>(start + rng() % 100);
        s.gaps.push_back({start, end});
        at = end;
      }
      const int ndups = uint(rng, 0, 4);
      for (int i = 0; i < ndups; ++i) s.duplicates.push_back(static_cast<std::uint32_t>(rng()));
      return s;
    }
    case 4: return wire::HeartbeatChunk{{rng(), rng()}};
    case 5: return wire::HeartbeatAckChunk{{rng(), rng()}};
    case 6: return wire::AbortChunk{static_cast<bool>(rng() & 1)};
    case 7: return wire::ShutdownChunk{static_cast<std::uint32_t>(rng())};
    case 8: return wire::ShutdownAckChunk{};
    case 9: return wire::CookieEchoChunk{bytes(rng, 1, 120)};
    case 10: return wire::CookieAckChunk{};
    case 11: return wire::ShutdownCompleteChunk{static_cast<bool>(rng() & 1)};
    default: {
      // Types 64..191 are unassigned here.
      return wire::UnknownChunk{uint<std::uint8_t>(rng, 64, 191), static_cast<std::uint8_t>(rng()), bytes(rng, 0, 30)};
    }
  }
}

inline wire::Packet packet(std::mt19937_64& rng) {
  wire::Packet p;
  p.header.src_port = static_cast<std::uint16_t>(rng());
  p.header.dst_port = static_cast<std::uint16_t>(rng());
  const int n = uint(rng, 1, 5);
  for (int i = 0; i < n; ++i) p.chunks.push_back(chunk(rng));
  const bool init_first = std::holds_alternative<wire::InitChunk>(p.chunks.front());
  p.header.verification_tag = init_first && rng() % 2 ? 0 : uint<std::uint32_t>(rng, 1, UINT32_MAX);
  return p;
}

}  // namespace gen
