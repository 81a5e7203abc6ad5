// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gen.hpp"
#include "microsctp/api.hpp"
#include "microsctp/error.hpp"
#include "microsctp/reliability.hpp"
#include "microsctp/sim.hpp"
#include "microsctp/streams.hpp"
#include "microsctp/wire.hpp"
#include "oracles.hpp"

namespace {

using namespace microsctp;
using Clock = std::chrono::steady_clock;

const Address kServer = Address::parse("10.0.0.1:9899");
const Address kServerAlt = Address::parse("10.0.1.1:9899");
const Address kClient = Address::parse("10.0.0.2:40000");

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt_ms(Clock::duration d) {
  return std::to_string(std::chrono::duration_cast<std::chrono::milliseconds>(d).count()) + " ms wall";
}

std::uint32_t read_index(const Bytes& p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | p[i];
  return v;
}

Bytes indexed_payload(std::uint32_t i, std::size_t size) {
  Bytes b(size);
  for (std::size_t k = 0; k < size; ++k) b[k] = static_cast<std::uint8_t>(i * 31 + k);
  b[0] = static_cast<std::uint8_t>(i >> 24);
  b[1] = static_cast<std::uint8_t>(i >> 16);
  b[2] = static_cast<std::uint8_t>(i >> 8);
  b[3] = static_cast<std::uint8_t>(i);
  return b;
}

std::vector<wire::DataChunk> data_chunks(std::span<const std::uint8_t> d) {
  std::vector<wire::DataChunk> out;
  try {
    for (const auto& c : wire::decode_packet(d).chunks) {
      if (const auto* data = std::get_if<wire::DataChunk>(&c)) out.push_back(*data);
    }
  } catch (const Error&) {
  }
  return out;
}

// "<ms> <src>-><dst> SEND <CHUNKS> ..." -> "<CHUNKS>"
std::string chunk_field(const std::string& line) {
  std::istringstream in(line);
  std::string at, route, verb, chunks;
  in >> at >> route >> verb >> chunks;
  return chunks;
}

// 1. -------------------------------------------------------------------------

Outcome handshake_shape() {
  const auto start = Clock::now();
  SimNetwork net;
  std::vector<std::string> sends;
  net.set_trace([&](const std::string& l) {
    if (l.find(" SEND ") != std::string::npos) sends.push_back(chunk_field(l));
  });
  Endpoint server = listen(net.add_host("s", {kServer}));
  Connection conn = dial(net.add_host("c", {kClient}), {kServer});
  conn.wait_established();
  const auto wall = Clock::now() - start;
  const std::vector<std::string> expected{"INIT", "INIT_ACK", "COOKIE_ECHO", "COOKIE_ACK"};
  std::string seen;
  for (const auto& s : sends) seen += (seen.empty() ? "" : ",") + s;
  const bool ok = sends == expected && conn.state() == AssocState::Established && wall < std::chrono::seconds(1);
  return {ok, std::to_string(sends.size()) + " packets [" + seen + "], " + fmt_ms(wall)};
}

// 2. -------------------------------------------------------------------------

Outcome dos_statelessness() {
  constexpr std::uint32_t kSpoofed = 10'000;
  SimNetwork net;
  Endpoint server = listen(net.add_host("s", {kServer}));

  // Every spoofed source is owned by one raw host so the INIT-ACKs can be
  // captured and one of them replayed.
  std::vector<Address> spoofed;
  for (std::uint32_t i = 0; i < kSpoofed; ++i) spoofed.push_back(Address{0xAC100000u + i, 5000});
  auto raw = net.add_host("spoofers", spoofed);
  std::map<Address, wire::InitAckChunk> acks;
  std::size_t cookie_acks = 0;
  raw->register_receiver([&](std::span<const std::uint8_t> d, const Address&, const Address& dst) {
    for (const auto& c : wire::decode_packet(d).chunks) {
      if (const auto* a = std::get_if<wire::InitAckChunk>(&c)) acks[dst] = *a;
      if (std::holds_alternative<wire::CookieAckChunk>(c)) ++cookie_acks;
    }
  });

  for (std::uint32_t i = 0; i < kSpoofed; ++i) {
    wire::InitChunk init;
    init.initiate_tag = i + 1;
    init.a_rwnd = 65536;
    init.outbound_streams = 4;
    init.max_inbound_streams = 4;
    init.initial_tsn = i * 7;
    net.inject(wire::encode_packet(wire::CommonHeader{5000, 9899, 0, 0}, std::vector<wire::Chunk>{init}),
               spoofed[i], kServer);
  }
  net.advance(Millis{200});
  const auto after_inits = server.stats();
  const bool stateless = server.association_count() == 0 && server.associations().empty() &&
                         after_inits.associations_created == 0 && after_inits.init_acks_sent == kSpoofed &&
                         acks.size() == kSpoofed;

  // Replay one captured INIT-ACK's cookie as its owner would.
  const Address who = spoofed[4321];
  const auto& ack = acks[who];
  const Bytes* cookie = ack.cookie();
  if (cookie) {
    net.inject(wire::encode_packet(wire::CommonHeader{5000, 9899, ack.initiate_tag, 0},
                                   std::vector<wire::Chunk>{wire::CookieEchoChunk{*cookie}}),
               who, kServer);
    net.advance(Millis{50});
  }
  const bool replay_ok = cookie && server.stats().associations_created == 1 && cookie_acks == 1;

  // Forged cookies: random 64-byte blobs, each from a distinct source.
  std::mt19937_64 rng(64);
  const auto rejected_before = server.stats().cookies_rejected;
  for (std::uint32_t i = 0; i < kSpoofed; ++i) {
    const Bytes blob = gen::bytes(rng, 64, 64);
    net.inject(wire::encode_packet(wire::CommonHeader{5000, 9899, static_cast<std::uint32_t>(rng()), 0},
                                   std::vector<wire::Chunk>{wire::CookieEchoChunk{blob}}),
               spoofed[i], kServer);
  }
  net.advance(Millis{50});
  const auto final_stats = server.stats();
  const std::uint64_t rejected = final_stats.cookies_rejected - rejected_before;
  const bool forged_ok = rejected == kSpoofed && final_stats.associations_created == 1;

  return {stateless && replay_ok && forged_ok,
          "after 10000 INITs: assocs=" + std::to_string(after_inits.associations_created) +
              " init_acks=" + std::to_string(after_inits.init_acks_sent) +
              "; replayed cookie accepted=" + (replay_ok ? "yes" : "no") + "; forged rejected " +
              std::to_string(rejected) + "/10000"};
}

// 3. -------------------------------------------------------------------------

Outcome head_of_line() {
  SimNetwork net;
  Endpoint server = listen(net.add_host("s", {kServer}));
  struct Delivery {
    std::uint16_t sid, ssn;
    Millis at;
  };
  std::vector<Delivery> log;
  server.set_message_handler([&](const Message& m) { log.push_back({m.info.sid, m.info.ssn, net.now()}); });
  Connection conn = dial(net.add_host("c", {kClient}), {kServer});
  conn.wait_established();

  std::optional<Millis> dropped_at;
  net.set_drop_filter([&](const Address& src, const Address&, std::span<const std::uint8_t> d) {
    if (src != kClient || dropped_at) return false;
    for (const auto& c : data_chunks(d)) {
      if (c.sid == 0 && c.ssn == 1) {
        dropped_at = net.now();
        return true;
      }
    }
    return false;
  });
  // Two packets follow the gap, one short of the fast-retransmit threshold.
  conn.send_async(Bytes{'a'}, {0, 0});
  conn.send_async(Bytes{'b'}, {0, 0});
  conn.send_async(Bytes{'x'}, {1, 0});
  conn.send_async(Bytes{'y'}, {1, 0});
  net.clock().wait_until([&] { return log.size() == 4; }, Millis{10'000});

  auto at = [&](std::uint16_t sid, std::uint16_t ssn) -> std::optional<Millis> {
    for (const auto& d : log) {
      if (d.sid == sid && d.ssn == ssn) return d.at;
    }
    return std::nullopt;
  };
  const auto blocked = at(0, 1), s1a = at(1, 0), s1b = at(1, 1);
  if (!blocked || !s1a || !s1b || !dropped_at) return {false, "only " + std::to_string(log.size()) + "/4 delivered"};
  const Millis wait = *blocked - *dropped_at;
  const bool ok = *s1a < *blocked && *s1b < *blocked && wait >= Millis{1000};
  return {ok, "stream 1 at " + std::to_string(s1a->count()) + "/" + std::to_string(s1b->count()) +
                  " ms, stream 0 blocked message at " + std::to_string(blocked->count()) + " ms (" +
                  std::to_string(wait.count()) + " ms after its loss)"};
}

// 4. -------------------------------------------------------------------------

Outcome multihoming_failover() {
  constexpr std::uint32_t kCount = 1000;
  const auto start = Clock::now();
  SimNetwork net;
  Endpoint server = listen(net.add_host("s", {kServer, kServerAlt}));
  std::map<std::uint16_t, std::vector<std::uint32_t>> per_stream;
  std::set<std::uint32_t> seen;
  std::uint64_t duplicates = 0;
  server.set_message_handler([&](const Message& m) {
    const std::uint32_t i = read_index(m.payload);
    if (!seen.insert(i).second) ++duplicates;
    per_stream[m.info.sid].push_back(i);
  });
  Connection conn = dial(net.add_host("c", {kClient}), {kServer});
  conn.wait_established();

  for (std::uint32_t i = 0; i < kCount; ++i) {
    if (i == kCount / 2) net.set_path_up(kClient, kServer, false);
    conn.send_async(indexed_payload(i, 16), {static_cast<std::uint16_t>(i % 2), 0});
    net.advance(Millis{20});
  }
  net.clock().wait_until([&] { return seen.size() == kCount; }, Millis{600'000});
  const auto wall = Clock::now() - start;

  std::size_t failovers = 0;
  for (const auto& n : conn.take_notifications()) failovers += n.kind == Notification::Kind::PathFailover;
  bool ordered = true;
  for (const auto& [sid, v] : per_stream) ordered = ordered && std::is_sorted(v.begin(), v.end());
  const bool ok = seen.size() == kCount && duplicates == 0 && ordered && failovers >= 1 &&
                  wall < std::chrono::seconds(5);
  return {ok, std::to_string(seen.size()) + "/1000 delivered, " + std::to_string(duplicates) + " duplicates, order " +
                  (ordered ? "intact" : "broken") + ", " + std::to_string(failovers) + " failover notifications, " +
                  std::to_string(net.now().count()) + " ms virtual, " + fmt_ms(wall)};
}

// 5. -------------------------------------------------------------------------

Outcome message_boundaries() {
  SimNetwork net;
  Endpoint server = listen(net.add_host("s", {kServer}));
  Connection conn = dial(net.add_host("c", {kClient}), {kServer});
  conn.wait_established();
  std::map<std::uint16_t, std::set<std::uint32_t>> tsns_by_ssn;
  net.set_drop_filter([&](const Address& src, const Address&, std::span<const std::uint8_t> d) {
    if (src == kClient) {
      for (const auto& c : data_chunks(d)) tsns_by_ssn[c.ssn].insert(c.tsn);
    }
    return false;
  });

  const std::vector<std::size_t> sizes{1, 2, 1183, 1184, 1185, 5000};
  std::mt19937_64 rng(5);
  std::string detail;
  bool ok = true;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const Bytes sent = gen::bytes(rng, sizes[k], sizes[k]);
    conn.send(sent);
    auto got = server.recv_for(Millis{10'000});
    const std::size_t fragments = tsns_by_ssn[static_cast<std::uint16_t>(k)].size();
    const std::size_t expected = oracle::fragment_count(sizes[k], 1232 - 48);
    const bool exact = got && got->payload == sent;
    ok = ok && exact && fragments == expected;
    detail += std::to_string(sizes[k]) + ":" + (exact ? "ok" : "MISMATCH") + "/" + std::to_string(fragments) +
              (fragments == expected ? "" : "!=" + std::to_string(expected)) + " ";
  }
  const bool no_extra = !server.recv_for(Millis{1000});
  ok = ok && no_extra;
  return {ok, "size:payload/fragments " + detail + (no_extra ? "no extra messages" : "EXTRA messages")};
}

// 6. -------------------------------------------------------------------------

struct LossyRun {
  std::vector<std::string> deliveries;
  std::vector<std::string> trace;
  std::size_t received = 0;
  std::uint64_t duplicates = 0;
  bool ordered = true;
  Millis virtual_end{0};
};

LossyRun lossy_run(std::uint64_t seed) {
  constexpr std::uint32_t kCount = 5000;
  SimLinkConfig link;
  link.loss_rate = 0.2;
  link.delay = Millis{10};
  link.jitter = Millis{5};
  link.reorder_rate = 0.1;
  link.seed = seed;
  SimNetwork net(link);
  LossyRun run;
  net.set_trace([&](const std::string& l) { run.trace.push_back(l); });
  Endpoint server = listen(net.add_host("s", {kServer}));
  std::set<std::uint32_t> seen;
  std::map<std::uint16_t, std::uint32_t> last;
  server.set_message_handler([&](const Message& m) {
    const std::uint32_t i = read_index(m.payload);
    if (!seen.insert(i).second) ++run.duplicates;
    if (m.payload != indexed_payload(i, m.payload.size()) || i % 4 != m.info.sid) run.ordered = false;
    auto it = last.find(m.info.sid);
    if (it != last.end() && it->second >= i) run.ordered = false;
    last[m.info.sid] = i;
    run.deliveries.push_back(std::to_string(net.now().count()) + " " + std::to_string(m.info.sid) + "/" +
                             std::to_string(m.info.ssn) + " #" + std::to_string(i));
  });
  InitOptions o;
  o.num_out_streams = 4;
  o.max_in_streams = 4;
  o.max_init_attempts = 20;
  Connection conn = dial(net.add_host("c", {kClient}), {kServer}, o);
  for (std::uint32_t i = 0; i < kCount; ++i) {
    conn.send_async(indexed_payload(i, 8 + i % 200), {static_cast<std::uint16_t>(i % 4), 0});
  }
  net.clock().wait_until([&] { return seen.size() == kCount; });
  run.received = seen.size();
  run.virtual_end = net.now();
  return run;
}

Outcome reliability_under_loss() {
  const auto a = lossy_run(2024);
  const auto b = lossy_run(2024);
  std::size_t drops = 0;
  for (const auto& l : a.trace) drops += l.find(" DROP ") != std::string::npos;
  const bool identical = a.deliveries == b.deliveries && a.trace == b.trace;
  const bool ok = a.received == 5000 && a.duplicates == 0 && a.ordered && identical;
  return {ok, std::to_string(a.received) + "/5000 delivered, " + std::to_string(a.duplicates) + " duplicates, order " +
                  (a.ordered ? "intact" : "broken") + ", " + std::to_string(drops) + " datagrams dropped, " +
                  std::to_string(a.virtual_end.count()) + " ms virtual; second run " +
                  (identical ? "bit-identical" : "DIFFERS") + " (" + std::to_string(a.trace.size()) + " trace lines)"};
}

// 7. -------------------------------------------------------------------------

Outcome init_knobs() {
  SimNetwork net;
  net.add_host("silent", {kServer});
  InitOptions o;
  o.max_init_attempts = 3;
  o.init_timeout = Millis{100};
  Connection conn = dial(net.add_host("c", {kClient}), {kServer}, o);
  std::optional<Errc> failure;
  try {
    conn.wait_established();
  } catch (const Error& e) {
    failure = e.errc();
  }
  const bool ok = failure == Errc::Timeout && net.now() == Millis{100 + 200 + 400};
  return {ok, std::string("dial ") + (failure == Errc::Timeout ? "timed out" : "did not time out") + " at " +
                  std::to_string(net.now().count()) + " ms virtual"};
}

// 8. -------------------------------------------------------------------------

Outcome oracle_equivalence() {
  std::mt19937_64 rng(8);
  ReliabilityConfig cfg;
  std::size_t sack_mismatches = 0;
  for (int trial = 0; trial < 10'000; ++trial) {
    const std::uint32_t initial = static_cast<std::uint32_t>(rng());
    ReliabilityState r(1, initial, 0, cfg);
    std::set<std::uint32_t> offsets;
    const std::uint32_t span = 1 + static_cast<std::uint32_t>(rng() % 400);
    const int n = static_cast<int>(rng() % 200);
    for (int i = 0; i < n; ++i) offsets.insert(1 + static_cast<std::uint32_t>(rng() % span));
    std::vector<std::uint32_t> order(offsets.begin(), offsets.end());
    std::shuffle(order.begin(), order.end(), rng);
    for (auto off : order) r.on_inbound_tsn(initial - 1 + off);
    auto expected = oracle::gap_scan(initial - 1, offsets);
    if (expected.gaps.size() > cfg.max_gap_blocks) expected.gaps.resize(cfg.max_gap_blocks);
    const auto got = r.build_sack(1000);
    bool same = got.cumulative_tsn_ack == expected.cum && got.gaps.size() == expected.gaps.size();
    for (std::size_t i = 0; same && i < got.gaps.size(); ++i) {
      same = got.gaps[i].start == expected.gaps[i].first && got.gaps[i].end == expected.gaps[i].second;
    }
    sack_mismatches += !same;
  }

  std::size_t reassembly_mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto nstreams = gen::uint<std::uint16_t>(rng, 1, 4);
    const auto max_payload = gen::uint<std::size_t>(rng, 1, 20);
    std::vector<OutStream> outs(nstreams);
    std::vector<wire::DataChunk> all;
    std::uint32_t tsn = static_cast<std::uint32_t>(rng());
    const int nmsgs = gen::uint(rng, 1, 25);
    for (int m = 0; m < nmsgs; ++m) {
      const auto sid = gen::uint<std::uint16_t>(rng, 0, nstreams - 1);
      for (auto& f : fragment_message(gen::bytes(rng, 1, 60), sid, 0, outs[sid], max_payload)) {
        f.tsn = tsn++;
        all.push_back(f);
      }
    }
    std::vector<oracle::Fragment> frags;
    for (const auto& c : all) frags.push_back({c.tsn - all.front().tsn, c.sid, c.ssn, c.beginning, c.ending, c.payload});
    const auto expected = oracle::sort_and_split(frags);
    std::shuffle(all.begin(), all.end(), rng);
    InboundStreams in(nstreams);
    std::map<std::uint16_t, std::vector<oracle::Delivered>> got;
    for (const auto& c : all) {
      for (auto& m : in.on_data_chunk(c).deliverable) got[m.sid].push_back({m.sid, m.ssn, m.payload});
    }
    reassembly_mismatches += got != expected;
  }
  return {sack_mismatches == 0 && reassembly_mismatches == 0,
          "build_sack " + std::to_string(sack_mismatches) + "/10000 mismatches, reassembly " +
              std::to_string(reassembly_mismatches) + "/1000 mismatches"};
}

// 9. -------------------------------------------------------------------------

void reseal(Bytes& b) {
  b[8] = b[9] = b[10] = b[11] = 0;
  const std::uint32_t crc = oracle::crc32c_bitwise(b);
  b[8] = static_cast<std::uint8_t>(crc >> 24);
  b[9] = static_cast<std::uint8_t>(crc >> 16);
  b[10] = static_cast<std::uint8_t>(crc >> 8);
  b[11] = static_cast<std::uint8_t>(crc);
}

Outcome wire_totality() {
  std::mt19937_64 rng(9);
  std::size_t decoded = 0, rejected = 0, roundtrip_failures = 0, other_exceptions = 0;
  for (int i = 0; i < 100'000; ++i) {
    Bytes b;
    switch (i % 3) {
      case 0:
        b = gen::bytes(rng, 0, 160);
        if (b.size() >= 12 && rng() % 2) reseal(b);
        break;
      case 1:
        b = wire::encode_packet(gen::packet(rng));
        b[rng() % b.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
        break;
      default:
        b = wire::encode_packet(gen::packet(rng));
        b[12 + rng() % (b.size() - 12)] = static_cast<std::uint8_t>(rng());
        b.resize(12 + rng() % (b.size() - 11));
        reseal(b);
        break;
    }
    // An exact-size heap copy so any read past the end touches foreign memory.
    const Bytes input(b.begin(), b.end());
    try {
      const auto p = wire::decode_packet(input);
      ++decoded;
      if (wire::decode_packet(wire::encode_packet(p)).chunks != p.chunks) ++roundtrip_failures;
    } catch (const Error&) {
      ++rejected;
    } catch (...) {
      ++other_exceptions;
    }
  }
  // Valid encodes must always decode back to themselves.
  for (int i = 0; i < 10'000; ++i) {
    const auto p = gen::packet(rng);
    try {
      if (wire::decode_packet(wire::encode_packet(p)).chunks != p.chunks) ++roundtrip_failures;
    } catch (...) {
      ++roundtrip_failures;
    }
  }
  // A run that never reaches a successful decode exercised nothing.
  return {roundtrip_failures == 0 && other_exceptions == 0 && decoded > 0,
          "100000 inputs: " + std::to_string(decoded) + " decoded, " + std::to_string(rejected) +
              " rejected with a typed error, " + std::to_string(other_exceptions) + " other exceptions; " +
              std::to_string(roundtrip_failures) + " roundtrip failures"};
}

// 10. ------------------------------------------------------------------------

Outcome udp_bench() {
  cli::BenchArgs args;
  args.size = 100;
  args.count = 100'000;
  args.transport = cli::TransportKind::Udp;
  std::ostringstream out, err;
  int rc = 0;
  try {
    rc = cli::cmd_bench(args, out, err);
  } catch (const std::exception& e) {
    return {false, std::string("threw: ") + e.what()};
  }
  const std::regex line(R"(bench msgs=100000 bytes=10000000 ms=\d+ rate=\d+)");
  std::istringstream lines(out.str());
  std::string l, report;
  while (std::getline(lines, l)) {
    if (std::regex_match(l, line)) report = l;
  }
  const bool ok = rc == cli::kExitOk && !report.empty() && err.str().empty();
  return {ok, "exit " + std::to_string(rc) + ", " + (report.empty() ? "no well-formed report" : "'" + report + "'") +
                  (err.str().empty() ? "" : ", stderr: " + err.str())};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"handshake shape", handshake_shape},
      {"DOS statelessness", dos_statelessness},
      {"head-of-line independence", head_of_line},
      {"multihoming failover", multihoming_failover},
      {"message boundaries", message_boundaries},
      {"reliability under loss", reliability_under_loss},
      {"init knobs", init_knobs},
      {"oracle equivalence", oracle_equivalence},
      {"wire totality", wire_totality},
      {"UDP bench", udp_bench},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("unexpected exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
