#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>

#include "microsctp/api.hpp"
#include "microsctp/reliability.hpp"
#include "microsctp/sim.hpp"
#include "microsctp/streams.hpp"

namespace {

using namespace microsctp;

// Receiver state holding `range(0)` TSNs with every third one missing.
void BM_BuildSack(benchmark::State& state) {
  ReliabilityState r(1, 1000, 0, ReliabilityConfig{});
  for (std::uint32_t i = 0; i < static_cast<std::uint32_t>(state.range(0)); ++i) {
    if (i % 3 != 1) r.on_inbound_tsn(1000 + i);
  }
  for (auto _ : state) benchmark::DoNotOptimize(r.build_sack(65536));
}
BENCHMARK(BM_BuildSack)->Arg(16)->Arg(256)->Arg(4096);

void BM_FragmentMessage(benchmark::State& state) {
  const Bytes msg(static_cast<std::size_t>(state.range(0)), 0x5A);
  OutStream out;
  for (auto _ : state) benchmark::DoNotOptimize(fragment_message(msg, 0, 0, out, 1184));
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FragmentMessage)->Arg(100)->Arg(5000)->Arg(65536);

// Reassembly of one message whose fragments arrive in reverse order.
void BM_ReassembleReversed(benchmark::State& state) {
  const Bytes msg(static_cast<std::size_t>(state.range(0)), 0x5A);
  OutStream out;
  auto frags = fragment_message(msg, 0, 0, out, 1184);
  std::uint32_t tsn = 0;
  for (auto& f : frags) f.tsn = tsn++;
  std::reverse(frags.begin(), frags.end());
  for (auto _ : state) {
    InboundStreams in(1);
    for (const auto& f : frags) benchmark::DoNotOptimize(in.on_data_chunk(f));
  }
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ReassembleReversed)->Arg(5000)->Arg(65536);

// Whole-stack transfer on the simulated network, lossless or 10% loss.
void BM_SimTransfer(benchmark::State& state) {
  const Address server_addr = Address::parse("10.0.0.1:9899");
  const Address client_addr = Address::parse("10.0.0.2:40000");
  constexpr int kMessages = 1000;
  for (auto _ : state) {
    SimLinkConfig link;
    link.loss_rate = static_cast<double>(state.range(0)) / 100.0;
    SimNetwork net(link);
    Endpoint server = listen(net.add_host("s", {server_addr}));
    int got = 0;
    server.set_message_handler([&](const Message&) { ++got; });
    Connection conn = dial(net.add_host("c", {client_addr}), {server_addr});
    const Bytes payload(100, 1);
    for (int i = 0; i < kMessages; ++i) conn.send_async(payload);
    net.clock().wait_until([&] { return got == kMessages; });
  }
  state.SetItemsProcessed(state.iterations() * kMessages);
}
BENCHMARK(BM_SimTransfer)->Arg(0)->Arg(10)->Unit(benchmark::kMillisecond);

}  // namespace
