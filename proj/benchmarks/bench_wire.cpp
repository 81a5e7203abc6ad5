#include <benchmark/benchmark.h>

#include <random>

#include "microsctp/wire.hpp"

namespace {

using namespace microsctp;

Bytes random_bytes(std::size_t n) {
  std::mt19937_64 rng(n);
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

void BM_Crc32c(benchmark::State& state) {
  const Bytes data = random_bytes(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(wire::crc32c(data));
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Crc32c)->Arg(64)->Arg(1232)->Arg(65536);

// One full-MTU packet of DATA chunks, `range(0)` of them.
wire::Packet data_packet(int chunks) {
  wire::Packet p{{5000, 9899, 0x1234, 0}, {}};
  const std::size_t each = 1184 / chunks - 16;
  for (int i = 0; i < chunks; ++i) {
    p.chunks.push_back(wire::DataChunk{static_cast<std::uint32_t>(i), 0, static_cast<std::uint16_t>(i), 0, true, true,
                                       random_bytes(each)});
  }
  return p;
}

void BM_EncodePacket(benchmark::State& state) {
  const auto p = data_packet(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(wire::encode_packet(p));
}
BENCHMARK(BM_EncodePacket)->Arg(1)->Arg(8)->Arg(32);

void BM_DecodePacket(benchmark::State& state) {
  const Bytes b = wire::encode_packet(data_packet(static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(wire::decode_packet(b));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(b.size()));
}
BENCHMARK(BM_DecodePacket)->Arg(1)->Arg(8)->Arg(32);

}  // namespace
