#pragma once

// The `microsctp` command: echo-server, echo-client and bench. Each command
// is a plain function so tests can drive it without a process boundary.

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "microsctp/sim.hpp"
#include "microsctp/types.hpp"

namespace microsctp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitBindFailure = 2;
inline constexpr int kExitHandshakeTimeout = 3;
inline constexpr int kExitEchoMismatch = 4;

enum class TransportKind { Sim, Udp };
enum class Profile { Lossless, Lossy, Failover };

/// Link model used by the simulated runs of each profile.
SimLinkConfig profile_link(Profile p);

struct ServerArgs {
  std::vector<Address> listen;  // default 0.0.0.0:<port> (UDP) or the simulated server address
  std::uint16_t streams = 10;
  TransportKind transport = TransportKind::Udp;
  std::uint16_t port = 9899;
  std::string trace;  // sim only
  bool verbose = false;
};

struct ClientArgs {
  std::vector<Address> connect;  // default 127.0.0.1:<port> (UDP) or the simulated server address
  std::string message = "Hello world!";
  std::uint16_t sid = 0;
  int count = 1;
  std::uint16_t streams = 10;
  TransportKind transport = TransportKind::Udp;
  std::uint16_t port = 9899;
  Profile profile = Profile::Lossless;  // sim only
  int max_init_attempts = 8;
  std::int64_t init_timeout_ms = 1000;
  std::int64_t echo_timeout_ms = 30'000;
  bool silent_peer = false;  // sim only: the server host never answers
  std::string trace;
};

struct BenchArgs {
  std::size_t size = 100;
  int count = 10'000;
  std::uint16_t streams = 1;
  Profile profile = Profile::Lossless;
  TransportKind transport = TransportKind::Sim;
  bool no_delay = false;
  std::int64_t timeout_ms = 120'000;
  std::string trace;
};

struct BenchReport {
  std::uint64_t messages_sent = 0;
  std::uint64_t messages_received = 0;
  std::uint64_t bytes = 0;
  std::int64_t wall_ms = 0;
  std::uint64_t msgs_per_sec = 0;
  std::map<std::uint16_t, std::uint64_t> per_stream_counts;
  std::uint64_t failovers = 0;
  std::uint64_t out_of_order = 0;  // messages that broke their stream's sequence
  std::uint64_t corrupted = 0;     // wrong length or content
  std::int64_t virtual_ms = 0;     // simulated runs only

  bool lossless() const {
    return messages_received == messages_sent && out_of_order == 0 && corrupted == 0;
  }
};

/// `bench msgs=<n> bytes=<n> ms=<n> rate=<n>`
std::string bench_line(const BenchReport& r);
std::string bench_table(const BenchReport& r, const BenchArgs& args);

BenchReport run_bench(const BenchArgs& args);

int cmd_echo_server(const ServerArgs& args, std::istream& in, std::ostream& out, std::ostream& err,
                    const std::atomic<bool>& stop);
int cmd_echo_client(const ClientArgs& args, std::ostream& out, std::ostream& err);
int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err);

/// Parses argv and runs one subcommand; returns the exit code.
int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err,
        const std::atomic<bool>& stop);

}  // namespace microsctp::cli
