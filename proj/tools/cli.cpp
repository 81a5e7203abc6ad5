#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "microsctp/api.hpp"
#include "microsctp/error.hpp"
#include "microsctp/udp.hpp"

namespace microsctp::cli {

namespace {

const Address kSimServer = Address::parse("10.0.0.1:9899");
const Address kSimServerAlt = Address::parse("10.0.1.1:9899");
const Address kSimClient = Address::parse("10.0.0.2:40000");
const Address kSimClientAlt = Address::parse("10.0.1.2:40000");

using Steady = std::chrono::steady_clock;

std::int64_t elapsed_ms(Steady::time_point since) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Steady::now() - since).count();
}

/// A simulated network with an optional trace file.
struct SimWorld {
  SimNetwork net;
  std::ofstream trace_file;

  SimWorld(SimLinkConfig link, const std::string& trace) : net(link) {
    if (trace.empty()) return;
    trace_file.open(trace);
    if (!trace_file) throw Error(Errc::InvalidArgument, "cannot open trace file " + trace);
    net.set_trace([this](const std::string& line) { trace_file << line << '\n'; });
  }

  /// Cuts every link touching `addr`.
  void cut(const Address& addr, const std::vector<Address>& peers) {
    for (const auto& p : peers) net.set_path_up(addr, p, false);
  }
};

/// Prints `stream <sid>: <payload>` and echoes on the same stream.
class EchoService {
 public:
  EchoService(Endpoint& ep, std::ostream* out, std::ostream& err, bool verbose)
      : ep_(ep), out_(out), err_(err), verbose_(verbose) {}

  void operator()(const Message& m) {
    {
      std::lock_guard lock(mu_);
      if (out_) *out_ << "stream " << m.info.sid << ": " << m.text() << std::endl;
      if (verbose_ && seen_.insert(m.info.aid).second) {
        err_ << "aid " << m.info.aid << " from " << m.info.src.to_string() << std::endl;
      }
    }
    try {
      ep_.send_async(m.payload, SendInfo{m.info.sid, m.info.ppid}, m.info.src);
    } catch (const Error& e) {
      std::lock_guard lock(mu_);
      err_ << "aid " << m.info.aid << ": echo on stream " << m.info.sid << " dropped: " << e.what() << std::endl;
    }
  }

 private:
  Endpoint& ep_;
  std::ostream* out_;
  std::ostream& err_;
  bool verbose_;
  std::mutex mu_;
  std::set<AssocId> seen_;
};

InitOptions stream_options(std::uint16_t streams) {
  InitOptions o;
  o.num_out_streams = streams;
  o.max_in_streams = streams;
  return o;
}

int exit_code_for(const Error& e) {
  switch (e.errc()) {
    case Errc::BindFailure: return kExitBindFailure;
    case Errc::Timeout: return kExitHandshakeTimeout;
    default: return kExitError;
  }
}

}  // namespace

SimLinkConfig profile_link(Profile p) {
  SimLinkConfig c;
  c.delay = Millis{10};
  if (p == Profile::Lossy) {
    c.loss_rate = 0.1;
    c.reorder_rate = 0.05;
    c.jitter = Millis{5};
  }
  return c;
}

// ---------------------------------------------------------------------------
// echo-server

int cmd_echo_server(const ServerArgs& args, std::istream& in, std::ostream& out, std::ostream& err,
                    const std::atomic<bool>& stop) {
  const InitOptions options = stream_options(args.streams);
  try {
    if (args.transport == TransportKind::Sim) {
      // The simulated server is paired with an in-process client that sends
      // each input line on stream 0 and waits for its echo.
      SimWorld world(profile_link(Profile::Lossless), args.trace);
      const auto listen_addrs = args.listen.empty() ? std::vector<Address>{kSimServer} : args.listen;
      auto server = world.net.add_host("server", listen_addrs);
      auto client = world.net.add_host("client", {kSimClient});
      Endpoint ep = listen(server, options);
      EchoService echo(ep, &out, err, args.verbose);
      ep.set_message_handler([&echo](const Message& m) { echo(m); });

      Connection conn = dial(client, {listen_addrs.front()});
      std::string line;
      while (!stop.load() && std::getline(in, line)) {
        if (line.empty()) continue;
        conn.send(line);
        auto reply = conn.recv_for(Millis{60'000});
        if (!reply || reply->text() != line) {
          err << "echo mismatch for '" << line << "'\n";
          ep.set_message_handler({});
          return kExitEchoMismatch;
        }
      }
      conn.close();
      ep.close();
      ep.set_message_handler({});
      return kExitOk;
    }

    const auto listen_addrs =
        args.listen.empty() ? std::vector<Address>{Address{0, args.port}} : args.listen;
    auto transport = UdpTransport::bind(listen_addrs);
    Endpoint ep = listen(transport, options);
    EchoService echo(ep, &out, err, args.verbose);
    ep.set_message_handler([&echo](const Message& m) { echo(m); });
    err << "listening on";
    for (const auto& a : transport->local_addresses()) err << ' ' << a.to_string();
    err << std::endl;
    while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    ep.set_message_handler({});
    ep.close();
    return kExitOk;
  } catch (const Error& e) {
    err << "echo-server: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

// ---------------------------------------------------------------------------
// echo-client

int cmd_echo_client(const ClientArgs& args, std::ostream& out, std::ostream& err) {
  InitOptions options = stream_options(args.streams);
  options.max_init_attempts = args.max_init_attempts;
  options.init_timeout = Millis{args.init_timeout_ms};
  if (args.count < 1) {
    err << "echo-client: --count must be >= 1\n";
    return kExitError;
  }

  std::unique_ptr<SimWorld> world;
  std::shared_ptr<Transport> server_transport;
  std::optional<Endpoint> server;
  std::unique_ptr<EchoService> echo;
  std::shared_ptr<Transport> transport;
  std::vector<Address> remote = args.connect;
  std::vector<Address> client_addrs;

  auto teardown = [&] {
    if (server) server->set_message_handler({});
  };

  try {
    if (args.transport == TransportKind::Sim) {
      world = std::make_unique<SimWorld>(profile_link(args.profile), args.trace);
      const bool multihomed = args.profile == Profile::Failover;
      if (remote.empty()) {
        remote = {kSimServer};
        if (multihomed) remote.push_back(kSimServerAlt);
      }
      client_addrs = {kSimClient};
      if (multihomed) client_addrs.push_back(kSimClientAlt);
      server_transport = world->net.add_host("server", remote);
      transport = world->net.add_host("client", client_addrs);
      if (!args.silent_peer) {
        server.emplace(listen(server_transport, stream_options(args.streams)));
        echo = std::make_unique<EchoService>(*server, nullptr, err, false);
        server->set_message_handler([e = echo.get()](const Message& m) { (*e)(m); });
      }
    } else {
      if (remote.empty()) remote = {Address::parse("127.0.0.1", args.port)};
      transport = UdpTransport::bind({Address{0, 0}});
    }

    Connection conn = dial(transport, remote, options);
    const Bytes payload(args.message.begin(), args.message.end());
    for (int i = 0; i < args.count; ++i) {
      conn.send(payload, SendInfo{args.sid, 0});
      if (world && args.profile == Profile::Failover && i == args.count / 2) {
        world->cut(remote.front(), client_addrs);
      }
    }
    for (int i = 0; i < args.count; ++i) {
      auto m = conn.recv_for(Millis{args.echo_timeout_ms});
      if (!m) {
        err << "echo-client: " << i << "/" << args.count << " echoes before timeout\n";
        teardown();
        return kExitEchoMismatch;
      }
      const auto expected_ssn = static_cast<std::uint16_t>(i);
      if (m->payload != payload || m->info.sid != args.sid || m->info.ssn != expected_ssn) {
        err << "echo-client: echo " << i << " mismatch (stream " << m->info.sid << ", ssn " << m->info.ssn
            << ", " << m->payload.size() << " bytes)\n";
        teardown();
        return kExitEchoMismatch;
      }
    }
    out << "echoed " << args.count << "/" << args.count << '\n';
    conn.close();
    if (server) server->close();
    teardown();
    return kExitOk;
  } catch (const Error& e) {
    err << "echo-client: " << e.what() << '\n';
    teardown();
    return exit_code_for(e);
  }
}

// ---------------------------------------------------------------------------
// bench

namespace {

void fill_payload(Bytes& p, std::uint64_t seq) {
  for (std::size_t j = 0; j < p.size(); ++j) {
    p[j] = j < 8 ? static_cast<std::uint8_t>(seq >> (8 * j)) : static_cast<std::uint8_t>(seq + j);
  }
}

/// Server side of the bench: verifies per-stream sequence and content.
class BenchSink {
 public:
  explicit BenchSink(std::size_t size) : size_(size) {}

  void operator()(const Message& m) {
    std::lock_guard lock(mu_);
    ++received_;
    bytes_ += m.payload.size();
    ++per_stream_[m.info.sid];
    if (m.payload.size() != size_) {
      ++corrupted_;
      return;
    }
    if (size_ < 8) return;
    std::uint64_t seq = 0;
    for (int j = 0; j < 8; ++j) seq |= static_cast<std::uint64_t>(m.payload[j]) << (8 * j);
    Bytes expect(size_);
    fill_payload(expect, seq);
    if (expect != m.payload) ++corrupted_;
    auto& next = next_[m.info.sid];
    if (seq != next) ++out_of_order_;
    next = seq + 1;
  }

  std::uint64_t received() const {
    std::lock_guard lock(mu_);
    return received_;
  }

  void report(BenchReport& r) const {
    std::lock_guard lock(mu_);
    r.messages_received = received_;
    r.bytes = bytes_;
    r.per_stream_counts = per_stream_;
    r.out_of_order = out_of_order_;
    r.corrupted = corrupted_;
  }

 private:
  std::size_t size_;
  mutable std::mutex mu_;
  std::uint64_t received_ = 0;
  std::uint64_t bytes_ = 0;
  std::uint64_t out_of_order_ = 0;
  std::uint64_t corrupted_ = 0;
  std::map<std::uint16_t, std::uint64_t> per_stream_;
  std::map<std::uint16_t, std::uint64_t> next_;
};

}  // namespace

BenchReport run_bench(const BenchArgs& args) {
  if (args.size == 0 || args.count < 1 || args.streams < 1) throw Error(Errc::InvalidArgument, "bad bench arguments");

  std::unique_ptr<SimWorld> world;
  std::shared_ptr<Transport> server_t;
  std::shared_ptr<Transport> client_t;
  std::vector<Address> server_addrs;
  std::vector<Address> client_addrs;
  const bool multihomed = args.profile == Profile::Failover;

  if (args.transport == TransportKind::Sim) {
    world = std::make_unique<SimWorld>(profile_link(args.profile), args.trace);
    server_addrs = {kSimServer};
    client_addrs = {kSimClient};
    if (multihomed) {
      server_addrs.push_back(kSimServerAlt);
      client_addrs.push_back(kSimClientAlt);
    }
    server_t = world->net.add_host("server", server_addrs);
    client_t = world->net.add_host("client", client_addrs);
  } else {
    const Address lo = Address::parse("127.0.0.1:0");
    server_t = UdpTransport::bind({lo});
    client_t = UdpTransport::bind({lo});
    server_addrs = server_t->local_addresses();
    client_addrs = client_t->local_addresses();
  }

  InitOptions options = stream_options(args.streams);
  options.no_delay = args.no_delay;

  BenchSink sink(args.size);
  Endpoint server = listen(server_t, options);
  server.set_message_handler([&sink](const Message& m) { sink(m); });
  Connection conn = dial(client_t, server_addrs, options);

  BenchReport r;
  const auto wall_start = Steady::now();
  const Millis virtual_start = server_t->clock().now();
  std::vector<std::uint64_t> seq(args.streams, 0);
  Bytes payload(args.size);
  for (int i = 0; i < args.count; ++i) {
    const auto sid = static_cast<std::uint16_t>(i % args.streams);
    fill_payload(payload, seq[sid]++);
    conn.send(payload, SendInfo{sid, 0});
    ++r.messages_sent;
    if (world && multihomed && i == args.count / 2) world->cut(server_addrs.front(), client_addrs);
  }

  // Wait on the receiving side's clock: its handler runs after each delivery.
  const auto target = static_cast<std::uint64_t>(args.count);
  const auto deadline = Steady::now() + std::chrono::milliseconds(args.timeout_ms);
  const Millis virtual_deadline = server_t->clock().now() + Millis{args.timeout_ms};
  while (sink.received() < target) {
    if (world ? server_t->clock().now() >= virtual_deadline : Steady::now() >= deadline) break;
    server_t->clock().wait_until([&] { return sink.received() >= target; }, Millis{100});
  }
  if (world && multihomed) {
    // Keep the association up until the dead primary is declared inactive.
    server_t->clock().wait_until([&] { return conn.stats().failovers > 0; }, Millis{args.timeout_ms});
  }
  r.wall_ms = elapsed_ms(wall_start);
  if (world) r.virtual_ms = (server_t->clock().now() - virtual_start).count();
  sink.report(r);
  r.msgs_per_sec = r.wall_ms > 0 ? r.messages_received * 1000 / static_cast<std::uint64_t>(r.wall_ms)
                                 : r.messages_received * 1000;
  r.failovers = conn.stats().failovers + server.stats().failovers;
  if (r.messages_received == target) {
    conn.close();
    server.close();
  } else {
    conn.abort();
    server.abort();
  }
  server.set_message_handler({});
  return r;
}

std::string bench_line(const BenchReport& r) {
  std::ostringstream s;
  s << "bench msgs=" << r.messages_received << " bytes=" << r.bytes << " ms=" << r.wall_ms
    << " rate=" << r.msgs_per_sec;
  return s.str();
}

std::string bench_table(const BenchReport& r, const BenchArgs& args) {
  std::ostringstream s;
  auto row = [&](const std::string& k, const auto& v) { s << std::left << std::setw(20) << k << v << '\n'; };
  row("transport", args.transport == TransportKind::Sim ? "sim" : "udp");
  row("message size", args.size);
  row("messages sent", r.messages_sent);
  row("messages received", r.messages_received);
  row("bytes", r.bytes);
  row("wall ms", r.wall_ms);
  if (args.transport == TransportKind::Sim) row("virtual ms", r.virtual_ms);
  row("msgs/sec", r.msgs_per_sec);
  row("failovers", r.failovers);
  row("out of order", r.out_of_order);
  row("corrupted", r.corrupted);
  for (const auto& [sid, n] : r.per_stream_counts) row("stream " + std::to_string(sid), n);
  return s.str();
}

int cmd_bench(const BenchArgs& args, std::ostream& out, std::ostream& err) {
  try {
    const BenchReport r = run_bench(args);
    out << bench_table(r, args) << bench_line(r) << '\n';
    if (!r.lossless()) {
      err << "bench: " << (r.messages_sent - r.messages_received) << " messages missing, " << r.out_of_order
          << " out of order, " << r.corrupted << " corrupted\n";
      return kExitError;
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "bench: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

// ---------------------------------------------------------------------------

namespace {

const std::map<std::string, Profile> kProfiles{
    {"lossless", Profile::Lossless}, {"lossy", Profile::Lossy}, {"failover", Profile::Failover}};

void add_transport_flags(CLI::App* cmd, bool& sim, bool& udp) {
  auto* s = cmd->add_flag("--sim", sim, "Run on the deterministic simulated network");
  auto* u = cmd->add_flag("--udp", udp, "Run over real UDP sockets");
  s->excludes(u);
}

}  // namespace

int run(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err,
        const std::atomic<bool>& stop) {
  CLI::App app{"Userland SCTP over UDP or a simulated network"};
  app.name("microsctp");
  app.require_subcommand(1);

  ServerArgs sa;
  std::string server_listen;
  bool server_sim = false, server_udp = false;
  auto* server = app.add_subcommand("echo-server", "Print and echo every received message");
  server->add_option("--listen", server_listen, "Local address list addr[,addr2]");
  server->add_option("--streams", sa.streams, "Inbound and outbound stream count")->check(CLI::Range(1, 65535));
  server->add_option("--port", sa.port, "Default UDP port");
  server->add_option("--trace", sa.trace, "Packet trace file (simulated network)");
  server->add_flag("--verbose,-v", sa.verbose, "Log new associations to stderr");
  add_transport_flags(server, server_sim, server_udp);

  ClientArgs ca;
  std::string client_connect;
  std::string client_profile = "lossless";
  bool client_sim = false, client_udp = false;
  auto* client = app.add_subcommand("echo-client", "Send messages and verify their echoes");
  client->add_option("--connect", client_connect, "Server address list addr[,addr2]");
  client->add_option("--message", ca.message, "Payload to send");
  client->add_option("--sid", ca.sid, "Stream to send on");
  client->add_option("--count", ca.count, "Number of messages")->check(CLI::PositiveNumber);
  client->add_option("--streams", ca.streams, "Requested stream count")->check(CLI::Range(1, 65535));
  client->add_option("--port", ca.port, "Default UDP port");
  client->add_option("--profile", client_profile, "Simulated link profile")
      ->check(CLI::IsMember({"lossless", "lossy", "failover"}));
  client->add_option("--max-init-attempts", ca.max_init_attempts, "Handshake attempts")->check(CLI::PositiveNumber);
  client->add_option("--init-timeout", ca.init_timeout_ms, "Initial handshake timeout, ms")
      ->check(CLI::PositiveNumber);
  client->add_option("--echo-timeout", ca.echo_timeout_ms, "Wait per echo, ms")->check(CLI::PositiveNumber);
  client->add_flag("--silent-peer", ca.silent_peer, "Simulated server never answers");
  client->add_option("--trace", ca.trace, "Packet trace file (simulated network)");
  add_transport_flags(client, client_sim, client_udp);

  BenchArgs ba;
  std::string bench_profile = "lossless";
  bool bench_sim = false, bench_udp = false, bench_bundle = false;
  auto* bench = app.add_subcommand("bench", "Flood messages to an in-process receiver and report throughput");
  bench->add_option("--size", ba.size, "Message size in bytes")->check(CLI::Range(1, 2 * 1024 * 1024));
  bench->add_option("--count", ba.count, "Number of messages")->check(CLI::PositiveNumber);
  bench->add_option("--streams", ba.streams, "Streams used round-robin")->check(CLI::Range(1, 65535));
  bench->add_option("--profile", bench_profile, "Simulated link profile")
      ->check(CLI::IsMember({"lossless", "lossy", "failover"}));
  bench->add_option("--timeout", ba.timeout_ms, "Give up after this many ms")->check(CLI::PositiveNumber);
  bench->add_option("--trace", ba.trace, "Packet trace file (simulated network)");
  bench->add_flag("--bundle", bench_bundle, "Let small messages share packets (no_delay off)");
  add_transport_flags(bench, bench_sim, bench_udp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (server->parsed()) {
      if (!server_listen.empty()) sa.listen = parse_address_list(server_listen, sa.port);
      sa.transport = server_sim ? TransportKind::Sim : TransportKind::Udp;
      return cmd_echo_server(sa, in, out, err, stop);
    }
    if (client->parsed()) {
      if (!client_connect.empty()) ca.connect = parse_address_list(client_connect, ca.port);
      ca.transport = client_sim ? TransportKind::Sim : TransportKind::Udp;
      ca.profile = kProfiles.at(client_profile);
      return cmd_echo_client(ca, out, err);
    }
    ba.transport = bench_udp ? TransportKind::Udp : TransportKind::Sim;
    ba.profile = kProfiles.at(bench_profile);
    ba.no_delay = !bench_bundle;
    return cmd_bench(ba, out, err);
  } catch (const Error& e) {
    err << "microsctp: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace microsctp::cli
