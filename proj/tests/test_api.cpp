#include <gtest/gtest.h>

#include "microsctp/api.hpp"
#include "microsctp/error.hpp"
#include "microsctp/sim.hpp"

namespace microsctp {
namespace {

const Address kServer = Address::parse("10.0.0.1:9899");
const Address kServerAlt = Address::parse("10.0.1.1:9899");
const Address kClient = Address::parse("10.0.0.2:40000");
const Address kClient2 = Address::parse("10.0.0.3:40000");

Errc errc_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.errc();
  }
  return Errc{};
}

void echo_on(Endpoint& ep) {
  ep.set_message_handler([&ep](const Message& m) { ep.send_async(m.payload, {m.info.sid, m.info.ppid}, m.info.src); });
}

struct World {
  SimNetwork net;
  std::vector<std::string> trace;
  World() {
    net.set_trace([this](const std::string& l) { trace.push_back(l); });
  }
  std::size_t count(const std::string& what) const {
    std::size_t n = 0;
    for (const auto& l : trace) n += l.find(what) != std::string::npos;
    return n;
  }
};

TEST(Api, EchoIdentity) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  echo_on(server);
  Connection conn = dial(w.net.add_host("c", {kClient}), {kServer});
  conn.send("paard", SendInfo{3, 99});
  Message m = conn.recv_message();
  EXPECT_EQ(m.text(), "paard");
  EXPECT_EQ(m.info.sid, 3);
  EXPECT_EQ(m.info.ppid, 99u);
  EXPECT_EQ(m.info.ssn, 0);
  EXPECT_EQ(m.info.src, kServer);
  EXPECT_EQ(m.info.aid, conn.aid());
  EXPECT_EQ(conn.state(), AssocState::Established);
}

TEST(Api, StreamsNegotiatedThroughOptions) {
  World w;
  InitOptions o;
  o.num_out_streams = 4;
  o.max_in_streams = 4;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  Connection conn = dial(w.net.add_host("c", {kClient}), {kServer}, o);
  conn.wait_established();
  EXPECT_EQ(conn.outbound_streams(), 4);
  EXPECT_EQ(conn.inbound_streams(), 4);
  EXPECT_EQ(errc_of([&] { conn.send("x", SendInfo{4, 0}); }), Errc::InvalidStream);
  EXPECT_NO_THROW(conn.send("x", SendInfo{3, 0}));
}

TEST(Api, TwoClientsGetDistinctAssociations) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  echo_on(server);
  Connection c1 = dial(w.net.add_host("c1", {kClient}), {kServer});
  Connection c2 = dial(w.net.add_host("c2", {kClient2}), {kServer});
  c1.send("one");
  c2.send("two");
  EXPECT_EQ(c1.recv_message().text(), "one");
  EXPECT_EQ(c2.recv_message().text(), "two");
  const auto aids = server.associations();
  ASSERT_EQ(aids.size(), 2u);
  EXPECT_NE(aids[0], aids[1]);
  EXPECT_EQ(server.stats().associations_created, 2u);
}

TEST(Api, MultihomedListenerAdvertisesAllAddresses) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer, kServerAlt}));
  Connection conn = dial(w.net.add_host("c", {kClient}), {kServer});
  conn.wait_established();
  EXPECT_EQ(server.local_addresses().size(), 2u);
  EXPECT_EQ(w.count("SEND INIT_ACK"), 1u);
  // The client now knows both; the alternate becomes reachable for failover.
  w.net.set_path_up(kServer, kClient, false);
  for (int i = 0; i < 20; ++i) conn.send_async(Bytes{static_cast<std::uint8_t>(i)});
  server.set_message_handler({});
  int got = 0;
  while (got < 20) {
    auto m = server.recv_for(Millis{120'000});
    ASSERT_TRUE(m);
    ++got;
  }
  EXPECT_GE(w.count("10.0.0.2:40000->10.0.1.1:9899 SEND DATA"), 1u);
}

TEST(Api, OneToManyNeedsDestination) {
  World w;
  Endpoint ep = listen(w.net.add_host("s", {kServer}));
  EXPECT_EQ(errc_of([&] { ep.send("x"); }), Errc::InvalidArgument);
}

TEST(Api, OneToManyImplicitSetup) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  echo_on(server);
  Endpoint peer = listen(w.net.add_host("p", {kClient}));
  peer.send("implicit", {}, kServer);
  EXPECT_EQ(peer.recv_message().text(), "implicit");
  EXPECT_EQ(peer.association_count(), 1u);
  peer.send("again", {}, kServer);
  EXPECT_EQ(peer.recv_message().text(), "again");
  EXPECT_EQ(peer.association_count(), 1u);
}

TEST(Api, MessageValidation) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  Connection conn = dial(w.net.add_host("c", {kClient}), {kServer});
  EXPECT_EQ(errc_of([&] { conn.send(""); }), Errc::EmptyMessage);
  EXPECT_EQ(errc_of([&] { conn.send(Bytes(kReassemblyCap + 1)); }), Errc::MessageTooBig);
}

TEST(Api, NonBlockingReceive) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  EXPECT_EQ(errc_of([&] { server.recv_message(false); }), Errc::WouldBlock);
  EXPECT_FALSE(server.recv_for(Millis{100}).has_value());
}

TEST(Api, ClosedAfterCloseAndIdempotent) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  Connection conn = dial(w.net.add_host("c", {kClient}), {kServer});
  conn.send("bye");
  conn.close();
  conn.close();
  EXPECT_EQ(conn.state(), AssocState::Closed);
  EXPECT_EQ(conn.close_reason(), std::optional<CloseReason>{CloseReason::Graceful});
  EXPECT_EQ(errc_of([&] { conn.recv_message(); }), Errc::Closed);
  EXPECT_EQ(errc_of([&] { conn.send("late"); }), Errc::NotConnected);
  // The server saw the data and the graceful close.
  EXPECT_EQ(server.recv_message().text(), "bye");
  w.net.advance(Millis{100});
  EXPECT_EQ(server.association_count(), 0u);
  bool closed_note = false;
  for (const auto& n : server.take_notifications()) {
    closed_note |= n.kind == Notification::Kind::Closed && n.reason == CloseReason::Graceful;
  }
  EXPECT_TRUE(closed_note);
}

TEST(Api, ShutdownGuardForcesClose) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  Connection conn = dial(w.net.add_host("c", {kClient}), {kServer});
  conn.wait_established();
  w.net.set_path_up(kServer, kClient, false);
  conn.send("stuck");
  const Millis start = w.net.now();
  conn.close();
  EXPECT_EQ(conn.close_reason(), std::optional<CloseReason>{CloseReason::GuardExpired});
  EXPECT_EQ(w.net.now() - start, Millis{5000});
}

TEST(Api, AbortTearsDownBothSides) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  Connection conn = dial(w.net.add_host("c", {kClient}), {kServer});
  conn.wait_established();
  const AssocId aid = server.associations().at(0);
  conn.abort();
  EXPECT_EQ(conn.close_reason(), std::optional<CloseReason>{CloseReason::LocalAbort});
  w.net.advance(Millis{100});
  EXPECT_EQ(server.close_reason(aid), std::optional<CloseReason>{CloseReason::PeerAbort});
}

TEST(Api, OneToOneRefusesSecondInit) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  auto client_host = w.net.add_host("c", {kClient});
  Connection conn = dial(client_host, {kServer});
  conn.wait_established();
  // A second peer tries to open an association towards the one-to-one client.
  Connection intruder = dial(w.net.add_host("x", {kClient2}), {kClient});
  EXPECT_EQ(errc_of([&] { intruder.wait_established(); }), Errc::Refused);
  EXPECT_EQ(conn.stats().inits_rejected, 1u);
  EXPECT_EQ(conn.state(), AssocState::Established);
}

TEST(Api, HandshakeTimeoutAgainstSilentPeer) {
  World w;
  w.net.add_host("silent", {kServer});
  InitOptions o;
  o.max_init_attempts = 2;
  o.init_timeout = Millis{50};
  Connection conn = dial(w.net.add_host("c", {kClient}), {kServer}, o);
  EXPECT_EQ(errc_of([&] { conn.wait_established(); }), Errc::Timeout);
  EXPECT_EQ(w.net.now(), Millis{150});
  EXPECT_EQ(conn.close_reason(), std::optional<CloseReason>{CloseReason::Timeout});
}

TEST(Api, SpoofedInitsAllocateNothing) {
  World w;
  w.net.set_trace({});
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  for (std::uint32_t i = 0; i < 500; ++i) {
    wire::InitChunk init;
    init.initiate_tag = i + 1;
    const Bytes pkt = wire::encode_packet(wire::CommonHeader{5, 9899, 0, 0}, std::vector<wire::Chunk>{init});
    w.net.inject(pkt, Address{0xC0000000u + i, 5}, kServer);
  }
  w.net.advance(Millis{100});
  EXPECT_EQ(server.association_count(), 0u);
  EXPECT_EQ(server.stats().init_acks_sent, 500u);
  EXPECT_EQ(server.stats().associations_created, 0u);
}

TEST(Api, GarbageIsCountedNotFatal) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  w.net.inject(Bytes{1, 2, 3}, kClient, kServer);
  wire::DataChunk d{1, 0, 0, 0, true, true, {1}};
  w.net.inject(wire::encode_packet(wire::CommonHeader{40000, 9899, 1234, 0}, std::vector<wire::Chunk>{d}), kClient,
               kServer);
  w.net.advance(Millis{100});
  const auto st = server.stats();
  EXPECT_EQ(st.decode_errors, 1u);
  EXPECT_EQ(st.out_of_the_blue, 1u);
  EXPECT_EQ(server.association_count(), 0u);
}

TEST(Api, WrongTagFromKnownPeerDropped) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  Connection conn = dial(w.net.add_host("c", {kClient}), {kServer});
  conn.wait_established();
  wire::DataChunk d{1, 0, 0, 0, true, true, {1}};
  w.net.inject(wire::encode_packet(wire::CommonHeader{40000, 9899, 0xDEAD, 0}, std::vector<wire::Chunk>{d}), kClient,
               kServer);
  w.net.advance(Millis{100});
  EXPECT_EQ(server.stats().bad_tag, 1u);
  EXPECT_FALSE(server.recv_for(Millis{10}).has_value());
}

std::size_t data_packets(bool no_delay) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  InitOptions o;
  o.no_delay = no_delay;
  Connection conn = dial(w.net.add_host("c", {kClient}), {kServer}, o);
  conn.wait_established();
  w.trace.clear();
  for (int i = 0; i < 10; ++i) conn.send_async(Bytes(20, static_cast<std::uint8_t>(i)));
  for (int i = 0; i < 10; ++i) EXPECT_TRUE(server.recv_for(Millis{1000}));
  return w.count("40000->10.0.0.1:9899 SEND DATA");
}

TEST(Api, NoDelayControlsBundling) {
  EXPECT_EQ(data_packets(true), 10u);
  EXPECT_EQ(data_packets(false), 1u);
}

TEST(Api, TrySendWouldBlockWhenBufferFull) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  Tuning t;
  t.send_buffer = 4000;
  Connection conn = dial(w.net.add_host("c", {kClient}), {kServer}, {}, {}, t);
  conn.wait_established();
  conn.try_send(Bytes(3000, 1));
  EXPECT_EQ(errc_of([&] { conn.try_send(Bytes(3000, 2)); }), Errc::WouldBlock);
  conn.send(Bytes(3000, 3));  // blocks until the first is acknowledged
  EXPECT_EQ(server.recv_message().payload, Bytes(3000, 1));
  EXPECT_EQ(server.recv_message().payload, Bytes(3000, 3));
}

TEST(Api, BindFailureForForeignAddress) {
  World w;
  auto host = w.net.add_host("s", {kServer});
  EXPECT_EQ(errc_of([&] { listen(host, {}, {kServerAlt}); }), Errc::BindFailure);
  InitOptions bad;
  bad.num_out_streams = 0;
  EXPECT_EQ(errc_of([&] { listen(host, bad); }), Errc::InvalidArgument);
}

TEST(Api, PartialMessageNotification) {
  World w;
  Endpoint server = listen(w.net.add_host("s", {kServer}));
  Connection conn = dial(w.net.add_host("c", {kClient}), {kServer});
  conn.wait_established();
  int seen = 0;
  w.net.set_drop_filter([&](const Address& s, const Address&, std::span<const std::uint8_t> d) {
    // Drop the second DATA packet of the message once.
    if (s != kClient || describe_datagram(d).rfind("DATA", 0) != 0) return false;
    return ++seen == 2;
  });
  conn.send(Bytes(4000, 5));
  EXPECT_EQ(server.recv_message().payload, Bytes(4000, 5));
  bool partial = false;
  for (const auto& n : server.take_notifications()) partial |= n.kind == Notification::Kind::PartialMessage;
  EXPECT_TRUE(partial);
}

}  // namespace
}  // namespace microsctp
