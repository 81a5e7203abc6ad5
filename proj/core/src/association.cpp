#include "microsctp/association.hpp"

#include <algorithm>
#include <limits>

#include "microsctp/error.hpp"

namespace microsctp {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool post_handshake(AssocState s) {
  return s != AssocState::Closed && s != AssocState::CookieWait && s != AssocState::CookieEchoed;
}

}  // namespace

const char* to_string(AssocState s) noexcept {
  switch (s) {
    case AssocState::Closed: return "CLOSED";
    case AssocState::CookieWait: return "COOKIE_WAIT";
    case AssocState::CookieEchoed: return "COOKIE_ECHOED";
    case AssocState::Established: return "ESTABLISHED";
    case AssocState::ShutdownPending: return "SHUTDOWN_PENDING";
    case AssocState::ShutdownSent: return "SHUTDOWN_SENT";
    case AssocState::ShutdownReceived: return "SHUTDOWN_RECEIVED";
    case AssocState::ShutdownAckSent: return "SHUTDOWN_ACK_SENT";
  }
  return "?";
}

const char* to_string(TimerKind k) noexcept {
  switch (k) {
    case TimerKind::InitRetransmit: return "init_retransmit";
    case TimerKind::CookieRetransmit: return "cookie_retransmit";
    case TimerKind::Rto: return "rto";
    case TimerKind::Heartbeat: return "heartbeat";
    case TimerKind::ShutdownGuard: return "shutdown_guard";
    case TimerKind::BundleFlush: return "bundle_flush";
  }
  return "?";
}

const char* to_string(CloseReason r) noexcept {
  switch (r) {
    case CloseReason::Graceful: return "graceful";
    case CloseReason::PeerAbort: return "peer abort";
    case CloseReason::Refused: return "refused";
    case CloseReason::LocalAbort: return "local abort";
    case CloseReason::Timeout: return "timeout";
    case CloseReason::RetransmitLimit: return "retransmit limit";
    case CloseReason::ProtocolViolation: return "protocol violation";
    case CloseReason::ResourceLimit: return "resource limit";
    case CloseReason::GuardExpired: return "shutdown guard expired";
  }
  return "?";
}

void InitOptions::validate() const {
  if (num_out_streams == 0 || max_in_streams == 0) throw Error(Errc::InvalidArgument, "stream counts must be >= 1");
  if (max_init_attempts < 1) throw Error(Errc::InvalidArgument, "max_init_attempts must be >= 1");
  if (init_timeout.count() <= 0) throw Error(Errc::InvalidArgument, "init_timeout must be positive");
}

std::uint32_t draw_tag(std::mt19937_64& rng) {
  std::uint32_t tag = 0;
  while (tag == 0) tag = static_cast<std::uint32_t>(rng());
  return tag;
}

// ---------------------------------------------------------------------------
// construction

std::pair<Association, Actions> Association::initiate(AssocId aid, AssocConfig config, std::vector<Address> remote,
                                                      std::uint64_t seed, Millis now) {
  if (remote.empty()) throw Error(Errc::InvalidArgument, "initiate needs at least one remote address");
  config.options.validate();

  Association a;
  a.aid_ = aid;
  a.config_ = std::move(config);
  a.rng_.seed(seed);
  a.local_tag_ = draw_tag(a.rng_);
  a.local_initial_tsn_ = static_cast<std::uint32_t>(a.rng_());
  a.paths_ = PathTable(std::move(remote), 0, a.config_.path_failure_threshold);
  a.state_ = AssocState::CookieWait;
  a.handshake_attempts_ = 1;
  a.handshake_timeout_ = a.config_.options.init_timeout;
  a.last_advertised_rwnd_ = a.local_window();

  Actions out;
  a.queue_control(a.make_init(), a.paths_.path(0).addr);
  a.start_timer({TimerKind::InitRetransmit}, a.handshake_timeout_, out);
  a.emit_packets(out);
  (void)now;
  return {std::move(a), std::move(out)};
}

std::pair<Association, Actions> Association::from_cookie(AssocId aid, AssocConfig config, const StateCookie& cookie,
                                                         const Address& src, std::uint64_t seed, Millis now) {
  Association a;
  a.aid_ = aid;
  a.config_ = std::move(config);
  a.rng_.seed(seed);
  a.local_tag_ = cookie.local_tag;
  a.local_initial_tsn_ = cookie.local_initial_tsn;
  a.paths_ = PathTable({src}, 0, a.config_.path_failure_threshold);
  a.adopt_peer(cookie.peer_initiate_tag, cookie.negotiated_outbound_streams, cookie.negotiated_inbound_streams,
               cookie.peer_initial_tsn, cookie.peer_a_rwnd, src, cookie.peer_addresses);

  Actions out;
  a.queue_control(wire::CookieAckChunk{}, src);
  a.enter_established(out, now);
  a.emit_packets(out);
  return {std::move(a), std::move(out)};
}

void Association::adopt_peer(std::uint32_t peer_tag, std::uint16_t out_streams, std::uint16_t in_streams,
                             std::uint32_t peer_initial_tsn, std::uint32_t peer_rwnd, const Address& src,
                             const std::vector<std::uint32_t>& advertised) {
  peer_tag_ = peer_tag;
  out_streams_.clear();
  for (std::uint16_t i = 0; i < out_streams; ++i) out_streams_.push_back(OutStream{i, 0});
  in_streams_ = InboundStreams(in_streams, config_.reassembly_cap);
  rel_ = ReliabilityState(local_initial_tsn_, peer_initial_tsn, peer_rwnd, config_.reliability);
  paths_.add(src);
  for (auto ip : advertised) paths_.add(Address{ip, src.port});

  // Messages queued before the handshake finished can now be fragmented.
  while (!pre_handshake_.empty()) {
    auto m = std::move(pre_handshake_.front());
    pre_handshake_.pop_front();
    if (m.info.sid >= out_streams_.size()) {
      ++stats_.sends_dropped;
      continue;
    }
    queue_fragments(m);
  }
}

wire::InitChunk Association::make_init() const {
  wire::InitChunk init;
  init.initiate_tag = local_tag_;
  init.a_rwnd = local_window();
  init.outbound_streams = config_.options.num_out_streams;
  init.max_inbound_streams = config_.options.max_in_streams;
  init.initial_tsn = local_initial_tsn_;
  for (const auto& a : config_.local_addrs) {
    if (!a.unspecified()) init.add_ipv4_address(a.ip);
  }
  return init;
}

wire::InitAckChunk make_init_ack(const AssocConfig& config, const wire::InitBody& init, const Address& src,
                                 std::uint32_t local_tag, std::uint32_t local_initial_tsn, Millis now) {
  const StreamLimits local{config.options.num_out_streams, config.options.max_in_streams};
  const StreamLimits negotiated = negotiate_streams(init, local);
  wire::InitAckChunk ack;
  ack.initiate_tag = local_tag;
  ack.a_rwnd = static_cast<std::uint32_t>(std::min<std::size_t>(config.receive_buffer, UINT32_MAX));
  ack.outbound_streams = negotiated.outbound;
  ack.max_inbound_streams = negotiated.max_inbound;
  ack.initial_tsn = local_initial_tsn;
  for (const auto& a : config.local_addrs) {
    if (!a.unspecified()) ack.add_ipv4_address(a.ip);
  }
  ack.params.push_back(wire::Parameter{
      wire::kParamStateCookie, make_cookie(config.secret, init, src, local_tag, local_initial_tsn, local, now)});
  return ack;
}

Actions responder_on_init(const AssocConfig& config, const wire::InitBody& init, const Address& src, Millis now,
                          std::mt19937_64& rng) {
  const std::uint32_t tag = draw_tag(rng);
  const auto tsn = static_cast<std::uint32_t>(rng());
  act::SendPacket reply;
  reply.verification_tag = init.initiate_tag;
  reply.chunks.emplace_back(make_init_ack(config, init, src, tag, tsn, now));
  reply.dest = src;
  return {std::move(reply)};
}

CookieEchoOutcome responder_on_cookie_echo(AssocId aid, const AssocConfig& config, std::span<const std::uint8_t> blob,
                                           std::uint32_t vtag, const Address& src, std::uint64_t seed, Millis now) {
  CookieEchoOutcome outcome;
  StateCookie cookie;
  try {
    cookie = verify_cookie(config.secret, blob, src, now, config.cookie_max_age);
  } catch (const Error& e) {
    outcome.rejected = e.errc();
    return outcome;
  }
  if (cookie.local_tag != vtag) {
    outcome.rejected = Errc::BadMac;
    return outcome;
  }
  auto [assoc, actions] = Association::from_cookie(aid, config, cookie, src, seed, now);
  outcome.assoc = std::move(assoc);
  outcome.actions = std::move(actions);
  return outcome;
}

// ---------------------------------------------------------------------------
// observers

bool Association::established() const { return state_ == AssocState::Established; }

bool Association::accepts_data() const {
  return state_ == AssocState::Established || state_ == AssocState::ShutdownPending ||
         state_ == AssocState::ShutdownSent;
}

std::size_t Association::send_buffered_bytes() const {
  std::size_t n = send_buffer_bytes_ + rel_.in_flight_bytes() + rel_.deferred_bytes();
  for (const auto& m : pre_handshake_) n += m.payload.size();
  return n;
}

std::uint32_t Association::local_window() const {
  const std::size_t used = in_streams_.buffered_bytes() + unread_bytes_;
  if (used >= config_.receive_buffer) return 0;
  return static_cast<std::uint32_t>(std::min<std::size_t>(config_.receive_buffer - used, UINT32_MAX));
}

// ---------------------------------------------------------------------------
// event dispatch

std::pair<Association, Actions> transition(Association assoc, const Event& event, Millis now) {
  Actions actions = assoc.handle(event, now);
  return {std::move(assoc), std::move(actions)};
}

Actions Association::handle(const Event& event, Millis now) {
  Actions out;
  std::visit(overloaded{
                 [&](const ev::InboundChunk& e) {
                   on_chunk(e.chunk, e.src, out, now);
                   if (rel_.sack_pending() && !closed()) queue_sack(e.src, last_local_);
                 },
                 [&](const ev::InboundPacket& e) {
                   if (e.dst) last_local_ = e.dst;
                   for (const auto& c : e.chunks) {
                     on_chunk(c, e.src, out, now);
                     if (closed()) break;
                   }
                   if (rel_.sack_pending() && !closed()) queue_sack(e.src, e.dst ? e.dst : last_local_);
                 },
                 [&](const ev::AppSend& e) { on_app_send(e, out, now); },
                 [&](const ev::AppClose&) { on_app_close(out, now); },
                 [&](const ev::AppAbort&) {
                   if (!closed()) abort_with(CloseReason::LocalAbort, out);
                 },
                 [&](const ev::AppConsumed& e) {
                   unread_bytes_ -= std::min(unread_bytes_, e.bytes);
                   if (!accepts_data() || peer_tag_ == 0) return;
                   const std::uint32_t w = local_window();
                   if (w >= last_advertised_rwnd_ + config_.receive_buffer / 4) {
                     queue_sack(paths_.select_path(), last_local_);
                   }
                 },
                 [&](const ev::TimerFired& e) {
                   // A fire that raced with a stop or restart is stale.
                   if (!armed_.erase(e.id)) return;
                   on_timer(e.id, out, now);
                 },
                 [&](const ev::PathDown& e) {
                   if (auto f = paths_.mark_down(e.addr)) {
                     ++stats_.failovers;
                     out.push_back(act::NotifyPathFailover{aid_, f->from, f->to});
                   }
                 },
                 [&](const ev::PathUp& e) { paths_.mark_up(e.addr); },
             },
             event);
  progress_shutdown(out, now);
  emit_packets(out);
  return out;
}

void Association::on_chunk(const wire::Chunk& chunk, const Address& src, Actions& out, Millis now) {
  const auto type = wire::chunk_type(chunk);
  if (!type) return;  // unknown chunk types are skipped in every state

  if (state_ == AssocState::Closed) {
    // No live association: answer like an endpoint that has never heard of us.
    switch (*type) {
      case wire::ChunkType::Abort:
      case wire::ChunkType::ShutdownComplete:
        return;
      case wire::ChunkType::ShutdownAck:
        if (peer_tag_ != 0) queue_control(wire::ShutdownCompleteChunk{}, src);
        return;
      case wire::ChunkType::Data:
        ++stats_.data_discarded;
        break;
      default:
        ++stats_.violations;
        break;
    }
    if (peer_tag_ != 0) queue_control(wire::AbortChunk{}, src);
    return;
  }

  switch (*type) {
    case wire::ChunkType::Data:
      if (accepts_data()) {
        on_data(std::get<wire::DataChunk>(chunk), src, out);
      } else {
        ++stats_.data_discarded;
      }
      return;

    case wire::ChunkType::Init:
      on_init(std::get<wire::InitChunk>(chunk), src, now);
      return;

    case wire::ChunkType::InitAck:
      if (state_ == AssocState::CookieWait) on_init_ack(std::get<wire::InitAckChunk>(chunk), src, out, now);
      return;  // duplicates in later states are harmless

    case wire::ChunkType::CookieEcho:
      on_cookie_echo(std::get<wire::CookieEchoChunk>(chunk), src, out, now);
      return;

    case wire::ChunkType::CookieAck:
      if (state_ == AssocState::CookieEchoed) {
        enter_established(out, now);
      } else if (state_ == AssocState::CookieWait) {
        violation(src, out);
      }
      return;

    case wire::ChunkType::Sack:
      if (state_ == AssocState::CookieWait) {
        violation(src, out);
      } else if (post_handshake(state_) && state_ != AssocState::ShutdownAckSent) {
        on_sack(std::get<wire::SackChunk>(chunk), src, out, now);
      }
      return;

    case wire::ChunkType::Heartbeat:
      if (state_ == AssocState::CookieWait) {
        violation(src, out);
      } else {
        queue_control(wire::HeartbeatAckChunk{std::get<wire::HeartbeatChunk>(chunk).info}, src);
      }
      return;

    case wire::ChunkType::HeartbeatAck:
      if (state_ == AssocState::CookieWait) {
        violation(src, out);
      } else if (post_handshake(state_)) {
        paths_.on_heartbeat_ack(std::get<wire::HeartbeatAckChunk>(chunk).info);
      }
      return;

    case wire::ChunkType::Abort:
      close_with(post_handshake(state_) ? CloseReason::PeerAbort : CloseReason::Refused, out);
      return;

    case wire::ChunkType::Shutdown:
      if (state_ == AssocState::CookieWait) {
        violation(src, out);
      } else if (post_handshake(state_)) {
        on_shutdown(std::get<wire::ShutdownChunk>(chunk), src, out, now);
      }
      return;

    case wire::ChunkType::ShutdownAck:
      if (state_ == AssocState::ShutdownSent || state_ == AssocState::ShutdownAckSent) {
        queue_control(wire::ShutdownCompleteChunk{}, src);
        close_with(CloseReason::Graceful, out);
      } else {
        violation(src, out);
      }
      return;

    case wire::ChunkType::ShutdownComplete:
      if (state_ == AssocState::ShutdownAckSent) {
        close_with(CloseReason::Graceful, out);
      } else {
        violation(src, out);
      }
      return;
  }
}

// ---------------------------------------------------------------------------
// handshake

void Association::on_init(const wire::InitChunk& init, const Address& src, Millis now) {
  if (state_ != AssocState::CookieWait) return;
  // INIT collision: the higher initiate tag wins. The loser answers the
  // winner's INIT as a listener would, reusing its own tag and TSN.
  if (init.initiate_tag < local_tag_) return;
  act::SendPacket reply;
  reply.verification_tag = init.initiate_tag;
  reply.chunks.emplace_back(make_init_ack(config_, init, src, local_tag_, local_initial_tsn_, now));
  reply.dest = src;
  reply.source = last_local_;
  collision_replies_.push_back(std::move(reply));
}

void Association::on_init_ack(const wire::InitAckChunk& ack, const Address& src, Actions& out, Millis now) {
  const Bytes* cookie = ack.cookie();
  if (cookie == nullptr) return;  // decode rejects this; kept as a guard
  const auto out_streams = std::min(config_.options.num_out_streams, ack.max_inbound_streams);
  const auto in_streams = std::min(config_.options.max_in_streams, ack.outbound_streams);
  adopt_peer(ack.initiate_tag, out_streams, in_streams, ack.initial_tsn, ack.a_rwnd, src, ack.ipv4_addresses());
  cookie_ = *cookie;

  stop_timer({TimerKind::InitRetransmit}, out);
  state_ = AssocState::CookieEchoed;
  handshake_attempts_ = 1;
  handshake_timeout_ = config_.options.init_timeout;
  start_timer({TimerKind::CookieRetransmit}, handshake_timeout_, out);

  queue_control(wire::CookieEchoChunk{cookie_}, paths_.path(0).addr);
  // Data may ride along, but only what fits in the COOKIE-ECHO packet: any
  // later packet would reach a listener that has no association yet.
  flush_send_buffer(out, now, cookie_echo_room());
}

std::size_t Association::cookie_echo_room() const {
  const std::size_t used = wire::kCommonHeaderSize + wire::encoded_size(wire::CookieEchoChunk{cookie_});
  return used >= config_.mtu ? 0 : config_.mtu - used;
}

void Association::on_cookie_echo(const wire::CookieEchoChunk& echo, const Address& src, Actions& out, Millis now) {
  if (post_handshake(state_)) {
    // Our COOKIE-ACK was lost and the peer is retrying.
    queue_control(wire::CookieAckChunk{}, src);
    return;
  }
  StateCookie cookie;
  try {
    cookie = verify_cookie(config_.secret, echo.cookie, src, now, config_.cookie_max_age);
  } catch (const Error&) {
    ++stats_.violations;
    return;
  }
  if (cookie.local_tag != local_tag_) return;

  if (state_ == AssocState::CookieWait) {
    adopt_peer(cookie.peer_initiate_tag, cookie.negotiated_outbound_streams, cookie.negotiated_inbound_streams,
               cookie.peer_initial_tsn, cookie.peer_a_rwnd, src, cookie.peer_addresses);
  } else if (cookie.peer_initiate_tag != peer_tag_) {
    return;
  }
  queue_control(wire::CookieAckChunk{}, src);
  enter_established(out, now);
}

void Association::enter_established(Actions& out, Millis now) {
  stop_timer({TimerKind::InitRetransmit}, out);
  stop_timer({TimerKind::CookieRetransmit}, out);
  state_ = AssocState::Established;
  cookie_.clear();
  out.push_back(act::NotifyEstablished{aid_});
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    start_timer({TimerKind::Heartbeat, static_cast<std::uint16_t>(i)}, config_.heartbeat_interval, out);
  }
  apply_rto(rel_.resume_rto(), out);
  flush_send_buffer(out, now);
  if (close_requested_) begin_shutdown(out, now);
}

// ---------------------------------------------------------------------------
// data path

void Association::on_app_send(const ev::AppSend& send, Actions& out, Millis now) {
  if (send.message.empty()) throw Error(Errc::EmptyMessage);
  if (send.message.size() > kReassemblyCap) throw Error(Errc::MessageTooBig);
  switch (state_) {
    case AssocState::CookieWait:
      if (close_requested_) throw Error(Errc::NotConnected);
      if (send.info.sid >= config_.options.num_out_streams) throw Error(Errc::InvalidStream);
      pre_handshake_.push_back(QueuedMessage{send.message, send.info});
      return;
    case AssocState::CookieEchoed:
      if (close_requested_) throw Error(Errc::NotConnected);
      if (send.info.sid >= out_streams_.size()) throw Error(Errc::InvalidStream);
      queue_fragments(QueuedMessage{send.message, send.info});
      return;
    case AssocState::Established:
      if (send.info.sid >= out_streams_.size()) throw Error(Errc::InvalidStream);
      break;
    default:
      throw Error(Errc::NotConnected);
  }

  queue_fragments(QueuedMessage{send.message, send.info});
  if (config_.options.no_delay || send_buffer_bytes_ >= max_data_payload(config_.mtu)) {
    stop_timer({TimerKind::BundleFlush}, out);
    flush_send_buffer(out, now);
  } else if (!armed_.contains({TimerKind::BundleFlush})) {
    start_timer({TimerKind::BundleFlush}, Millis{0}, out);
  }
}

void Association::queue_fragments(const QueuedMessage& m) {
  auto chunks =
      fragment_message(m.payload, m.info.sid, m.info.ppid, out_streams_.at(m.info.sid), max_data_payload(config_.mtu));
  for (auto& c : chunks) send_buffer_.push_back(std::move(c));
  send_buffer_bytes_ += m.payload.size();
}

void Association::flush_send_buffer(Actions& out, Millis now, std::size_t byte_budget) {
  if (send_buffer_.empty()) return;
  std::vector<wire::DataChunk> batch;
  std::size_t used = 0;
  while (!send_buffer_.empty()) {
    const std::size_t size = wire::encoded_size(wire::Chunk{send_buffer_.front()});
    if (used + size > byte_budget) break;
    used += size;
    send_buffer_bytes_ -= send_buffer_.front().payload.size();
    batch.push_back(std::move(send_buffer_.front()));
    send_buffer_.pop_front();
  }
  if (batch.empty()) return;
  const Address dest = paths_.select_path();
  auto result = rel_.assign_and_queue(std::move(batch), dest, now);
  queue_data(result.sendable, dest);
  if (state_ == AssocState::CookieEchoed) {
    rel_.note_rto_stopped();  // the cookie timer covers bundled data until established
  } else {
    apply_rto(result.rto, out);
  }
}

void Association::on_data(const wire::DataChunk& data, const Address& src, Actions& out) {
  if (!rel_.on_inbound_tsn(data.tsn)) {
    ++stats_.duplicates_received;
    return;
  }
  auto result = in_streams_.on_data_chunk(data);
  if (result.over_capacity) {
    abort_with(CloseReason::ResourceLimit, out);
    return;
  }
  if (result.unknown_stream) ++stats_.unknown_stream_drops;
  if (result.partial_notify) out.push_back(act::NotifyPartialMessage{aid_, *result.partial_notify});
  for (auto& m : result.deliverable) {
    unread_bytes_ += m.payload.size();
    out.push_back(act::DeliverMessage{std::move(m.payload), ReceiveInfo{m.sid, m.ssn, m.ppid, aid_, src}});
  }
}

void Association::on_sack(const wire::SackChunk& sack, const Address& src, Actions& out, Millis now) {
  paths_.on_ack_from(src);
  const Address dest = paths_.select_path();
  auto result = rel_.on_sack(sack, dest, now);
  if (result.stale) return;
  queue_data(result.fast_retransmits, dest);
  for (auto& [to, chunk] : result.retransmits) queue_data({chunk}, to);
  queue_data(result.released, dest);
  apply_rto(result.rto, out);
  // Progress while draining for a shutdown pushes the guard out.
  if (result.cum_advanced && armed_.contains({TimerKind::ShutdownGuard}) &&
      (state_ == AssocState::ShutdownPending || state_ == AssocState::ShutdownReceived)) {
    start_timer({TimerKind::ShutdownGuard}, config_.shutdown_guard, out);
  }
}

void Association::apply_rto(RtoCommand c, Actions& out) {
  if (c == RtoCommand::Start) start_timer({TimerKind::Rto}, rel_.rto(), out);
  if (c == RtoCommand::Stop) stop_timer({TimerKind::Rto}, out);
}

// ---------------------------------------------------------------------------
// timers

void Association::on_timer(TimerId id, Actions& out, Millis now) {
  switch (id.kind) {
    case TimerKind::InitRetransmit:
    case TimerKind::CookieRetransmit: {
      const bool init = id.kind == TimerKind::InitRetransmit;
      if (state_ != (init ? AssocState::CookieWait : AssocState::CookieEchoed)) return;
      if (handshake_attempts_ >= config_.options.max_init_attempts) {
        close_with(CloseReason::Timeout, out);
        return;
      }
      ++handshake_attempts_;
      handshake_timeout_ *= 2;
      const Address dest = paths_.path(0).addr;
      if (init) {
        queue_control(make_init(), dest);
      } else {
        queue_control(wire::CookieEchoChunk{cookie_}, dest);
        std::vector<wire::DataChunk> bundled;
        for (const auto& e : rel_.retransmit_queue()) {
          if (e.send_count > 0) bundled.push_back(e.chunk);
        }
        queue_data(bundled, dest);
      }
      start_timer(id, handshake_timeout_, out);
      return;
    }

    case TimerKind::Rto: {
      if (state_ == AssocState::ShutdownSent || state_ == AssocState::ShutdownAckSent) {
        if (state_ == AssocState::ShutdownSent) {
          queue_control(wire::ShutdownChunk{rel_.received_cumulative()}, paths_.select_path());
        } else {
          queue_control(wire::ShutdownAckChunk{}, paths_.select_path());
        }
        shutdown_rto_ = std::min(shutdown_rto_ * 2, config_.reliability.rto_max);
        start_timer(id, shutdown_rto_, out);
        return;
      }
      const auto& queue = rel_.retransmit_queue();
      auto first = std::find_if(queue.begin(), queue.end(), [](const auto& e) { return !e.gap_acked; });
      Address dest = paths_.select_path();
      if (first != queue.end() && first->dest) {
        const Address failed = *first->dest;
        if (auto f = paths_.on_retransmit_timeout(failed)) {
          ++stats_.failovers;
          out.push_back(act::NotifyPathFailover{aid_, f->from, f->to});
        }
        dest = paths_.alternate(failed);
      }
      auto result = rel_.on_rto_expiry(dest, now, config_.mtu - wire::kCommonHeaderSize);
      if (result.abort) {
        abort_with(CloseReason::RetransmitLimit, out);
        return;
      }
      queue_data(result.retransmit, dest);
      apply_rto(result.rto, out);
      return;
    }

    case TimerKind::Heartbeat: {
      if (id.path >= paths_.size()) return;
      auto tick = paths_.on_heartbeat_timer(id.path, rng_(), now);
      if (tick.failover) {
        ++stats_.failovers;
        out.push_back(act::NotifyPathFailover{aid_, tick.failover->from, tick.failover->to});
      }
      queue_control(tick.heartbeat, tick.dest);
      start_timer(id, config_.heartbeat_interval, out);
      return;
    }

    case TimerKind::ShutdownGuard:
      abort_with(CloseReason::GuardExpired, out);
      return;

    case TimerKind::BundleFlush:
      if (state_ == AssocState::Established || state_ == AssocState::ShutdownPending) flush_send_buffer(out, now);
      return;
  }
}

// ---------------------------------------------------------------------------
// shutdown and teardown

void Association::on_app_close(Actions& out, Millis now) {
  switch (state_) {
    case AssocState::CookieWait:
    case AssocState::CookieEchoed:
      close_requested_ = true;
      return;
    case AssocState::Established:
      begin_shutdown(out, now);
      return;
    default:
      return;  // already closing or closed
  }
}

void Association::begin_shutdown(Actions& out, Millis now) {
  state_ = AssocState::ShutdownPending;
  start_timer({TimerKind::ShutdownGuard}, config_.shutdown_guard, out);
  stop_timer({TimerKind::BundleFlush}, out);
  flush_send_buffer(out, now);
}

void Association::on_shutdown(const wire::ShutdownChunk& shutdown, const Address& src, Actions& out, Millis now) {
  switch (state_) {
    case AssocState::Established:
    case AssocState::ShutdownPending: {
      // The cumulative ack it carries counts like a SACK without gaps.
      wire::SackChunk implied;
      implied.cumulative_tsn_ack = shutdown.cumulative_tsn_ack;
      implied.a_rwnd = rel_.peer_rwnd();
      on_sack(implied, src, out, now);
      state_ = AssocState::ShutdownReceived;
      stop_timer({TimerKind::BundleFlush}, out);
      flush_send_buffer(out, now);
      if (!armed_.contains({TimerKind::ShutdownGuard})) {
        start_timer({TimerKind::ShutdownGuard}, config_.shutdown_guard, out);
      }
      return;
    }
    case AssocState::ShutdownSent:
      // Both sides closed at once.
      state_ = AssocState::ShutdownAckSent;
      queue_control(wire::ShutdownAckChunk{}, src);
      shutdown_rto_ = config_.reliability.rto_initial;
      start_timer({TimerKind::Rto}, shutdown_rto_, out);
      return;
    case AssocState::ShutdownAckSent:
      queue_control(wire::ShutdownAckChunk{}, src);
      return;
    default:
      return;
  }
}

void Association::progress_shutdown(Actions& out, Millis) {
  const bool drained = send_buffer_.empty() && rel_.queue_empty();
  if (!drained) return;
  if (state_ == AssocState::ShutdownPending) {
    state_ = AssocState::ShutdownSent;
    queue_control(wire::ShutdownChunk{rel_.received_cumulative()}, paths_.select_path());
  } else if (state_ == AssocState::ShutdownReceived) {
    state_ = AssocState::ShutdownAckSent;
    queue_control(wire::ShutdownAckChunk{}, paths_.select_path());
  } else {
    return;
  }
  shutdown_rto_ = config_.reliability.rto_initial;
  start_timer({TimerKind::Rto}, shutdown_rto_, out);
}

void Association::violation(const Address& src, Actions& out) {
  ++stats_.violations;
  (void)src;
  abort_with(CloseReason::ProtocolViolation, out);
}

void Association::abort_with(CloseReason reason, Actions& out) {
  // Without the peer's tag there is nothing it would accept.
  if (peer_tag_ != 0) queue_control(wire::AbortChunk{}, paths_.select_path());
  close_with(reason, out);
}

void Association::close_with(CloseReason reason, Actions& out) {
  for (const auto& id : armed_) out.push_back(act::StopTimer{id});
  armed_.clear();
  state_ = AssocState::Closed;
  close_reason_ = reason;
  out.push_back(act::NotifyClosed{aid_, reason});
}

// ---------------------------------------------------------------------------
// output

void Association::queue_control(wire::Chunk chunk, const Address& dest) {
  outgoing_.push_back(Outgoing{dest, last_local_, std::move(chunk)});
}

void Association::queue_data(const std::vector<wire::DataChunk>& chunks, const Address& dest) {
  for (const auto& c : chunks) outgoing_.push_back(Outgoing{dest, last_local_, c});
}

void Association::queue_sack(const Address& dest, const std::optional<Address>& source) {
  auto sack = rel_.build_sack(local_window());
  last_advertised_rwnd_ = sack.a_rwnd;
  outgoing_.push_back(Outgoing{dest, source, std::move(sack)});
}

void Association::emit_packets(Actions& out) {
  for (auto& reply : collision_replies_) out.push_back(std::move(reply));
  collision_replies_.clear();
  if (outgoing_.empty()) return;

  // Group by (destination, source) in order of first appearance, control
  // chunks ahead of DATA within each group.
  struct Group {
    Address dest;
    std::optional<Address> source;
    std::vector<wire::Chunk> control;
    std::vector<wire::Chunk> data;
  };
  std::vector<Group> groups;
  for (auto& o : outgoing_) {
    auto g = std::find_if(groups.begin(), groups.end(),
                          [&](const Group& x) { return x.dest == o.dest && x.source == o.source; });
    if (g == groups.end()) {
      groups.push_back(Group{o.dest, o.source, {}, {}});
      g = std::prev(groups.end());
    }
    (std::holds_alternative<wire::DataChunk>(o.chunk) ? g->data : g->control).push_back(std::move(o.chunk));
  }
  outgoing_.clear();

  for (auto& g : groups) {
    act::SendPacket packet{peer_tag_, {}, g.dest, g.source};
    std::size_t size = wire::kCommonHeaderSize;
    auto flush = [&] {
      if (packet.chunks.empty()) return;
      if (std::holds_alternative<wire::InitChunk>(packet.chunks.front())) packet.verification_tag = 0;
      ++stats_.packets_sent;
      out.push_back(std::move(packet));
      packet = act::SendPacket{peer_tag_, {}, g.dest, g.source};
      size = wire::kCommonHeaderSize;
    };
    auto add = [&](wire::Chunk& c) {
      const std::size_t n = wire::encoded_size(c);
      if (!packet.chunks.empty() && size + n > config_.mtu) flush();
      // INIT travels alone: it is the one chunk sent with a zero tag.
      if (std::holds_alternative<wire::InitChunk>(c) && !packet.chunks.empty()) flush();
      if (std::holds_alternative<wire::DataChunk>(c)) ++stats_.data_chunks_sent;
      packet.chunks.push_back(std::move(c));
      size += n;
      if (std::holds_alternative<wire::InitChunk>(packet.chunks.front())) flush();
    };
    for (auto& c : g.control) add(c);
    for (auto& c : g.data) add(c);
    flush();
  }
}

// ---------------------------------------------------------------------------
// timers

void Association::start_timer(TimerId id, Millis delay, Actions& out) {
  armed_.insert(id);
  out.push_back(act::StartTimer{id, delay});
}

void Association::stop_timer(TimerId id, Actions& out) {
  if (armed_.erase(id)) out.push_back(act::StopTimer{id});
}

}  // namespace microsctp
