#include "microsctp/api.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <unordered_map>

#include "microsctp/error.hpp"

namespace microsctp {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::size_t kMaxNotifications = 4096;

bool handshake_done(AssocState s) {
  return s != AssocState::CookieWait && s != AssocState::CookieEchoed && s != AssocState::Closed;
}

Errc errc_for(std::optional<CloseReason> reason) {
  if (reason == CloseReason::Timeout) return Errc::Timeout;
  if (reason == CloseReason::Refused) return Errc::Refused;
  return Errc::NotConnected;
}

template <class T>
bool contains_chunk(const std::vector<wire::Chunk>& chunks) {
  return std::any_of(chunks.begin(), chunks.end(), [](const wire::Chunk& c) { return std::holds_alternative<T>(c); });
}

bool tag_reflected(const wire::Chunk& c) {
  if (const auto* a = std::get_if<wire::AbortChunk>(&c)) return a->tag_reflected;
  if (const auto* s = std::get_if<wire::ShutdownCompleteChunk>(&c)) return s->tag_reflected;
  return false;
}

}  // namespace

class EndpointCore : public std::enable_shared_from_this<EndpointCore> {
 public:
  enum class SendMode { Blocking, Try, Async };

  static std::shared_ptr<EndpointCore> create(std::shared_ptr<Transport> transport, EndpointMode mode,
                                              AssocConfig base, Tuning tuning) {
    auto core = std::shared_ptr<EndpointCore>(new EndpointCore(std::move(transport), mode, std::move(base), tuning));
    std::weak_ptr<EndpointCore> weak = core;
    core->transport_->register_receiver([weak](std::span<const std::uint8_t> data, const Address& src,
                                               const Address& dst) {
      if (auto c = weak.lock()) c->on_datagram(data, src, dst);
    });
    return core;
  }

  ~EndpointCore() {
    transport_->register_receiver({});
    std::lock_guard lock(mu_);
    for (auto& [aid, e] : assocs_) {
      if (!e.assoc.closed()) execute(e, e.assoc.handle(ev::AppAbort{}, clock_.now()), std::nullopt);
      for (auto& [id, t] : e.timers) clock_.cancel(t.handle);
    }
  }

  EndpointCore(const EndpointCore&) = delete;
  EndpointCore& operator=(const EndpointCore&) = delete;

  // -------------------------------------------------------------------------
  // application side

  AssocId open(const std::vector<Address>& remote) {
    AssocId aid = 0;
    {
      std::lock_guard lock(mu_);
      aid = create_initiator(remote);
      conn_aid_ = aid;
    }
    after_unlock();
    return aid;
  }

  void send(std::span<const std::uint8_t> payload, SendInfo info, std::optional<Address> dest, SendMode mode) {
    if (payload.empty()) throw Error(Errc::EmptyMessage);
    if (payload.size() > base_.reassembly_cap) throw Error(Errc::MessageTooBig, std::to_string(payload.size()));

    std::unique_lock lock(mu_);
    if (closing_) throw Error(Errc::NotConnected, "endpoint closed");
    const AssocId aid = resolve(dest);
    lock.unlock();
    after_unlock();

    if (mode == SendMode::Blocking) {
      clock_.wait_until([&] {
        std::lock_guard l(mu_);
        auto it = assocs_.find(aid);
        return it == assocs_.end() || fits(it->second.assoc, payload.size());
      });
    }

    lock.lock();
    auto it = assocs_.find(aid);
    if (it == assocs_.end()) throw Error(errc_for(retired_reason(aid)));
    if (mode == SendMode::Try && !fits(it->second.assoc, payload.size())) throw Error(Errc::WouldBlock);
    dispatch(it->second, ev::AppSend{Bytes(payload.begin(), payload.end()), info});
    lock.unlock();
    after_unlock();

    if (mode == SendMode::Blocking) wait_handshake(aid, std::nullopt);
  }

  /// Returns normally once `aid` is past the handshake; throws otherwise.
  void wait_handshake(AssocId aid, std::optional<Millis> timeout) {
    auto settled = [&] {
      std::lock_guard l(mu_);
      auto it = assocs_.find(aid);
      return it == assocs_.end() || handshake_done(it->second.assoc.state());
    };
    const bool done = clock_.wait_until(settled, timeout);
    std::lock_guard l(mu_);
    auto it = assocs_.find(aid);
    if (it != assocs_.end()) {
      if (done && handshake_done(it->second.assoc.state())) return;
      throw Error(Errc::Timeout, "handshake still in progress");
    }
    const auto reason = retired_reason(aid);
    if (reason == CloseReason::Timeout || reason == CloseReason::Refused) throw Error(errc_for(reason));
    auto r = retired_.find(aid);
    if (r != retired_.end() && r->second.established) return;  // it did establish, then closed
    throw Error(Errc::Closed);
  }

  Message recv(bool blocking) {
    if (blocking) clock_.wait_until([&] { return readable(); });
    return pop_message();
  }

  std::optional<Message> recv_for(Millis timeout) {
    if (!clock_.wait_until([&] { return readable(); }, timeout)) return std::nullopt;
    return pop_message();
  }

  void set_handler(MessageHandler h) {
    std::lock_guard lock(mu_);
    handler_ = std::make_shared<MessageHandler>(std::move(h));
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      if (!closing_) {
        closing_ = true;
        for_each_live([&](Entry& e) { dispatch(e, ev::AppClose{}); });
      }
    }
    after_unlock();
    clock_.wait_until([&] {
      std::lock_guard l(mu_);
      return assocs_.empty();
    });
  }

  void abort() {
    {
      std::lock_guard lock(mu_);
      closing_ = true;
      for_each_live([&](Entry& e) { dispatch(e, ev::AppAbort{}); });
    }
    after_unlock();
  }

  // -------------------------------------------------------------------------
  // introspection

  std::size_t association_count() const {
    std::lock_guard lock(mu_);
    return assocs_.size();
  }

  std::vector<AssocId> association_ids() const {
    std::lock_guard lock(mu_);
    std::vector<AssocId> ids;
    for (const auto& [aid, e] : assocs_) ids.push_back(aid);
    return ids;
  }

  template <class F>
  auto inspect(AssocId aid, F f) const -> std::optional<decltype(f(std::declval<const Association&>()))> {
    std::lock_guard lock(mu_);
    auto it = assocs_.find(aid);
    if (it == assocs_.end()) return std::nullopt;
    return f(it->second.assoc);
  }

  struct Retired {
    std::optional<CloseReason> reason;
    AssocStats stats;
    std::uint16_t outbound = 0;
    std::uint16_t inbound = 0;
    bool established = false;
  };

  std::optional<Retired> retired(AssocId aid) const {
    std::lock_guard lock(mu_);
    auto it = retired_.find(aid);
    if (it == retired_.end()) return std::nullopt;
    return it->second;
  }

  EndpointStats stats() const {
    std::lock_guard lock(mu_);
    return stats_;
  }

  std::vector<Notification> take_notifications() {
    std::lock_guard lock(mu_);
    std::vector<Notification> out(notes_.begin(), notes_.end());
    notes_.clear();
    return out;
  }

  AssocId conn_aid() const { return conn_aid_; }
  EndpointMode mode() const { return mode_; }
  const std::vector<Address>& local_addresses() const { return base_.local_addrs; }
  Transport& transport() const { return *transport_; }

 private:
  struct ArmedTimer {
    Clock::TimerHandle handle = 0;
    std::uint64_t token = 0;
  };
  struct Entry {
    Association assoc;
    std::map<TimerId, ArmedTimer> timers;
    bool established = false;
  };

  EndpointCore(std::shared_ptr<Transport> transport, EndpointMode mode, AssocConfig base, Tuning tuning)
      : transport_(std::move(transport)),
        clock_(transport_->clock()),
        mode_(mode),
        base_(std::move(base)),
        tuning_(tuning),
        rng_(transport_->random_seed()) {
    // Drawn even when replaced below so the simulated tag sequence is stable.
    for (auto& b : base_.secret) b = static_cast<std::uint8_t>(rng_());
    transport_->fill_key(base_.secret);
  }

  // --- receive path -------------------------------------------------------

  void on_datagram(std::span<const std::uint8_t> data, const Address& src, const Address& dst) {
    {
      std::lock_guard lock(mu_);
      receive_locked(data, src, dst);
    }
    after_unlock();
  }

  void receive_locked(std::span<const std::uint8_t> data, const Address& src, const Address& dst) {
    ++stats_.packets_received;
    wire::Packet p;
    try {
      p = wire::decode_packet(data);
    } catch (const Error&) {
      ++stats_.decode_errors;
      return;
    }
    const std::uint32_t vtag = p.header.verification_tag;
    const wire::Chunk& first = p.chunks.front();

    if (const auto* init = std::get_if<wire::InitChunk>(&first)) {
      on_init_packet(*init, vtag, src, dst);
      return;
    }

    Entry* e = nullptr;
    if (tag_reflected(first)) {
      e = find_by_peer_address(src);
      if (e && e->assoc.peer_tag() != vtag) e = nullptr;
    } else if (auto it = by_local_tag_.find(vtag); it != by_local_tag_.end()) {
      e = &assocs_.at(it->second);
    }
    if (e) {
      dispatch(*e, ev::InboundPacket{std::move(p.chunks), src, dst});
      return;
    }

    if (const auto* echo = std::get_if<wire::CookieEchoChunk>(&first)) {
      on_cookie_echo_packet(*echo, vtag, p.chunks, src, dst);
      return;
    }

    if (find_by_peer_address(src)) {
      ++stats_.bad_tag;
      return;
    }
    ++stats_.out_of_the_blue;
    if (contains_chunk<wire::AbortChunk>(p.chunks) || contains_chunk<wire::ShutdownCompleteChunk>(p.chunks)) return;
    // Reply with the sender's own tag and the T bit set.
    if (contains_chunk<wire::ShutdownAckChunk>(p.chunks)) {
      send_packet(vtag, {wire::ShutdownCompleteChunk{true}}, src, dst);
    } else {
      send_packet(vtag, {wire::AbortChunk{true}}, src, dst);
    }
  }

  void on_init_packet(const wire::InitChunk& init, std::uint32_t vtag, const Address& src, const Address& dst) {
    if (vtag != 0 || init.initiate_tag == 0) {
      ++stats_.bad_tag;
      return;
    }
    if (Entry* e = find_by_peer_address(src)) {
      dispatch(*e, ev::InboundPacket{{init}, src, dst});
      return;
    }
    if (mode_ == EndpointMode::OneToOne || closing_) {
      ++stats_.inits_rejected;
      send_packet(init.initiate_tag, {wire::AbortChunk{}}, src, dst);
      return;
    }
    // Stateless: nothing is recorded until the cookie comes back.
    execute_detached(responder_on_init(base_, init, src, clock_.now(), rng_), dst);
    ++stats_.init_acks_sent;
  }

  void on_cookie_echo_packet(const wire::CookieEchoChunk& echo, std::uint32_t vtag,
                             std::vector<wire::Chunk>& chunks, const Address& src, const Address& dst) {
    if (mode_ == EndpointMode::OneToOne || closing_) {
      ++stats_.cookies_rejected;
      return;
    }
    const AssocId aid = next_aid_;
    auto outcome = responder_on_cookie_echo(aid, base_, echo.cookie, vtag, src, rng_(), clock_.now());
    if (!outcome.assoc) {
      ++stats_.cookies_rejected;
      return;
    }
    ++next_aid_;
    ++stats_.associations_created;
    Entry& e = assocs_.emplace(aid, Entry{std::move(*outcome.assoc), {}, false}).first->second;
    by_local_tag_[e.assoc.local_tag()] = aid;
    execute(e, std::move(outcome.actions), dst);
    if (chunks.size() > 1 && assocs_.contains(aid)) {
      // DATA bundled behind the cookie.
      std::vector<wire::Chunk> rest(std::make_move_iterator(chunks.begin() + 1), std::make_move_iterator(chunks.end()));
      dispatch(assocs_.at(aid), ev::InboundPacket{std::move(rest), src, dst});
    } else {
      retire_if_closed(aid);
    }
  }

  void on_timer(AssocId aid, TimerId id, std::uint64_t token) {
    {
      std::lock_guard lock(mu_);
      auto it = assocs_.find(aid);
      if (it == assocs_.end()) return;
      auto t = it->second.timers.find(id);
      if (t == it->second.timers.end() || t->second.token != token) return;  // re-armed or stopped meanwhile
      it->second.timers.erase(t);
      dispatch(it->second, ev::TimerFired{id});
    }
    after_unlock();
  }

  // --- association plumbing -----------------------------------------------

  AssocId create_initiator(const std::vector<Address>& remote) {
    const AssocId aid = next_aid_++;
    auto [assoc, actions] = Association::initiate(aid, base_, remote, rng_(), clock_.now());
    ++stats_.associations_created;
    Entry& e = assocs_.emplace(aid, Entry{std::move(assoc), {}, false}).first->second;
    by_local_tag_[e.assoc.local_tag()] = aid;
    execute(e, std::move(actions), std::nullopt);
    retire_if_closed(aid);
    return aid;
  }

  AssocId resolve(const std::optional<Address>& dest) {
    if (mode_ == EndpointMode::OneToOne) return conn_aid_;
    if (!dest) throw Error(Errc::InvalidArgument, "one-to-many send needs a destination");
    if (Entry* e = find_by_peer_address(*dest)) return e->assoc.aid();
    return create_initiator({*dest});  // implicit setup
  }

  bool fits(const Association& a, std::size_t size) const {
    const std::size_t buffered = a.send_buffered_bytes();
    return buffered == 0 || buffered + size <= tuning_.send_buffer;
  }

  void dispatch(Entry& e, const Event& event) {
    const AssocId aid = e.assoc.aid();
    Actions actions = e.assoc.handle(event, clock_.now());
    execute(e, std::move(actions), std::nullopt);
    retire_if_closed(aid);
  }

  void execute(Entry& e, Actions actions, std::optional<Address> default_source) {
    const AssocId aid = e.assoc.aid();
    for (auto& a : actions) {
      std::visit(overloaded{
                     [&](act::SendPacket& s) {
                       send_packet(s.verification_tag, s.chunks, s.dest, s.source ? s.source : default_source);
                     },
                     [&](act::DeliverMessage& d) { deliver(Message{std::move(d.payload), d.info}); },
                     [&](act::StartTimer& t) { arm(e, aid, t.id, t.delay); },
                     [&](act::StopTimer& t) {
                       auto it = e.timers.find(t.id);
                       if (it == e.timers.end()) return;
                       clock_.cancel(it->second.handle);
                       e.timers.erase(it);
                     },
                     [&](act::NotifyEstablished& n) {
                       e.established = true;
                       note({Notification::Kind::Established, n.aid, std::nullopt, {}, {}, 0});
                     },
                     [&](act::NotifyClosed& n) {
                       note({Notification::Kind::Closed, n.aid, n.reason, {}, {}, 0});
                     },
                     [&](act::NotifyPathFailover& n) {
                       ++stats_.failovers;
                       note({Notification::Kind::PathFailover, n.aid, std::nullopt, n.from, n.to, 0});
                     },
                     [&](act::NotifyPartialMessage& n) {
                       note({Notification::Kind::PartialMessage, n.aid, std::nullopt, {}, {}, n.sid});
                     },
                 },
                 a);
    }
  }

  /// Actions produced without an association (INIT-ACK): only sends.
  void execute_detached(const Actions& actions, const Address& source) {
    for (const auto& a : actions) {
      if (const auto* s = std::get_if<act::SendPacket>(&a)) {
        send_packet(s->verification_tag, s->chunks, s->dest, s->source ? s->source : source);
      }
    }
  }

  void arm(Entry& e, AssocId aid, TimerId id, Millis delay) {
    if (auto it = e.timers.find(id); it != e.timers.end()) clock_.cancel(it->second.handle);
    const std::uint64_t token = ++timer_token_;
    std::weak_ptr<EndpointCore> weak = weak_from_this();
    const auto handle = clock_.schedule(delay, [weak, aid, id, token] {
      if (auto c = weak.lock()) c->on_timer(aid, id, token);
    });
    e.timers[id] = ArmedTimer{handle, token};
  }

  void retire_if_closed(AssocId aid) {
    auto it = assocs_.find(aid);
    if (it == assocs_.end() || !it->second.assoc.closed()) return;
    Entry& e = it->second;
    for (auto& [id, t] : e.timers) clock_.cancel(t.handle);
    by_local_tag_.erase(e.assoc.local_tag());
    retired_[aid] = Retired{e.assoc.close_reason(), e.assoc.stats(), e.assoc.outbound_streams(),
                            e.assoc.inbound_streams(), e.established};
    assocs_.erase(it);
  }

  std::optional<CloseReason> retired_reason(AssocId aid) const {
    auto it = retired_.find(aid);
    return it == retired_.end() ? std::nullopt : it->second.reason;
  }

  void send_packet(std::uint32_t vtag, const std::vector<wire::Chunk>& chunks, const Address& dest,
                   const std::optional<Address>& source) {
    wire::CommonHeader h;
    h.src_port = base_.local_port();
    h.dst_port = dest.port;
    h.verification_tag = vtag;
    try {
      const Bytes bytes = wire::encode_packet(h, chunks);
      transport_->send_datagram(bytes, dest, source);
      ++stats_.packets_sent;
    } catch (const Error&) {
      ++stats_.send_errors;  // e.g. an INIT-ACK to a spoofed, unroutable source
    }
  }

  void deliver(Message m) {
    ++stats_.messages_delivered;
    if (handler_ && *handler_) {
      handoff_.push_back(std::move(m));
    } else {
      inbox_.push_back(std::move(m));
    }
  }

  void note(Notification n) {
    if (notes_.size() >= kMaxNotifications) notes_.pop_front();
    notes_.push_back(std::move(n));
  }

  Entry* find_by_peer_address(const Address& addr) {
    for (auto& [aid, e] : assocs_) {
      if (e.assoc.has_peer_address(addr)) return &e;
    }
    return nullptr;
  }

  template <class F>
  void for_each_live(F f) {
    std::vector<AssocId> ids;
    for (const auto& [aid, e] : assocs_) ids.push_back(aid);
    for (AssocId aid : ids) {
      auto it = assocs_.find(aid);
      if (it != assocs_.end()) f(it->second);
    }
  }

  bool recv_closed_locked() const {
    if (closing_) return true;
    return mode_ == EndpointMode::OneToOne && !assocs_.contains(conn_aid_);
  }

  bool readable() const {
    std::lock_guard lock(mu_);
    return !inbox_.empty() || recv_closed_locked();
  }

  Message pop_message() {
    Message m;
    {
      std::lock_guard lock(mu_);
      if (inbox_.empty()) throw Error(recv_closed_locked() ? Errc::Closed : Errc::WouldBlock);
      m = std::move(inbox_.front());
      inbox_.pop_front();
      if (auto it = assocs_.find(m.info.aid); it != assocs_.end()) {
        dispatch(it->second, ev::AppConsumed{m.payload.size()});
      }
    }
    after_unlock();
    return m;
  }

  /// Wakes waiters and runs the message handler outside the lock.
  void after_unlock() {
    std::vector<Message> batch;
    std::shared_ptr<MessageHandler> handler;
    {
      std::lock_guard lock(mu_);
      batch.swap(handoff_);
      handler = handler_;
    }
    clock_.notify();
    if (!handler || !*handler) return;
    for (const auto& m : batch) {
      (*handler)(m);
      std::lock_guard lock(mu_);
      if (auto it = assocs_.find(m.info.aid); it != assocs_.end()) {
        dispatch(it->second, ev::AppConsumed{m.payload.size()});
      }
    }
    if (!batch.empty()) after_unlock();
  }

  std::shared_ptr<Transport> transport_;
  Clock& clock_;
  EndpointMode mode_;
  AssocConfig base_;
  Tuning tuning_;

  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::map<AssocId, Entry> assocs_;
  std::unordered_map<std::uint32_t, AssocId> by_local_tag_;
  std::map<AssocId, Retired> retired_;
  AssocId next_aid_ = 1;
  AssocId conn_aid_ = 0;
  std::uint64_t timer_token_ = 0;
  bool closing_ = false;
  std::deque<Message> inbox_;
  std::vector<Message> handoff_;
  std::shared_ptr<MessageHandler> handler_;
  std::deque<Notification> notes_;
  EndpointStats stats_;
};

// ---------------------------------------------------------------------------

namespace {

AssocConfig make_base(Transport& transport, const InitOptions& options, std::vector<Address> local_addrs,
                      const Tuning& tuning) {
  options.validate();
  const auto owned = transport.local_addresses();
  if (local_addrs.empty()) local_addrs = owned;
  for (const auto& a : local_addrs) {
    if (std::find(owned.begin(), owned.end(), a) == owned.end()) throw Error(Errc::BindFailure, a.to_string());
  }
  AssocConfig c;
  c.options = options;
  c.local_addrs = std::move(local_addrs);
  c.cookie_max_age = tuning.cookie_max_age;
  c.mtu = tuning.mtu;
  c.receive_buffer = tuning.receive_buffer;
  c.reliability = tuning.reliability;
  c.heartbeat_interval = tuning.heartbeat_interval;
  c.path_failure_threshold = tuning.path_failure_threshold;
  c.shutdown_guard = tuning.shutdown_guard;
  return c;
}

}  // namespace

Endpoint listen(std::shared_ptr<Transport> transport, InitOptions options, std::vector<Address> local_addrs,
                Tuning tuning) {
  if (!transport) throw Error(Errc::InvalidArgument, "no transport");
  auto base = make_base(*transport, options, std::move(local_addrs), tuning);
  return Endpoint(EndpointCore::create(std::move(transport), EndpointMode::OneToMany, std::move(base), tuning));
}

Connection dial(std::shared_ptr<Transport> transport, std::vector<Address> remote_addrs, InitOptions options,
                std::vector<Address> local_addrs, Tuning tuning) {
  if (!transport) throw Error(Errc::InvalidArgument, "no transport");
  if (remote_addrs.empty()) throw Error(Errc::InvalidArgument, "no remote address");
  auto base = make_base(*transport, options, std::move(local_addrs), tuning);
  auto core = EndpointCore::create(std::move(transport), EndpointMode::OneToOne, std::move(base), tuning);
  core->open(remote_addrs);
  return Connection(std::move(core));
}

const std::vector<Address>& Endpoint::local_addresses() const { return core_->local_addresses(); }
EndpointMode Endpoint::mode() const { return core_->mode(); }

void Endpoint::send(std::span<const std::uint8_t> payload, SendInfo info, std::optional<Address> dest) {
  core_->send(payload, info, dest, EndpointCore::SendMode::Blocking);
}

void Endpoint::send(const std::string& payload, SendInfo info, std::optional<Address> dest) {
  send(std::span(reinterpret_cast<const std::uint8_t*>(payload.data()), payload.size()), info, dest);
}

void Endpoint::try_send(std::span<const std::uint8_t> payload, SendInfo info, std::optional<Address> dest) {
  core_->send(payload, info, dest, EndpointCore::SendMode::Try);
}

void Endpoint::send_async(std::span<const std::uint8_t> payload, SendInfo info, std::optional<Address> dest) {
  core_->send(payload, info, dest, EndpointCore::SendMode::Async);
}

Message Endpoint::recv_message(bool blocking) { return core_->recv(blocking); }
std::optional<Message> Endpoint::recv_for(Millis timeout) { return core_->recv_for(timeout); }
void Endpoint::set_message_handler(MessageHandler handler) { core_->set_handler(std::move(handler)); }
void Endpoint::close() { core_->close(); }
void Endpoint::abort() { core_->abort(); }
std::size_t Endpoint::association_count() const { return core_->association_count(); }
std::vector<AssocId> Endpoint::associations() const { return core_->association_ids(); }

std::optional<AssocState> Endpoint::state(AssocId aid) const {
  if (auto s = core_->inspect(aid, [](const Association& a) { return a.state(); })) return s;
  if (core_->retired(aid)) return AssocState::Closed;
  return std::nullopt;
}

std::optional<std::uint16_t> Endpoint::outbound_streams(AssocId aid) const {
  if (auto s = core_->inspect(aid, [](const Association& a) { return a.outbound_streams(); })) return s;
  if (auto r = core_->retired(aid)) return r->outbound;
  return std::nullopt;
}

std::optional<std::uint16_t> Endpoint::inbound_streams(AssocId aid) const {
  if (auto s = core_->inspect(aid, [](const Association& a) { return a.inbound_streams(); })) return s;
  if (auto r = core_->retired(aid)) return r->inbound;
  return std::nullopt;
}

std::optional<CloseReason> Endpoint::close_reason(AssocId aid) const {
  if (auto r = core_->retired(aid)) return r->reason;
  return std::nullopt;
}

std::optional<AssocStats> Endpoint::association_stats(AssocId aid) const {
  if (auto s = core_->inspect(aid, [](const Association& a) { return a.stats(); })) return s;
  if (auto r = core_->retired(aid)) return r->stats;
  return std::nullopt;
}

EndpointStats Endpoint::stats() const { return core_->stats(); }
std::vector<Notification> Endpoint::take_notifications() { return core_->take_notifications(); }
Transport& Endpoint::transport() const { return core_->transport(); }

AssocId Connection::aid() const { return core_->conn_aid(); }
AssocState Connection::state() const { return Endpoint::state(aid()).value_or(AssocState::Closed); }
std::uint16_t Connection::outbound_streams() const { return Endpoint::outbound_streams(aid()).value_or(0); }
std::uint16_t Connection::inbound_streams() const { return Endpoint::inbound_streams(aid()).value_or(0); }
std::optional<CloseReason> Connection::close_reason() const { return Endpoint::close_reason(aid()); }
AssocStats Connection::association_stats() const { return Endpoint::association_stats(aid()).value_or(AssocStats{}); }

void Connection::wait_established(std::optional<Millis> timeout) { core_->wait_handshake(aid(), timeout); }

}  // namespace microsctp
