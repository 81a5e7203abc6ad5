#include "microsctp/udp.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/eventfd.h>
#include <sys/socket.h>
#include <openssl/rand.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <random>

#include "microsctp/error.hpp"

namespace microsctp {

namespace {

sockaddr_in to_sockaddr(const Address& a) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_addr.s_addr = htonl(a.ip);
  sa.sin_port = htons(a.port);
  return sa;
}

Address from_sockaddr(const sockaddr_in& sa) { return Address{ntohl(sa.sin_addr.s_addr), ntohs(sa.sin_port)}; }

}  // namespace

// ---------------------------------------------------------------------------

RealClock::RealClock() : epoch_(Steady::now()) {}

Millis RealClock::now() const {
  return std::chrono::duration_cast<Millis>(Steady::now() - epoch_);
}

Clock::TimerHandle RealClock::schedule(Millis delay, std::function<void()> callback) {
  const auto at = Steady::now() + std::max(delay, Millis{0});
  TimerHandle h = 0;
  bool earliest = false;
  std::function<void()> wake;
  {
    std::lock_guard lock(timer_mu_);
    h = next_handle_++;
    auto it = timers_.emplace(std::make_pair(at, h), std::move(callback)).first;
    deadlines_.emplace(h, at);
    earliest = it == timers_.begin();
    wake = wake_;
  }
  if (earliest && wake) wake();
  return h;
}

void RealClock::cancel(TimerHandle handle) {
  std::lock_guard lock(timer_mu_);
  auto it = deadlines_.find(handle);
  if (it == deadlines_.end()) return;
  timers_.erase({it->second, handle});
  deadlines_.erase(it);
}

std::optional<Millis> RealClock::run_due() {
  while (true) {
    std::function<void()> fn;
    {
      std::lock_guard lock(timer_mu_);
      if (timers_.empty()) return std::nullopt;
      auto it = timers_.begin();
      const auto now = Steady::now();
      if (it->first.first > now) {
        return std::chrono::ceil<Millis>(it->first.first - now);
      }
      fn = std::move(it->second);
      deadlines_.erase(it->first.second);
      timers_.erase(it);
    }
    fn();
  }
}

bool RealClock::wait_until(const std::function<bool()>& pred, std::optional<Millis> timeout) {
  const auto deadline = Steady::now() + timeout.value_or(Millis{0});
  while (true) {
    std::uint64_t seen = 0;
    {
      std::lock_guard lock(wait_mu_);
      seen = generation_;
    }
    // Evaluated unlocked: the predicate takes its owner's locks.
    if (pred()) return true;
    std::unique_lock lock(wait_mu_);
    auto changed = [&] { return generation_ != seen; };
    if (timeout) {
      if (!wait_cv_.wait_until(lock, deadline, changed)) {
        lock.unlock();
        return pred();
      }
    } else {
      wait_cv_.wait(lock, changed);
    }
  }
}

void RealClock::notify() {
  {
    std::lock_guard lock(wait_mu_);
    ++generation_;
  }
  wait_cv_.notify_all();
}

// ---------------------------------------------------------------------------

struct UdpTransport::Core {
  std::vector<Address> addrs;
  std::vector<int> fds;
  int wake_fd = -1;
  RealClock clock;
  std::atomic<bool> stop{false};

  std::mutex receiver_mu;
  std::shared_ptr<ReceiveCallback> receiver;

  std::atomic<std::uint64_t> sent{0};
  std::atomic<std::uint64_t> received{0};
  std::atomic<std::uint64_t> send_drops{0};

  ~Core() {
    for (int fd : fds) ::close(fd);
    if (wake_fd >= 0) ::close(wake_fd);
  }

  void wake() const {
    const std::uint64_t one = 1;
    [[maybe_unused]] auto n = ::write(wake_fd, &one, sizeof one);
  }

  void run() {
    std::vector<pollfd> pfds;
    for (int fd : fds) pfds.push_back({fd, POLLIN, 0});
    pfds.push_back({wake_fd, POLLIN, 0});
    std::vector<std::uint8_t> buf(kMaxUdpPayload + 1);

    while (!stop.load()) {
      auto next = clock.run_due();
      if (stop.load()) break;
      const int timeout = next ? static_cast<int>(std::min<std::int64_t>(next->count(), 1000)) : 1000;
      for (auto& p : pfds) p.revents = 0;
      if (::poll(pfds.data(), pfds.size(), timeout) < 0 && errno != EINTR) break;

      if (pfds.back().revents & POLLIN) {
        std::uint64_t v = 0;
        [[maybe_unused]] auto n = ::read(wake_fd, &v, sizeof v);
      }
      for (std::size_t i = 0; i + 1 < pfds.size(); ++i) {
        if (!(pfds[i].revents & POLLIN)) continue;
        // Bounded batch per socket so timers and other sockets keep running.
        for (int batch = 0; batch < 256 && !stop.load(); ++batch) {
          sockaddr_in sa{};
          socklen_t len = sizeof sa;
          const ssize_t n =
              ::recvfrom(fds[i], buf.data(), buf.size(), MSG_DONTWAIT, reinterpret_cast<sockaddr*>(&sa), &len);
          if (n < 0) break;
          ++received;
          std::shared_ptr<ReceiveCallback> cb;
          {
            std::lock_guard lock(receiver_mu);
            cb = receiver;
          }
          if (cb && *cb) (*cb)(std::span<const std::uint8_t>(buf.data(), static_cast<std::size_t>(n)),
                               from_sockaddr(sa), addrs[i]);
        }
      }
    }
  }
};

std::shared_ptr<UdpTransport> UdpTransport::bind(const std::vector<Address>& addrs) { return bind(addrs, Options{}); }

std::shared_ptr<UdpTransport> UdpTransport::bind(const std::vector<Address>& addrs, Options options) {
  if (addrs.empty()) throw Error(Errc::InvalidArgument, "no address to bind");
  auto core = std::make_shared<Core>();
  std::uint16_t shared_port = 0;
  for (auto a : addrs) {
    if (a.port == 0) a.port = shared_port;
    const int fd = ::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw Error(Errc::BindFailure, std::strerror(errno));
    core->fds.push_back(fd);
    const int size = options.socket_buffer_bytes;
    // The forcing variants succeed with privileges; fall back quietly.
    if (::setsockopt(fd, SOL_SOCKET, SO_RCVBUFFORCE, &size, sizeof size) != 0) {
      ::setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &size, sizeof size);
    }
    if (::setsockopt(fd, SOL_SOCKET, SO_SNDBUFFORCE, &size, sizeof size) != 0) {
      ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &size, sizeof size);
    }
    sockaddr_in sa = to_sockaddr(a);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
      throw Error(Errc::BindFailure, a.to_string() + ": " + std::strerror(errno));
    }
    socklen_t len = sizeof sa;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len);
    Address bound = from_sockaddr(sa);
    if (shared_port == 0) shared_port = bound.port;
    core->addrs.push_back(bound);
  }
  core->wake_fd = ::eventfd(0, EFD_NONBLOCK | EFD_CLOEXEC);
  if (core->wake_fd < 0) throw Error(Errc::BindFailure, std::strerror(errno));
  Core* raw = core.get();
  core->clock.set_wakeup([raw] { raw->wake(); });
  return std::shared_ptr<UdpTransport>(new UdpTransport(std::move(core)));
}

UdpTransport::UdpTransport(std::shared_ptr<Core> core) : core_(std::move(core)) {
  io_ = std::thread([core = core_] { core->run(); });
}

UdpTransport::~UdpTransport() {
  core_->stop.store(true);
  core_->wake();
  {
    std::lock_guard lock(core_->receiver_mu);
    core_->receiver.reset();
  }
  if (io_.get_id() == std::this_thread::get_id()) {
    io_.detach();  // the thread owns a reference to the core and exits on its own
  } else {
    io_.join();
  }
}

void UdpTransport::send_datagram(std::span<const std::uint8_t> data, const Address& dest,
                                 std::optional<Address> source) {
  if (data.size() > kMaxUdpPayload) throw Error(Errc::DatagramTooLarge, std::to_string(data.size()) + " bytes");
  std::size_t index = 0;
  if (source) {
    for (std::size_t i = 0; i < core_->addrs.size(); ++i) {
      if (core_->addrs[i] == *source) index = i;
    }
  }
  sockaddr_in sa = to_sockaddr(dest);
  const ssize_t n = ::sendto(core_->fds[index], data.data(), data.size(), MSG_DONTWAIT,
                             reinterpret_cast<sockaddr*>(&sa), sizeof sa);
  if (n < 0) {
    ++core_->send_drops;  // full buffer or unreachable: a lost datagram
    return;
  }
  ++core_->sent;
}

void UdpTransport::register_receiver(ReceiveCallback callback) {
  auto cb = std::make_shared<ReceiveCallback>(std::move(callback));
  std::lock_guard lock(core_->receiver_mu);
  core_->receiver = std::move(cb);
}

std::vector<Address> UdpTransport::local_addresses() const { return core_->addrs; }
Clock& UdpTransport::clock() { return core_->clock; }

std::uint64_t UdpTransport::random_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

bool UdpTransport::fill_key(std::span<std::uint8_t> out) {
  return RAND_bytes(out.data(), static_cast<int>(out.size())) == 1;
}

std::uint64_t UdpTransport::datagrams_sent() const { return core_->sent.load(); }
std::uint64_t UdpTransport::datagrams_received() const { return core_->received.load(); }
std::uint64_t UdpTransport::send_drops() const { return core_->send_drops.load(); }

}  // namespace microsctp
