#include "microsctp/wire.hpp"

#include <algorithm>
#include <array>
#include <string>

#include "microsctp/error.hpp"

namespace microsctp::wire {

namespace {

// Slicing-by-8 tables for the reflected Castagnoli polynomial.
constexpr std::uint32_t kCastagnoliReflected = 0x82F63B78u;

using CrcTables = std::array<std::array<std::uint32_t, 256>, 8>;

constexpr CrcTables make_tables() {
  CrcTables t{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1) ? (c >> 1) ^ kCastagnoliReflected : c >> 1;
    t[0][i] = c;
  }
  for (std::size_t s = 1; s < 8; ++s) {
    for (std::size_t i = 0; i < 256; ++i) t[s][i] = (t[s - 1][i] >> 8) ^ t[0][t[s - 1][i] & 0xff];
  }
  return t;
}

constexpr CrcTables kTables = make_tables();

class Writer {
 public:
  explicit Writer(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v >> 16));
    u16(static_cast<std::uint16_t>(v));
  }
  void u64(std::uint64_t v) {
    u32(static_cast<std::uint32_t>(v >> 32));
    u32(static_cast<std::uint32_t>(v));
  }
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void pad4() {
    while (out_.size() % 4 != 0) out_.push_back(0);
  }
  std::size_t size() const { return out_.size(); }
  void patch_u16(std::size_t at, std::uint16_t v) {
    out_[at] = static_cast<std::uint8_t>(v >> 8);
    out_[at + 1] = static_cast<std::uint8_t>(v);
  }

 private:
  Bytes& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    auto v = static_cast<std::uint16_t>((data_[pos_] << 8) | data_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    auto hi = u16();
    return (static_cast<std::uint32_t>(hi) << 16) | u16();
  }
  std::uint64_t u64() {
    auto hi = u32();
    return (static_cast<std::uint64_t>(hi) << 32) | u32();
  }
  Bytes bytes(std::size_t n) {
    need(n);
    Bytes b(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
            data_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return b;
  }
  std::span<const std::uint8_t> view(std::size_t n) {
    need(n);
    auto v = data_.subspan(pos_, n);
    pos_ += n;
    return v;
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw Error(Errc::Malformed, "chunk body shorter than its fields");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::size_t pad4(std::size_t n) { return (n + 3) & ~std::size_t{3}; }

std::size_t params_size(const std::vector<Parameter>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += pad4(4 + p.value.size());
  return n;
}

// Unpadded chunk length as written into the length field.
struct LengthVisitor {
  std::size_t operator()(const DataChunk& d) const { return kDataChunkHeaderSize + d.payload.size(); }
  std::size_t operator()(const InitChunk& i) const { return 20 + params_size(i.params); }
  std::size_t operator()(const InitAckChunk& i) const { return 20 + params_size(i.params); }
  std::size_t operator()(const SackChunk& s) const {
    return 16 + 4 * s.gaps.size() + 4 * s.duplicates.size();
  }
  std::size_t operator()(const HeartbeatChunk&) const { return 4 + 16; }
  std::size_t operator()(const HeartbeatAckChunk&) const { return 4 + 16; }
  std::size_t operator()(const ShutdownChunk&) const { return 8; }
  std::size_t operator()(const CookieEchoChunk& e) const { return 4 + e.cookie.size(); }
  std::size_t operator()(const UnknownChunk& u) const { return 4 + u.body.size(); }
  std::size_t operator()(const auto&) const { return kChunkHeaderSize; }
};

std::size_t chunk_length(const Chunk& c) { return std::visit(LengthVisitor{}, c); }

std::uint8_t chunk_flags(const Chunk& c) {
  if (const auto* d = std::get_if<DataChunk>(&c)) {
    return static_cast<std::uint8_t>((d->ending ? kFlagDataEnd : 0) | (d->beginning ? kFlagDataBegin : 0));
  }
  if (const auto* a = std::get_if<AbortChunk>(&c)) return a->tag_reflected ? kFlagTagReflected : 0;
  if (const auto* s = std::get_if<ShutdownCompleteChunk>(&c)) {
    return s->tag_reflected ? kFlagTagReflected : 0;
  }
  if (const auto* u = std::get_if<UnknownChunk>(&c)) return u->flags;
  return 0;
}

void write_params(Writer& w, const std::vector<Parameter>& params) {
  for (const auto& p : params) {
    w.u16(p.type);
    w.u16(static_cast<std::uint16_t>(4 + p.value.size()));
    w.bytes(p.value);
    w.pad4();
  }
}

void write_init(Writer& w, const InitBody& b) {
  w.u32(b.initiate_tag);
  w.u32(b.a_rwnd);
  w.u16(b.outbound_streams);
  w.u16(b.max_inbound_streams);
  w.u32(b.initial_tsn);
  write_params(w, b.params);
}

struct BodyWriter {
  Writer& w;
  void operator()(const DataChunk& d) const {
    w.u32(d.tsn);
    w.u16(d.sid);
    w.u16(d.ssn);
    w.u32(d.ppid);
    w.bytes(d.payload);
  }
  void operator()(const InitChunk& i) const { write_init(w, i); }
  void operator()(const InitAckChunk& i) const { write_init(w, i); }
  void operator()(const SackChunk& s) const {
    w.u32(s.cumulative_tsn_ack);
    w.u32(s.a_rwnd);
    w.u16(static_cast<std::uint16_t>(s.gaps.size()));
    w.u16(static_cast<std::uint16_t>(s.duplicates.size()));
    for (const auto& g : s.gaps) {
      w.u16(g.start);
      w.u16(g.end);
    }
    for (auto d : s.duplicates) w.u32(d);
  }
  void operator()(const HeartbeatChunk& h) const {
    w.u64(h.info.nonce);
    w.u64(h.info.sent_at_ms);
  }
  void operator()(const HeartbeatAckChunk& h) const {
    w.u64(h.info.nonce);
    w.u64(h.info.sent_at_ms);
  }
  void operator()(const ShutdownChunk& s) const { w.u32(s.cumulative_tsn_ack); }
  void operator()(const CookieEchoChunk& e) const { w.bytes(e.cookie); }
  void operator()(const UnknownChunk& u) const { w.bytes(u.body); }
  void operator()(const auto&) const {}
};

void write_body(Writer& w, const Chunk& c) { std::visit(BodyWriter{w}, c); }

std::vector<Parameter> read_params(Reader& r) {
  std::vector<Parameter> params;
  while (r.remaining() > 0) {
    if (r.remaining() < 4) throw Error(Errc::Malformed, "trailing bytes in parameter list");
    Parameter p;
    p.type = r.u16();
    std::uint16_t len = r.u16();
    if (len < 4) throw Error(Errc::Malformed, "parameter length below header size");
    std::size_t value_len = len - 4u;
    if (value_len > r.remaining()) throw Error(Errc::Malformed, "parameter overruns chunk");
    p.value = r.bytes(value_len);
    // Padding of the final parameter may lie outside the chunk length.
    r.view(std::min(pad4(len) - len, r.remaining()));
    params.push_back(std::move(p));
  }
  return params;
}

std::size_t count_cookies(const InitBody& b) {
  std::size_t n = 0;
  for (const auto& p : b.params) n += p.type == kParamStateCookie ? 1 : 0;
  return n;
}

void read_init(Reader& r, InitBody& b) {
  b.initiate_tag = r.u32();
  b.a_rwnd = r.u32();
  b.outbound_streams = r.u16();
  b.max_inbound_streams = r.u16();
  b.initial_tsn = r.u32();
  b.params = read_params(r);
  if (b.initiate_tag == 0 || b.outbound_streams == 0 || b.max_inbound_streams == 0) {
    throw Error(Errc::Malformed, "INIT fields out of range");
  }
}

HeartbeatInfo read_heartbeat(Reader& r) {
  if (r.remaining() != 16) throw Error(Errc::Malformed, "heartbeat body must be 16 bytes");
  HeartbeatInfo info;
  info.nonce = r.u64();
  info.sent_at_ms = r.u64();
  return info;
}

void expect_empty(const Reader& r) {
  if (r.remaining() != 0) throw Error(Errc::Malformed, "unexpected chunk body");
}

Chunk read_chunk(std::uint8_t type, std::uint8_t flags, std::span<const std::uint8_t> body) {
  Reader r(body);
  switch (static_cast<ChunkType>(type)) {
    case ChunkType::Data: {
      if ((flags & ~(kFlagDataBegin | kFlagDataEnd)) != 0) {
        throw Error(Errc::Malformed, "reserved DATA flag bits set");
      }
      DataChunk d;
      d.tsn = r.u32();
      d.sid = r.u16();
      d.ssn = r.u16();
      d.ppid = r.u32();
      if (r.remaining() == 0) throw Error(Errc::Malformed, "empty DATA payload");
      d.payload = r.bytes(r.remaining());
      d.beginning = (flags & kFlagDataBegin) != 0;
      d.ending = (flags & kFlagDataEnd) != 0;
      return d;
    }
    case ChunkType::Init: {
      InitChunk i;
      read_init(r, i);
      if (count_cookies(i) != 0) throw Error(Errc::Malformed, "INIT carries a cookie");
      return i;
    }
    case ChunkType::InitAck: {
      InitAckChunk i;
      read_init(r, i);
      if (count_cookies(i) != 1) throw Error(Errc::Malformed, "INIT-ACK needs exactly one cookie");
      return i;
    }
    case ChunkType::Sack: {
      SackChunk s;
      s.cumulative_tsn_ack = r.u32();
      s.a_rwnd = r.u32();
      std::uint16_t ngaps = r.u16();
      std::uint16_t ndups = r.u16();
      if (r.remaining() != 4u * ngaps + 4u * ndups) {
        throw Error(Errc::Malformed, "SACK block counts disagree with length");
      }
      s.gaps.reserve(ngaps);
      std::uint32_t prev_end = 0;
      for (std::uint16_t i = 0; i < ngaps; ++i) {
        GapBlock g{r.u16(), 0};
        g.end = r.u16();
        if (g.start < 1 || g.start > g.end || g.start <= prev_end) {
          throw Error(Errc::Malformed, "SACK gap blocks unordered or overlapping");
        }
        prev_end = g.end;
        s.gaps.push_back(g);
      }
      s.duplicates.reserve(ndups);
      for (std::uint16_t i = 0; i < ndups; ++i) s.duplicates.push_back(r.u32());
      return s;
    }
    case ChunkType::Heartbeat:
      return HeartbeatChunk{read_heartbeat(r)};
    case ChunkType::HeartbeatAck:
      return HeartbeatAckChunk{read_heartbeat(r)};
    case ChunkType::Abort:
      // Error causes are not interpreted.
      return AbortChunk{(flags & kFlagTagReflected) != 0};
    case ChunkType::Shutdown: {
      ShutdownChunk s{r.u32()};
      expect_empty(r);
      return s;
    }
    case ChunkType::ShutdownAck:
      expect_empty(r);
      return ShutdownAckChunk{};
    case ChunkType::CookieEcho:
      if (r.remaining() == 0) throw Error(Errc::Malformed, "empty COOKIE-ECHO");
      return CookieEchoChunk{r.bytes(r.remaining())};
    case ChunkType::CookieAck:
      expect_empty(r);
      return CookieAckChunk{};
    case ChunkType::ShutdownComplete:
      expect_empty(r);
      return ShutdownCompleteChunk{(flags & kFlagTagReflected) != 0};
  }
  return UnknownChunk{type, flags, Bytes(body.begin(), body.end())};
}

std::uint32_t read_be32(std::span<const std::uint8_t> d, std::size_t at) {
  return (static_cast<std::uint32_t>(d[at]) << 24) | (static_cast<std::uint32_t>(d[at + 1]) << 16) |
         (static_cast<std::uint32_t>(d[at + 2]) << 8) | d[at + 3];
}

}  // namespace

namespace {

std::uint32_t crc32c_update(std::uint32_t crc, std::span<const std::uint8_t> data) noexcept {
  const std::uint8_t* p = data.data();
  std::size_t n = data.size();
  while (n >= 8) {
    std::uint32_t lo = crc ^ (static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                              (static_cast<std::uint32_t>(p[2]) << 16) |
                              (static_cast<std::uint32_t>(p[3]) << 24));
    crc = kTables[7][lo & 0xff] ^ kTables[6][(lo >> 8) & 0xff] ^ kTables[5][(lo >> 16) & 0xff] ^
          kTables[4][lo >> 24] ^ kTables[3][p[4]] ^ kTables[2][p[5]] ^ kTables[1][p[6]] ^
          kTables[0][p[7]];
    p += 8;
    n -= 8;
  }
  while (n-- > 0) crc = (crc >> 8) ^ kTables[0][(crc ^ *p++) & 0xff];
  return crc;
}

}  // namespace

std::uint32_t crc32c(std::span<const std::uint8_t> data) noexcept {
  return crc32c_update(0xFFFFFFFFu, data) ^ 0xFFFFFFFFu;
}

const char* to_string(ChunkType t) noexcept {
  switch (t) {
    case ChunkType::Data: return "DATA";
    case ChunkType::Init: return "INIT";
    case ChunkType::InitAck: return "INIT_ACK";
    case ChunkType::Sack: return "SACK";
    case ChunkType::Heartbeat: return "HEARTBEAT";
    case ChunkType::HeartbeatAck: return "HEARTBEAT_ACK";
    case ChunkType::Abort: return "ABORT";
    case ChunkType::Shutdown: return "SHUTDOWN";
    case ChunkType::ShutdownAck: return "SHUTDOWN_ACK";
    case ChunkType::CookieEcho: return "COOKIE_ECHO";
    case ChunkType::CookieAck: return "COOKIE_ACK";
    case ChunkType::ShutdownComplete: return "SHUTDOWN_COMPLETE";
  }
  return "UNKNOWN";
}

const Bytes* InitBody::cookie() const {
  for (const auto& p : params) {
    if (p.type == kParamStateCookie) return &p.value;
  }
  return nullptr;
}

std::vector<std::uint32_t> InitBody::ipv4_addresses() const {
  std::vector<std::uint32_t> out;
  for (const auto& p : params) {
    if (p.type == kParamIpv4Address && p.value.size() == 4) {
      out.push_back(read_be32(p.value, 0));
    }
  }
  return out;
}

void InitBody::add_ipv4_address(std::uint32_t ip) {
  params.push_back({kParamIpv4Address,
                    {static_cast<std::uint8_t>(ip >> 24), static_cast<std::uint8_t>(ip >> 16),
                     static_cast<std::uint8_t>(ip >> 8), static_cast<std::uint8_t>(ip)}});
}

std::uint8_t chunk_type_byte(const Chunk& c) noexcept {
  static constexpr std::uint8_t kTypes[] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 10, 11, 14};
  if (const auto* u = std::get_if<UnknownChunk>(&c)) return u->type;
  return kTypes[c.index()];
}

std::optional<ChunkType> chunk_type(const Chunk& c) noexcept {
  if (std::holds_alternative<UnknownChunk>(c)) return std::nullopt;
  return static_cast<ChunkType>(chunk_type_byte(c));
}

std::string chunk_name(const Chunk& c) {
  if (auto t = chunk_type(c)) return to_string(*t);
  return "UNKNOWN(" + std::to_string(chunk_type_byte(c)) + ")";
}

std::size_t encoded_size(const Chunk& c) { return pad4(chunk_length(c)); }

Bytes encode_packet(const CommonHeader& header, std::span<const Chunk> chunks) {
  if (chunks.empty()) throw Error(Errc::EmptyPacket);
  Bytes out;
  std::size_t total = kCommonHeaderSize;
  for (const auto& c : chunks) {
    std::size_t len = chunk_length(c);
    if (len > kMaxChunkLength) {
      throw Error(Errc::ChunkTooLarge, chunk_name(c) + " chunk of " + std::to_string(len) + " bytes");
    }
    total += pad4(len);
  }
  out.reserve(total);
  Writer w(out);
  w.u16(header.src_port);
  w.u16(header.dst_port);
  w.u32(header.verification_tag);
  w.u32(0);
  for (const auto& c : chunks) {
    std::size_t start = w.size();
    w.u8(chunk_type_byte(c));
    w.u8(chunk_flags(c));
    w.u16(0);
    write_body(w, c);
    w.patch_u16(start + 2, static_cast<std::uint16_t>(w.size() - start));
    w.pad4();
  }
  std::uint32_t crc = crc32c(out);
  out[8] = static_cast<std::uint8_t>(crc >> 24);
  out[9] = static_cast<std::uint8_t>(crc >> 16);
  out[10] = static_cast<std::uint8_t>(crc >> 8);
  out[11] = static_cast<std::uint8_t>(crc);
  return out;
}

Packet decode_packet(std::span<const std::uint8_t> data) {
  if (data.size() < kCommonHeaderSize) throw Error(Errc::Truncated, "shorter than common header");
  Packet p;
  p.header.src_port = static_cast<std::uint16_t>((data[0] << 8) | data[1]);
  p.header.dst_port = static_cast<std::uint16_t>((data[2] << 8) | data[3]);
  p.header.verification_tag = read_be32(data, 4);
  p.header.checksum = read_be32(data, 8);

  // Checksum over the packet with the checksum field taken as zero.
  static constexpr std::uint8_t kZero[4] = {0, 0, 0, 0};
  std::uint32_t crc = crc32c_update(0xFFFFFFFFu, data.first(8));
  crc = crc32c_update(crc, kZero);
  crc = crc32c_update(crc, data.subspan(kCommonHeaderSize));
  if ((crc ^ 0xFFFFFFFFu) != p.header.checksum) throw Error(Errc::BadChecksum);

  std::size_t pos = kCommonHeaderSize;
  while (pos < data.size()) {
    std::size_t remaining = data.size() - pos;
    if (remaining < kChunkHeaderSize) throw Error(Errc::Truncated, "partial chunk header");
    std::uint8_t type = data[pos];
    std::uint8_t flags = data[pos + 1];
    std::size_t len = static_cast<std::size_t>((data[pos + 2] << 8) | data[pos + 3]);
    if (len < kChunkHeaderSize) throw Error(Errc::BadLength, "chunk length below header size");
    if (len > remaining) throw Error(Errc::Truncated, "chunk overruns packet");
    if (pad4(len) > remaining) throw Error(Errc::BadLength, "chunk padding overruns packet");
    p.chunks.push_back(read_chunk(type, flags, data.subspan(pos + kChunkHeaderSize, len - kChunkHeaderSize)));
    pos += pad4(len);
  }
  if (p.chunks.empty()) throw Error(Errc::Truncated, "packet carries no chunks");
  if (p.header.verification_tag == 0 && !std::holds_alternative<InitChunk>(p.chunks.front())) {
    throw Error(Errc::Malformed, "zero verification tag on a non-INIT packet");
  }
  return p;
}

}  // namespace microsctp::wire
