#include "microsctp/types.hpp"

#include <charconv>

#include "microsctp/error.hpp"

namespace microsctp {

namespace {

bool parse_uint(std::string_view s, unsigned long max, unsigned long& out) {
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && out <= max;
}

}  // namespace

Address Address::parse(std::string_view text, std::uint16_t default_port) {
  std::string_view host = text;
  unsigned long port = default_port;
  if (auto colon = text.rfind(':'); colon != std::string_view::npos) {
    host = text.substr(0, colon);
    if (!parse_uint(text.substr(colon + 1), 65535, port)) {
      throw Error(Errc::InvalidArgument, "bad port in address '" + std::string(text) + "'");
    }
  }
  if (host == "localhost") host = "127.0.0.1";
  std::uint32_t ip = 0;
  int parts = 0;
  while (parts < 4) {
    auto dot = host.find('.');
    std::string_view octet = host.substr(0, dot);
    unsigned long v = 0;
    if (!parse_uint(octet, 255, v)) break;
    ip = (ip << 8) | static_cast<std::uint32_t>(v);
    ++parts;
    if (dot == std::string_view::npos) {
      host = {};
      break;
    }
    host.remove_prefix(dot + 1);
  }
  if (parts != 4 || !host.empty()) {
    throw Error(Errc::InvalidArgument, "bad IPv4 address '" + std::string(text) + "'");
  }
  return {ip, static_cast<std::uint16_t>(port)};
}

std::string Address::to_string() const {
  return std::to_string(ip >> 24) + "." + std::to_string((ip >> 16) & 0xff) + "." +
         std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff) + ":" +
         std::to_string(port);
}

std::vector<Address> parse_address_list(std::string_view csv, std::uint16_t default_port) {
  std::vector<Address> out;
  while (!csv.empty()) {
    auto comma = csv.find(',');
    out.push_back(Address::parse(csv.substr(0, comma), default_port));
    if (comma == std::string_view::npos) break;
    csv.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace microsctp
