#include "tsbft/hash.hpp"

#include <stdexcept>

namespace tsbft {

Hasher& Hasher::u32(std::uint32_t v) {
  Byte b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<Byte>(v >> (8 * i));
  return bytes(BytesView(b, 4));
}

Hasher& Hasher::u64(std::uint64_t v) {
  Byte b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<Byte>(v >> (8 * i));
  return bytes(BytesView(b, 8));
}

Digest Hasher::finish() {
  Digest out{};
  SHA256_Final(out.data(), &ctx_);
  return out;
}

Digest sha256(BytesView data) {
  Digest out{};
  SHA256(data.data(), data.size(), out.data());
  return out;
}

namespace {
constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}
}  // namespace

std::string to_hex(BytesView data) {
  std::string out;
  out.reserve(data.size() * 2);
  for (Byte b : data) {
    out.push_back(kHexDigits[b >> 4]);
    out.push_back(kHexDigits[b & 0xf]);
  }
  return out;
}

std::string to_hex(const Digest& d) { return to_hex(BytesView(d)); }

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw std::invalid_argument("odd-length hex string");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = hex_value(hex[i]);
    int lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit");
    out.push_back(static_cast<Byte>(hi << 4 | lo));
  }
  return out;
}

}  // namespace tsbft
