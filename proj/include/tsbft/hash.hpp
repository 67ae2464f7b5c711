#pragma once

#include <openssl/sha.h>

#include <string_view>

#include "tsbft/types.hpp"

namespace tsbft {

// Incremental SHA-256 with the little-endian integer conventions used by the
// wire codec, so that a hash over fields equals a hash over their encoding.
class Hasher {
 public:
  Hasher() { SHA256_Init(&ctx_); }

  Hasher& bytes(BytesView data) {
    SHA256_Update(&ctx_, data.data(), data.size());
    return *this;
  }
  Hasher& raw(std::string_view s) {
    SHA256_Update(&ctx_, s.data(), s.size());
    return *this;
  }
  Hasher& u8(std::uint8_t v) { return bytes(BytesView(&v, 1)); }
  Hasher& u32(std::uint32_t v);
  Hasher& u64(std::uint64_t v);
  Hasher& digest(const Digest& d) { return bytes(d); }
  // Length-prefixed (u32) byte string.
  Hasher& blob(BytesView data) {
    u32(static_cast<std::uint32_t>(data.size()));
    return bytes(data);
  }

  Digest finish();

 private:
  SHA256_CTX ctx_;
};

Digest sha256(BytesView data);

}  // namespace tsbft
