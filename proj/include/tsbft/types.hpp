#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tsbft {

using Byte = std::uint8_t;
using Bytes = std::vector<Byte>;
using BytesView = std::span<const Byte>;

using Digest = std::array<Byte, 32>;

using ReplicaId = std::uint32_t;
using ClientId = std::uint64_t;
using View = std::uint64_t;
using Seq = std::uint64_t;
using Timestamp = std::uint64_t;

// Virtual time in microseconds.
using SimTime = std::uint64_t;

std::string to_hex(BytesView data);
std::string to_hex(const Digest& d);
Bytes from_hex(std::string_view hex);

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
inline std::string to_string(BytesView b) { return std::string(b.begin(), b.end()); }

}  // namespace tsbft
