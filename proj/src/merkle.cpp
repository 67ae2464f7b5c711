#include "tsbft/merkle.hpp"

#include "tsbft/hash.hpp"

namespace tsbft::merkle {

Digest node_hash(const Digest& left, const Digest& right) {
  return Hasher().u8(0x04).digest(left).digest(right).finish();
}

Digest bind_count(std::uint64_t count, const Digest& raw_root) {
  return Hasher().u8(0x03).u64(count).digest(raw_root).finish();
}

Digest root(const std::vector<Digest>& leaves) {
  if (leaves.empty()) return bind_count(0, Digest{});
  std::vector<Digest> level = leaves;
  while (level.size() > 1) {
    std::vector<Digest> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      const Digest& right = i + 1 < level.size() ? level[i + 1] : level[i];
      next.push_back(node_hash(level[i], right));
    }
    level.swap(next);
  }
  return bind_count(leaves.size(), level.front());
}

std::vector<Digest> path(const std::vector<Digest>& leaves, std::size_t index) {
  std::vector<Digest> out;
  std::vector<Digest> level = leaves;
  std::size_t idx = index;
  while (level.size() > 1) {
    if (idx % 2 == 1) {
      out.push_back(level[idx - 1]);
    } else if (idx + 1 < level.size()) {
      out.push_back(level[idx + 1]);
    }
    std::vector<Digest> next;
    next.reserve((level.size() + 1) / 2);
    for (std::size_t i = 0; i < level.size(); i += 2) {
      const Digest& right = i + 1 < level.size() ? level[i + 1] : level[i];
      next.push_back(node_hash(level[i], right));
    }
    level.swap(next);
    idx /= 2;
  }
  return out;
}

std::optional<Digest> fold(const Digest& leaf, std::uint64_t index, std::uint64_t count,
                           const std::vector<Digest>& path) {
  if (count == 0 || index >= count) return std::nullopt;
  Digest node = leaf;
  std::uint64_t idx = index;
  std::uint64_t m = count;
  std::size_t k = 0;
  while (m > 1) {
    if (idx % 2 == 1) {
      if (k >= path.size()) return std::nullopt;
      node = node_hash(path[k++], node);
    } else if (idx + 1 < m) {
      if (k >= path.size()) return std::nullopt;
      node = node_hash(node, path[k++]);
    } else {
      node = node_hash(node, node);
    }
    idx /= 2;
    m = (m + 1) / 2;
  }
  if (k != path.size()) return std::nullopt;
  return bind_count(count, node);
}

}  // namespace tsbft::merkle
