#pragma once

#include <optional>
#include <vector>

#include "tsbft/types.hpp"

namespace tsbft::merkle {

// Binary tree, duplicate-last-node padding on odd levels. The published
// root is bound to the leaf count, H(0x03 || count || raw_root), which
// removes the padding ambiguity between n and n+1 leaves.

Digest node_hash(const Digest& left, const Digest& right);
Digest bind_count(std::uint64_t count, const Digest& raw_root);

// Root over `leaves` (already hashed). Empty tree has raw root all-zero.
Digest root(const std::vector<Digest>& leaves);

// Sibling path for leaf `index`; levels where the node is paired with its
// own duplicate contribute no element.
std::vector<Digest> path(const std::vector<Digest>& leaves, std::size_t index);

// Recomputes the count-bound root from a leaf, its index and path.
// nullopt if the path length does not match the tree shape.
std::optional<Digest> fold(const Digest& leaf, std::uint64_t index, std::uint64_t count,
                           const std::vector<Digest>& path);

}  // namespace tsbft::merkle
