#include "tsbft/params.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "tsbft/hash.hpp"

namespace tsbft {

std::uint32_t ClusterParams::active_window() const { return std::max<std::uint32_t>(1, (n - 1) / (c + 1)); }

ClusterParams derive_cluster(std::int64_t f, std::int64_t c, std::int64_t window) {
  if (f < 0 || c < 0) throw ConfigError("f and c must be non-negative");
  if (window < 4 || window % 4 != 0) {
    throw ConfigError("window must be a positive multiple of 4, got " + std::to_string(window));
  }
  if (f > 100000 || c > 100000) throw ConfigError("cluster too large");
  ClusterParams p;
  p.f = static_cast<std::uint32_t>(f);
  p.c = static_cast<std::uint32_t>(c);
  p.n = 3 * p.f + 2 * p.c + 1;
  p.sigma_threshold = 3 * p.f + p.c + 1;
  p.tau_threshold = 2 * p.f + p.c + 1;
  p.pi_threshold = p.f + 1;
  p.window = static_cast<std::uint64_t>(window);
  p.checkpoint_period = p.window / 2;
  return p;
}

ReplicaId primary_of(View view, const ClusterParams& params) {
  return static_cast<ReplicaId>(view % params.n) + 1;
}

bool RoleAssignment::contains(ReplicaId id) const {
  return std::find(collectors.begin(), collectors.end(), id) != collectors.end();
}

int RoleAssignment::index_of(ReplicaId id) const {
  auto it = std::find(collectors.begin(), collectors.end(), id);
  return it == collectors.end() ? -1 : static_cast<int>(it - collectors.begin());
}

namespace {

// splitmix64; the draw must be identical on every platform, so no
// <random> distributions here.
struct SplitMix {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

}  // namespace

RoleAssignment collectors_of(Seq seq, View view, CollectorKind kind, CollectorPath path,
                             const ClusterParams& params) {
  RoleAssignment out;
  out.view = view;
  out.seq = seq;
  out.primary = primary_of(view, params);

  std::vector<ReplicaId> pool;
  pool.reserve(params.n);
  for (ReplicaId id = 1; id <= params.n; ++id) {
    if (id != out.primary) pool.push_back(id);
  }
  const std::size_t want = params.c + 1;

  if (pool.size() < want) {
    // Only reachable for the single-replica cluster.
    out.collectors.assign(1, out.primary);
    return out;
  }

  Digest seed = Hasher()
                    .raw("tsbft/collectors")
                    .u8(static_cast<std::uint8_t>(kind))
                    .u64(seq)
                    .u64(view)
                    .finish();
  std::uint64_t s = 0;
  for (int i = 0; i < 8; ++i) s |= static_cast<std::uint64_t>(seed[i]) << (8 * i);
  SplitMix rng{s};

  // Partial Fisher-Yates: the first `want` positions are the draw.
  for (std::size_t i = 0; i < want; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.next() % (pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  out.collectors.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
  if (path == CollectorPath::linear) out.collectors.back() = out.primary;
  return out;
}

}  // namespace tsbft
