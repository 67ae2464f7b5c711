#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tsbft/types.hpp"

namespace tsbft {

// Cluster arithmetic. Replicas are numbered 1..n with n = 3f + 2c + 1.
struct ClusterParams {
  std::uint32_t f = 0;
  std::uint32_t c = 0;
  std::uint32_t n = 1;
  std::uint32_t sigma_threshold = 1;  // 3f + c + 1, fast path
  std::uint32_t tau_threshold = 1;    // 2f + c + 1, linear path
  std::uint32_t pi_threshold = 1;     // f + 1, execution / checkpoints
  std::uint64_t window = 256;
  std::uint64_t checkpoint_period = 128;

  // View-change quorum: 2f + 2c + 1 == n - f.
  std::uint32_t view_change_quorum() const { return 2 * f + 2 * c + 1; }
  // Blocks a primary keeps in flight: floor((n - 1) / (c + 1)).
  std::uint32_t active_window() const;
  // Fast-path participation horizon above the last executed sequence.
  std::uint64_t fast_window() const { return window / 4; }

  bool operator==(const ClusterParams&) const = default;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Throws ConfigError on negative counts or a window that is not a positive
// multiple of 4.
ClusterParams derive_cluster(std::int64_t f, std::int64_t c, std::int64_t window = 256);

// Round robin: (view mod n) + 1.
ReplicaId primary_of(View view, const ClusterParams& params);

enum class CollectorKind : std::uint8_t { commit = 0, execute = 1 };
enum class CollectorPath : std::uint8_t { fast = 0, linear = 1 };

struct RoleAssignment {
  View view = 0;
  Seq seq = 0;
  ReplicaId primary = 0;
  // Activation order: collector k becomes active k stagger intervals after
  // the first one.
  std::vector<ReplicaId> collectors;

  bool contains(ReplicaId id) const;
  // Position in the activation order, or -1.
  int index_of(ReplicaId id) const;
};

// c + 1 distinct collectors drawn pseudo-randomly from the non-primary
// replicas by a keyed hash of (seq, view, kind). On the linear path the
// primary takes the last slot. Pure function of its inputs.
RoleAssignment collectors_of(Seq seq, View view, CollectorKind kind, CollectorPath path,
                             const ClusterParams& params);

}  // namespace tsbft
