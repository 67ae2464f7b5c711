#pragma once

#include <optional>
#include <span>
#include <vector>

#include "tsbft/messages.hpp"
#include "tsbft/params.hpp"

namespace tsbft {

// One piece of slot evidence, reduced to what the new-view rule needs.
// `content` identifies the request list independently of the view; it is
// all-zero when the list is unknown (commit evidence without a block).
struct Candidate {
  View view = 0;
  Digest hash{};
  Digest content{};
  RequestListPtr requests;

  bool operator==(const Candidate& o) const {
    return view == o.view && hash == o.hash && content == o.content && same_requests(requests, o.requests);
  }
};

// The evidence of one ViewChange for one slot.
struct SlotEvidence {
  std::optional<Candidate> decided;   // sigma(h) or tau(tau(h))
  std::optional<Candidate> prepared;  // tau(h) with its view
  std::optional<Candidate> share;     // sigma_i(h) with its view
};

SlotEvidence slot_evidence(const ViewChangeSlotEntry& entry);

enum class SafeKind : std::uint8_t { decide, adopt, noop };
const char* safe_kind_name(SafeKind k);

struct SafeValue {
  SafeKind kind = SafeKind::noop;
  // decide: the committed block; adopt: the block to re-propose. The hash
  // is the one under the candidate's own view.
  Candidate value;
};

// Evidence-driven choice for one slot over the entries of a quorum of view
// changes. `fast_quorum` is f + c + 1.
//  1. any committed proof decides (smallest hash if several).
//  2. v*: highest prepared view; its block is the slow candidate.
//  3. a list is fast for v when fast_quorum shares name it at views >= v;
//     v^ is the highest such v, or -1 if no list or several lists reach it.
//  4. v* >= v^ and v* > -1 adopts the slow candidate, v^ > v* the fast one,
//     otherwise the slot becomes a no-op.
SafeValue choose_safe_value(std::span<const SlotEvidence> entries, std::uint32_t fast_quorum);

SafeValue choose_safe_value(std::span<const ViewChangeSlotEntry> entries, const ClusterParams& params);

}  // namespace tsbft
