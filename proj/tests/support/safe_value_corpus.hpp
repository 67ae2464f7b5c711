#pragma once

// Small evidence sets for the new-view slot rule: two abstract values over a
// handful of views, every combination of prepared and fast-share evidence.

#include <optional>
#include <vector>

#include "tsbft/hash.hpp"
#include "tsbft/safe_value.hpp"

namespace tsbft::corpus {

inline Digest tagged(const char* what, int v) { return Hasher().raw(what).u32(static_cast<std::uint32_t>(v)).finish(); }

// Content X proposed at view v hashes to hash(X, v).
inline Candidate candidate(int value, View view) {
  Candidate c;
  c.view = view;
  c.content = tagged("content", value);
  c.hash = Hasher().digest(c.content).u64(view).finish();
  return c;
}

// Every per-entry option over views 0..max_view and two values, optionally
// with one decided entry.
inline std::vector<SlotEvidence> entry_options(int max_view, bool with_decide) {
  std::vector<std::optional<Candidate>> lm = {std::nullopt};
  std::vector<std::optional<Candidate>> fm = {std::nullopt};
  for (int value = 1; value <= 2; ++value) {
    for (int v = 0; v <= max_view; ++v) {
      lm.push_back(candidate(value, static_cast<View>(v)));
      fm.push_back(candidate(value, static_cast<View>(v)));
    }
  }
  std::vector<SlotEvidence> out;
  for (const auto& l : lm) {
    for (const auto& f : fm) {
      SlotEvidence e;
      e.prepared = l;
      e.share = f;
      out.push_back(e);
    }
  }
  if (with_decide) {
    SlotEvidence d;
    d.decided = candidate(1, 1);
    out.push_back(d);
  }
  return out;
}

}  // namespace tsbft::corpus
