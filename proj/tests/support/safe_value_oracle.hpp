#pragma once

// Reference enumerator for the new-view slot rule, written independently of
// src/safe_value.cpp: it scans views from the top down and counts
// supporters per list directly instead of ranking views per list.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "tsbft/safe_value.hpp"

namespace tsbft::oracle {

struct Expected {
  SafeKind kind = SafeKind::noop;
  std::optional<View> view;  // source view for adopt/decide
  Digest hash{};             // decide / slow adopt
  Digest content{};          // fast adopt
  bool via_fast = false;
  bool tie = false;  // v* == v^ > -1: the slow value wins
};

inline Expected reference_safe_value(std::span<const SlotEvidence> entries, std::uint32_t fast_quorum) {
  Expected out;
  // Decisions first: any committed proof wins; ties broken by hash.
  std::optional<Digest> decided;
  View decided_view = 0;
  for (const auto& e : entries) {
    if (!e.decided) continue;
    if (!decided || e.decided->hash < *decided) {
      decided = e.decided->hash;
      decided_view = e.decided->view;
    }
  }
  if (decided) {
    out.kind = SafeKind::decide;
    out.hash = *decided;
    out.view = decided_view;
    return out;
  }

  std::int64_t v_star = -1;
  Digest slow_hash{};
  for (const auto& e : entries) {
    if (!e.prepared) continue;
    auto v = static_cast<std::int64_t>(e.prepared->view);
    if (v > v_star || (v == v_star && e.prepared->hash < slow_hash)) {
      v_star = v;
      slow_hash = e.prepared->hash;
    }
  }

  std::int64_t top = -1;
  for (const auto& e : entries) {
    if (e.share) top = std::max<std::int64_t>(top, static_cast<std::int64_t>(e.share->view));
  }
  std::int64_t v_hat = -1;
  Digest fast_content{};
  for (std::int64_t v = top; v >= 0; --v) {
    std::map<Digest, std::uint32_t> support;
    for (const auto& e : entries) {
      if (e.share && static_cast<std::int64_t>(e.share->view) >= v) ++support[e.share->content];
    }
    std::vector<Digest> fast;
    for (const auto& [content, count] : support) {
      if (count >= fast_quorum) fast.push_back(content);
    }
    if (fast.empty()) continue;
    if (fast.size() == 1) {
      v_hat = v;
      fast_content = fast.front();
    }
    break;
  }

  out.tie = v_star == v_hat && v_star > -1;
  if (v_star >= v_hat && v_star > -1) {
    out.kind = SafeKind::adopt;
    out.view = static_cast<View>(v_star);
    out.hash = slow_hash;
  } else if (v_hat > v_star) {
    out.kind = SafeKind::adopt;
    out.via_fast = true;
    out.content = fast_content;
  }
  return out;
}

// True when the implementation's answer is the one the reference expects.
inline bool matches(const SafeValue& got, const Expected& want) {
  if (got.kind != want.kind) return false;
  if (want.kind == SafeKind::noop) return true;
  if (want.via_fast) return got.value.content == want.content;
  return got.value.hash == want.hash && got.value.view == *want.view;
}

}  // namespace tsbft::oracle
