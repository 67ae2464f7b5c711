#include "tsbft/safe_value.hpp"

#include <algorithm>
#include <map>

namespace tsbft {

const char* safe_kind_name(SafeKind k) {
  switch (k) {
    case SafeKind::decide: return "decide";
    case SafeKind::adopt: return "adopt";
    case SafeKind::noop: return "noop";
  }
  return "unknown";
}

namespace {
Candidate make_candidate(View view, const Digest& hash, const RequestListPtr& requests) {
  Candidate c;
  c.view = view;
  c.hash = hash;
  c.requests = requests;
  if (requests) c.content = content_id(*requests);
  return c;
}
}  // namespace

SlotEvidence slot_evidence(const ViewChangeSlotEntry& entry) {
  SlotEvidence ev;
  if (const auto* tt = std::get_if<TauTauEvidence>(&entry.lm)) {
    ev.decided = make_candidate(tt->view, tt->hash, tt->requests);
  } else if (const auto* tv = std::get_if<TauWithView>(&entry.lm)) {
    ev.prepared = make_candidate(tv->view, tv->hash, tv->requests);
  }
  if (const auto* s = std::get_if<SigmaEvidence>(&entry.fm)) {
    // A fast commit outranks a linear one only by hash order; both decide.
    auto c = make_candidate(s->view, s->hash, s->requests);
    if (!ev.decided || c.hash < ev.decided->hash) ev.decided = c;
  } else if (const auto* sh = std::get_if<SigmaShareWithView>(&entry.fm)) {
    ev.share = make_candidate(sh->view, sh->share.digest, sh->requests);
  }
  return ev;
}

SafeValue choose_safe_value(std::span<const SlotEvidence> entries, std::uint32_t fast_quorum) {
  SafeValue out;

  const Candidate* decided = nullptr;
  for (const auto& e : entries) {
    if (e.decided && (decided == nullptr || e.decided->hash < decided->hash)) decided = &*e.decided;
  }
  if (decided != nullptr) {
    out.kind = SafeKind::decide;
    out.value = *decided;
    // Another entry may carry the block this one lacks.
    for (const auto& e : entries) {
      if (out.value.requests) break;
      if (e.decided && e.decided->hash == decided->hash && e.decided->requests) out.value = *e.decided;
    }
    return out;
  }

  // Slow candidate: highest prepared view, smallest hash among equals, and
  // any copy that carries the block.
  const Candidate* slow = nullptr;
  for (const auto& e : entries) {
    if (!e.prepared) continue;
    const auto& p = *e.prepared;
    if (slow == nullptr || p.view > slow->view || (p.view == slow->view && p.hash < slow->hash) ||
        (p.view == slow->view && p.hash == slow->hash && !slow->requests && p.requests)) {
      slow = &p;
    }
  }
  std::int64_t v_star = slow ? static_cast<std::int64_t>(slow->view) : -1;

  // For each list, the views its supporters named, highest first. The list
  // is fast for v up to its fast_quorum-th highest view.
  std::map<Digest, std::vector<const Candidate*>> by_content;
  for (const auto& e : entries) {
    if (e.share) by_content[e.share->content].push_back(&*e.share);
  }
  std::int64_t v_hat = -1;
  const Candidate* fast = nullptr;
  bool unique = true;
  for (auto& [content, supporters] : by_content) {
    if (fast_quorum == 0 || supporters.size() < fast_quorum) continue;
    std::sort(supporters.begin(), supporters.end(),
              [](const Candidate* a, const Candidate* b) { return a->view > b->view; });
    auto reach = static_cast<std::int64_t>(supporters[fast_quorum - 1]->view);
    if (reach > v_hat) {
      v_hat = reach;
      fast = supporters.front();
      unique = true;
    } else if (reach == v_hat) {
      unique = false;
    }
  }
  if (!unique) v_hat = -1;

  if (v_star >= v_hat && v_star > -1) {
    out.kind = SafeKind::adopt;
    out.value = *slow;
  } else if (v_hat > v_star) {
    out.kind = SafeKind::adopt;
    out.value = *fast;
  }
  return out;
}

SafeValue choose_safe_value(std::span<const ViewChangeSlotEntry> entries, const ClusterParams& params) {
  std::vector<SlotEvidence> ev;
  ev.reserve(entries.size());
  for (const auto& e : entries) ev.push_back(slot_evidence(e));
  return choose_safe_value(ev, params.f + params.c + 1);
}

}  // namespace tsbft
