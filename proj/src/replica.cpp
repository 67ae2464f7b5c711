#include "tsbft/replica.hpp"

#include <algorithm>
#include <cmath>

#include "tsbft/safe_value.hpp"

namespace tsbft {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::size_t kFutureStashLimit = 4096;
constexpr std::size_t kPendingLimit = 1 << 16;
constexpr int kFetchRetries = 5;

const Digest kZeroDigest{};

std::vector<SigShare> shares_of(const std::map<ReplicaId, SigShare>& m) {
  std::vector<SigShare> out;
  out.reserve(m.size());
  for (const auto& [signer, share] : m) out.push_back(share);
  return out;
}

// First digest in the set with at least `k` signers.
const std::map<ReplicaId, SigShare>* ready(const std::map<Digest, std::map<ReplicaId, SigShare>>& set,
                                           std::uint32_t k, Digest* which = nullptr) {
  for (const auto& [d, shares] : set) {
    if (shares.size() >= k) {
      if (which) *which = d;
      return &shares;
    }
  }
  return nullptr;
}

RequestListPtr empty_block() {
  static const RequestListPtr kEmpty = std::make_shared<const RequestList>();
  return kEmpty;
}

}  // namespace

const char* variant_name(ProtocolVariant v) {
  switch (v) {
    case ProtocolVariant::pbft_all_to_all: return "pbft_all_to_all";
    case ProtocolVariant::linear_pbft: return "linear_pbft";
    case ProtocolVariant::fast_path: return "+fast_path";
    case ProtocolVariant::exec_collector: return "+exec_collector";
    case ProtocolVariant::redundant_c: return "+redundant_c";
  }
  return "unknown";
}

std::optional<ProtocolVariant> parse_variant(std::string_view name) {
  if (!name.empty() && name.front() == '+') name.remove_prefix(1);
  if (name == "pbft_all_to_all" || name == "all_to_all" || name == "baseline") return ProtocolVariant::pbft_all_to_all;
  if (name == "linear_pbft" || name == "linear") return ProtocolVariant::linear_pbft;
  if (name == "fast_path") return ProtocolVariant::fast_path;
  if (name == "exec_collector") return ProtocolVariant::exec_collector;
  if (name == "redundant_c" || name == "full") return ProtocolVariant::redundant_c;
  return std::nullopt;
}

void apply_variant(ProtocolConfig& config, ProtocolVariant v) {
  config.all_to_all = v == ProtocolVariant::pbft_all_to_all;
  config.fast_path = v >= ProtocolVariant::fast_path;
  config.exec_collector = v >= ProtocolVariant::exec_collector;
  config.redundant_collectors = v == ProtocolVariant::redundant_c;
}

std::uint32_t compute_batch_size(double avg_pending, std::uint32_t active_window) {
  double half = std::max<std::uint32_t>(1, active_window) / 2.0;
  double batch = std::ceil(avg_pending / half);
  if (!(batch >= 1)) return 1;
  if (batch > 1e9) return 1000000000u;
  return static_cast<std::uint32_t>(batch);
}

Replica::Replica(ReplicaId id, const ClusterParams& params, std::shared_ptr<const PublicMaterial> pub,
                 ProtocolConfig config)
    : id_(id), params_(params), pub_(std::move(pub)), config_(std::move(config)), service_(params.window) {
  validation_.pub = pub_.get();
  validation_.params = &params_;
  validation_.allow = config_.allow;
  sigma_key_ = pub_->signing_key(SchemeTag::sigma, id_);
  tau_key_ = pub_->signing_key(SchemeTag::tau, id_);
  pi_key_ = pub_->signing_key(SchemeTag::pi, id_);
  auth_key_ = pub_->signing_key(SchemeTag::replica_auth, id_);
  for (ReplicaId r = 1; r <= params_.n; ++r) everyone_.push_back(Endpoint::replica(r));
  stable_ = StableCert{0, kv::genesis_digest(), std::nullopt};
  if (config_.share_forward_timeout == 0)
    config_.share_forward_timeout = config_.fast_path_timeout + (params_.c + 2) * config_.stagger_delta;
  if (config_.checkpoint_timeout == 0) config_.checkpoint_timeout = 2 * config_.fast_path_timeout;
  if (config_.catch_up_timeout == 0) config_.catch_up_timeout = std::max<SimTime>(1, config_.view_change_timeout / 4);
}

void Replica::start(SimTime, Effects&) {}

// --- plumbing -----------------------------------------------------------------

std::vector<Endpoint> Replica::all_replicas() const { return everyone_; }

std::vector<Endpoint> Replica::to_endpoints(const std::vector<ReplicaId>& ids) const {
  std::vector<Endpoint> out;
  out.reserve(ids.size());
  for (auto r : ids) out.push_back(Endpoint::replica(r));
  return out;
}

void Replica::reject(RejectReason r, Effects& fx) {
  ++stats_.rejected;
  NodeEvent e;
  e.kind = NodeEventKind::rejected;
  e.view = view_;
  e.path = static_cast<std::uint8_t>(r);
  fx.event(e);
}

bool Replica::in_window(Seq seq) const { return seq > stable_.seq && seq <= stable_.seq + params_.window; }

bool Replica::view_ok(View v) const {
  return config_.unsafe_skip_view_checks || (v == view_ && !in_view_change_);
}

Replica::Slot* Replica::find_slot(Seq seq) {
  auto it = slots_.find(seq);
  return it == slots_.end() ? nullptr : &it->second;
}

Replica::Slot& Replica::slot_at(Seq seq) { return slots_[seq]; }

void Replica::on_message(const Endpoint& from, const ProtocolMessage& m, SimTime now, Effects& fx) {
  if (!from.is_replica()) {
    const auto* req = std::get_if<RequestMsg>(&m);
    if (req == nullptr) return;
    if (auto reason = validate_well_formed(m, validation_)) {
      ++stats_.dropped_requests;
      reject(*reason, fx);
      return;
    }
    handle_request(from, *req, now, fx);
    return;
  }
  if (from.id < 1 || from.id > params_.n) return;
  auto sender = static_cast<ReplicaId>(from.id);

  // Normal-case traffic for another view: stash what is ahead of us.
  if (std::holds_alternative<PrePrepare>(m) || std::holds_alternative<SignShare>(m) ||
      std::holds_alternative<Prepare>(m) || std::holds_alternative<Commit>(m)) {
    View v = *message_view(m);
    if (!view_ok(v)) {
      if (v > view_) {
        stash_future(from, m);
        note_future_view(sender, v, fx);
      }
      return;
    }
  }

  if (auto reason = validate_well_formed(m, validation_)) {
    reject(*reason, fx);
    return;
  }

  std::visit(overloaded{
                 [&](const PrePrepare& x) { handle_preprepare(sender, x, now, fx); },
                 [&](const SignShare& x) { handle_sign_share(sender, x, now, fx); },
                 [&](const FullCommitProof& x) { handle_full_commit_proof(x, now, fx); },
                 [&](const Prepare& x) { handle_prepare(sender, x, now, fx); },
                 [&](const Commit& x) { handle_commit(sender, x, now, fx); },
                 [&](const FullCommitProofSlow& x) { handle_full_commit_proof_slow(x, now, fx); },
                 [&](const SignState& x) { handle_sign_state(sender, x, now, fx); },
                 [&](const FullExecuteProof& x) { handle_full_execute_proof(x, now, fx); },
                 [&](const ExecuteAck&) {},
                 [&](const ViewChange& x) { handle_view_change(sender, x, now, fx); },
                 [&](const NewView& x) { handle_new_view(x, now, fx); },
                 [&](const CheckpointVote& x) { handle_checkpoint_vote(sender, x, now, fx); },
                 [&](const Complaint& x) { handle_complaint(sender, x, now, fx); },
                 [&](const RequestMsg& x) { handle_request(from, x, now, fx); },
                 [&](const Reply&) {},
                 [&](const FetchBlock& x) { handle_fetch_block(sender, x, fx); },
                 [&](const BlockData& x) { handle_block_data(sender, x, now, fx); },
                 [&](const SnapshotRequest& x) { handle_snapshot_request(sender, x, fx); },
                 [&](const SnapshotData& x) { handle_snapshot_data(x, now, fx); },
             },
             m);
}

void Replica::stash_future(const Endpoint& from, const ProtocolMessage& m) {
  if (future_.size() >= kFutureStashLimit) return;
  future_.emplace_back(from, std::make_shared<const ProtocolMessage>(m));
}

// --- collectors ---------------------------------------------------------------------

std::vector<ReplicaId> Replica::share_collectors(Seq seq, View view) const {
  if (config_.all_to_all) {
    std::vector<ReplicaId> all;
    for (ReplicaId r = 1; r <= params_.n; ++r) all.push_back(r);
    return all;
  }
  auto path = config_.fast_path ? CollectorPath::fast : CollectorPath::linear;
  auto roles = collectors_of(seq, view, CollectorKind::commit, path, params_);
  if (!config_.redundant_collectors) {
    roles.collectors.resize(1);
    if (!config_.fast_path) roles.collectors[0] = roles.primary;
  }
  return roles.collectors;
}

std::vector<ReplicaId> Replica::commit_collectors(Seq seq, View view) const {
  if (config_.all_to_all) return share_collectors(seq, view);
  auto roles = collectors_of(seq, view, CollectorKind::commit, CollectorPath::linear, params_);
  if (!config_.redundant_collectors) roles.collectors.assign(1, roles.primary);
  return roles.collectors;
}

int Replica::share_collector_index(Seq seq, View view) const {
  auto c = share_collectors(seq, view);
  auto it = std::find(c.begin(), c.end(), id_);
  if (it != c.end()) return static_cast<int>(it - c.begin());
  // The primary takes forwarded shares when the collectors stay silent.
  if (primary_of(view, params_) == id_) return 0;
  return -1;
}

int Replica::commit_collector_index(Seq seq, View view) const {
  auto c = commit_collectors(seq, view);
  auto it = std::find(c.begin(), c.end(), id_);
  return it == c.end() ? -1 : static_cast<int>(it - c.begin());
}

std::vector<ReplicaId> Replica::exec_collectors(Seq seq) const {
  auto roles = collectors_of(seq, view_, CollectorKind::execute, CollectorPath::fast, params_);
  if (!config_.redundant_collectors) roles.collectors.resize(1);
  return roles.collectors;
}

// --- pre-prepare / sign-share ------------------------------------------------------

void Replica::handle_preprepare(ReplicaId from, const PrePrepare& m, SimTime now, Effects& fx) {
  if (from != primary_of(m.view, params_)) {
    reject(RejectReason::bad_range, fx);
    return;
  }
  if (!in_window(m.seq)) {
    if (m.seq > stable_.seq + params_.window) note_lag(m.seq, fx);
    return;
  }
  Digest h = block_hash(m.seq, m.view, *m.requests);
  Slot& slot = slot_at(m.seq);
  if (slot.accepted && slot.accepted->view == m.view) {
    if (slot.accepted->hash != h && slot.accepted->primary_sig) {
      ContradictionEvidence ev{m.seq, m.view, slot.accepted->hash, *slot.accepted->primary_sig, h, m.primary_sig};
      slot.blocks.emplace(h, KnownBlock{m.view, m.requests, m.primary_sig});
      start_view_change(m.view + 1, ev, now, fx);
    }
    return;
  }
  if (!config_.unsafe_skip_view_checks && slot.accepted && slot.accepted->view > m.view) return;
  accept_preprepare(m.seq, m.view, h, m.requests, m.primary_sig, now, fx);
}

void Replica::accept_preprepare(Seq seq, View view, const Digest& hash, RequestListPtr requests,
                                std::optional<SigShare> sig, SimTime now, Effects& fx) {
  {
    Slot& slot = slot_at(seq);
    slot.accepted = Accepted{view, hash, requests, sig};
    auto [it, inserted] = slot.blocks.emplace(hash, KnownBlock{view, requests, sig});
    if (!inserted && !it->second.primary_sig) it->second.primary_sig = sig;
  }
  highest_seen_seq_ = std::max(highest_seen_seq_, seq);
  send_sign_share(seq, view, hash, fx);
  arm_progress(fx);

  Slot* slot = find_slot(seq);
  if (slot && slot->committed && !slot->committed->requests && slot->committed->hash == hash) {
    slot->committed->requests = requests;
    slot->committed->view = view;
    execute_ready(now, fx);
    advance_stable(now, fx);
  }
  slot = find_slot(seq);
  if (slot && slot->pending_prepare && slot->pending_prepare->tau.digest == hash) {
    Prepare p = *slot->pending_prepare;
    slot->pending_prepare.reset();
    if (view_ok(p.view)) accept_prepare(seq, p, now, fx);
  }
}

void Replica::send_sign_share(Seq seq, View view, const Digest& hash, Effects& fx) {
  SignShare ss;
  ss.seq = seq;
  ss.view = view;
  bool fast = config_.fast_path && !config_.all_to_all && seq <= last_executed() + params_.fast_window();
  if (fast) ss.sigma = sign_share(*pub_, sigma_key_, hash);
  ss.tau = sign_share(*pub_, tau_key_, hash);
  auto dest = share_collectors(seq, view);
  bool primary_collects = std::find(dest.begin(), dest.end(), primary_of(view, params_)) != dest.end();
  fx.send(to_endpoints(dest), std::move(ss));
  if (!config_.all_to_all && !primary_collects) {
    fx.set_timer({TimerKind::share_forward, seq, view}, config_.share_forward_timeout);
  }
}

void Replica::handle_sign_share(ReplicaId from, const SignShare& m, SimTime now, Effects& fx) {
  if ((m.sigma && m.sigma->signer != from) || (m.tau && m.tau->signer != from)) {
    reject(RejectReason::bad_share, fx);
    return;
  }
  if (!in_window(m.seq)) return;
  if (share_collector_index(m.seq, m.view) < 0) return;
  Slot& slot = slot_at(m.seq);
  if (slot.committed) return;
  auto& round = slot.rounds[m.view];
  Digest h = m.sigma ? m.sigma->digest : m.tau->digest;
  if (m.sigma) round.sigma[h].emplace(from, *m.sigma);
  if (m.tau) round.tau[h].emplace(from, *m.tau);

  // Shares on a block other than ours: fetch it to see whether the primary
  // signed both.
  if (slot.accepted && slot.accepted->view == m.view && slot.accepted->hash != h && slot.accepted->primary_sig &&
      !slot.blocks.count(h) && (round.tau[h].size() + round.sigma[h].size()) <= 2) {
    fx.send(Endpoint::replica(from), FetchBlock{m.seq, h});
  }
  check_share_round(m.seq, m.view, h, now, fx);
}

void Replica::check_share_round(Seq seq, View view, const Digest& hash, SimTime now, Effects& fx) {
  Slot* slot = find_slot(seq);
  if (slot == nullptr || slot->committed) return;
  auto rit = slot->rounds.find(view);
  if (rit == slot->rounds.end()) return;
  Round& round = rit->second;
  auto sigma_count = round.sigma.count(hash) ? round.sigma[hash].size() : 0;
  auto tau_count = round.tau.count(hash) ? round.tau[hash].size() : 0;

  if (config_.all_to_all) {
    if (!round.local_prepared && tau_count >= params_.tau_threshold) {
      round.local_prepared = true;
      Prepare p{seq, view, combine(*pub_, SchemeTag::tau, shares_of(round.tau[hash]))};
      if (slot->blocks.count(hash)) {
        accept_prepare(seq, p, now, fx);
      } else {
        slot->pending_prepare = p;
        request_block(seq, hash, fx);
      }
    }
    return;
  }

  int k = share_collector_index(seq, view);
  if (k < 0 || round.proof_sent || round.prepare_sent) return;
  if (config_.fast_path && sigma_count >= params_.sigma_threshold) {
    if (k == 0) {
      send_full_commit_proof(seq, view, hash, fx);
    } else if (!round.proof_timer) {
      round.proof_timer = true;
      fx.set_timer({TimerKind::proof_stagger, seq, view}, static_cast<SimTime>(k) * config_.stagger_delta);
    }
    return;
  }
  if (tau_count >= params_.tau_threshold && !round.fast_timer) {
    round.fast_timer = true;
    SimTime wait = static_cast<SimTime>(k) * config_.stagger_delta;
    if (config_.fast_path) wait += config_.fast_path_timeout;
    if (wait == 0) {
      send_prepare(seq, view, hash, fx);
    } else {
      fx.set_timer({TimerKind::fast_path, seq, view}, wait);
    }
  }
}

void Replica::send_full_commit_proof(Seq seq, View view, const Digest& hash, Effects& fx) {
  Slot& slot = slot_at(seq);
  Round& round = slot.rounds[view];
  round.proof_sent = true;
  FullCommitProof p{seq, view, combine(*pub_, SchemeTag::sigma, shares_of(round.sigma[hash]))};
  fx.cancel_timer({TimerKind::fast_path, seq, view});
  fx.send(everyone_, std::move(p));
}

void Replica::send_prepare(Seq seq, View view, const Digest& hash, Effects& fx) {
  Slot& slot = slot_at(seq);
  Round& round = slot.rounds[view];
  round.prepare_sent = true;
  ++stats_.prepares_sent;
  Prepare p{seq, view, combine(*pub_, SchemeTag::tau, shares_of(round.tau[hash]))};
  fx.send(everyone_, std::move(p));
}

// --- linear path -------------------------------------------------------------------------

void Replica::handle_prepare(ReplicaId, const Prepare& m, SimTime now, Effects& fx) {
  if (!in_window(m.seq)) return;
  Slot& slot = slot_at(m.seq);
  if (slot.committed) return;
  if (slot.prepared && slot.prepared->view >= m.view) return;
  if (!slot.blocks.count(m.tau.digest)) {
    slot.pending_prepare = m;
    request_block(m.seq, m.tau.digest, fx);
    return;
  }
  accept_prepare(m.seq, m, now, fx);
}

void Replica::accept_prepare(Seq seq, const Prepare& m, SimTime now, Effects& fx) {
  {
    Slot& slot = slot_at(seq);
    if (slot.prepared && slot.prepared->view >= m.view) return;
    slot.prepared = Prepared{m.view, m.tau.digest, m.tau};
  }
  Commit c{seq, m.view, sign_share(*pub_, tau_key_, m.tau.value())};
  fx.send(to_endpoints(commit_collectors(seq, m.view)), std::move(c));
  fx.cancel_timer({TimerKind::share_forward, seq, m.view});
  arm_progress(fx);
  check_commit_round(seq, m.view, now, fx);
}

void Replica::handle_commit(ReplicaId from, const Commit& m, SimTime now, Effects& fx) {
  if (m.tau_tau.signer != from) {
    reject(RejectReason::bad_share, fx);
    return;
  }
  if (!in_window(m.seq) || commit_collector_index(m.seq, m.view) < 0) return;
  Slot& slot = slot_at(m.seq);
  if (slot.committed) return;
  slot.rounds[m.view].tau_tau[m.tau_tau.digest].emplace(from, m.tau_tau);
  check_commit_round(m.seq, m.view, now, fx);
}

void Replica::check_commit_round(Seq seq, View view, SimTime now, Effects& fx) {
  Slot* slot = find_slot(seq);
  if (slot == nullptr || slot->committed || !slot->prepared || slot->prepared->view != view) return;
  auto rit = slot->rounds.find(view);
  if (rit == slot->rounds.end()) return;
  Round& round = rit->second;
  auto it = round.tau_tau.find(slot->prepared->tau.value());
  if (it == round.tau_tau.end() || it->second.size() < params_.tau_threshold) return;

  if (config_.all_to_all) {
    CombinedSig proof = combine(*pub_, SchemeTag::tau, shares_of(it->second));
    Digest hash = slot->prepared->hash;
    commit_slot(seq, view, hash, CommitPath::slow, proof, now, fx);
    return;
  }
  if (round.slow_sent) return;
  int k = commit_collector_index(seq, view);
  if (k < 0) return;
  if (k == 0) {
    send_slow_proof(seq, view, fx);
  } else if (!round.slow_timer) {
    round.slow_timer = true;
    fx.set_timer({TimerKind::slow_stagger, seq, view}, static_cast<SimTime>(k) * config_.stagger_delta);
  }
}

void Replica::send_slow_proof(Seq seq, View view, Effects& fx) {
  Slot* slot = find_slot(seq);
  if (slot == nullptr || !slot->prepared || slot->prepared->view != view) return;
  Round& round = slot->rounds[view];
  auto it = round.tau_tau.find(slot->prepared->tau.value());
  if (it == round.tau_tau.end() || it->second.size() < params_.tau_threshold) return;
  round.slow_sent = true;
  FullCommitProofSlow p{seq, view, slot->prepared->hash, combine(*pub_, SchemeTag::tau, shares_of(it->second))};
  fx.send(everyone_, std::move(p));
}

// --- commit and execution -------------------------------------------------------------

void Replica::handle_full_commit_proof(const FullCommitProof& m, SimTime now, Effects& fx) {
  if (!in_window(m.seq)) {
    if (m.seq > stable_.seq + params_.window) note_lag(m.seq, fx);
    return;
  }
  commit_slot(m.seq, m.view, m.sigma.digest, CommitPath::fast, m.sigma, now, fx);
}

void Replica::handle_full_commit_proof_slow(const FullCommitProofSlow& m, SimTime now, Effects& fx) {
  if (!in_window(m.seq)) {
    if (m.seq > stable_.seq + params_.window) note_lag(m.seq, fx);
    return;
  }
  commit_slot(m.seq, m.view, m.block_hash, CommitPath::slow, m.tau_tau, now, fx);
}

void Replica::commit_slot(Seq seq, View view_hint, const Digest& hash, CommitPath path, const CombinedSig& proof,
                          SimTime now, Effects& fx) {
  if (!in_window(seq)) return;
  Slot& slot = slot_at(seq);
  if (slot.committed) {
    // A block re-proposed in a later view carries a new hash; only a
    // different request list is a conflict.
    auto other = slot.blocks.find(hash);
    if (slot.committed->hash != hash && slot.committed->requests && other != slot.blocks.end() &&
        content_id(*slot.committed->requests) != content_id(*other->second.requests)) {
      NodeEvent e;
      e.kind = NodeEventKind::conflict;
      e.seq = seq;
      e.view = view_hint;
      e.hash = hash;
      e.digest = slot.committed->hash;
      fx.event(e);
    }
    return;
  }
  Committed c{view_hint, hash, path, proof, nullptr};
  if (auto it = slot.blocks.find(hash); it != slot.blocks.end()) {
    c.view = it->second.view;
    c.requests = it->second.requests;
  }
  slot.committed = c;
  highest_seen_seq_ = std::max(highest_seen_seq_, seq);
  switch (path) {
    case CommitPath::fast: ++stats_.fast_commits; break;
    case CommitPath::slow: ++stats_.slow_commits; break;
    case CommitPath::decided: ++stats_.decided_commits; break;
    case CommitPath::fetched: break;
  }
  if (path == CommitPath::fast && seq > params_.fast_window()) {
    fast_stable_target_ = std::max(fast_stable_target_, seq - params_.fast_window());
  }
  if (!c.requests) {
    request_block(seq, hash, fx);
    return;
  }
  execute_ready(now, fx);
  advance_stable(now, fx);
}

void Replica::request_block(Seq seq, const Digest& hash, Effects& fx) {
  Slot& slot = slot_at(seq);
  if (slot.fetching) return;
  slot.fetching = true;
  std::vector<Endpoint> others;
  for (const auto& e : everyone_) {
    if (e.id != id_) others.push_back(e);
  }
  fx.send(std::move(others), FetchBlock{seq, hash});
  fx.set_timer({TimerKind::fetch_retry, seq, 0}, 2 * config_.fast_path_timeout);
}

void Replica::execute_ready(SimTime now, Effects& fx) {
  Seq before = last_executed();
  while (true) {
    Seq next = last_executed() + 1;
    Slot* slot = find_slot(next);
    if (slot == nullptr || !slot->committed || !slot->committed->requests) break;
    RequestListPtr reqs = slot->committed->requests;
    {
      NodeEvent e;
      e.kind = NodeEventKind::commit;
      e.seq = next;
      e.view = slot->committed->view;
      e.path = static_cast<std::uint8_t>(slot->committed->path);
      e.hash = slot->committed->hash;
      e.digest = content_id(*reqs);
      fx.event(e);
    }
    std::vector<kv::BlockOp> ops;
    ops.reserve(reqs->size());
    for (const auto& r : *reqs) ops.push_back({r.client, r.timestamp, r.op});
    auto vals = service_.execute(next, ops);
    after_execute(next, *reqs, vals, now, fx);
  }
  if (last_executed() != before) reset_progress(fx);
}

void Replica::after_execute(Seq seq, const RequestList& requests, const std::vector<Bytes>& vals, SimTime now,
                            Effects& fx) {
  Digest d = service_.digest();
  {
    NodeEvent e;
    e.kind = NodeEventKind::execute;
    e.seq = seq;
    e.view = view_;
    e.digest = d;
    fx.event(e);
  }
  for (std::size_t l = 0; l < requests.size(); ++l) {
    const auto& r = requests[l];
    bool dup = !vals[l].empty() && vals[l][0] == kv::result::kDuplicate && vals[l].size() == 1;
    NodeEvent e;
    e.kind = NodeEventKind::executed_op;
    e.seq = seq;
    e.position = static_cast<std::uint32_t>(l + 1);
    e.client = r.client;
    e.timestamp = r.timestamp;
    e.digest = value_hash(vals[l]);
    e.path = dup ? 1 : 0;
    fx.event(e);
    proposed_keys_.erase({r.client, r.timestamp});
    awaited_.erase({r.client, r.timestamp});
    if (!config_.exec_collector && !dup) {
      Reply rp;
      rp.replica = id_;
      rp.client = r.client;
      rp.timestamp = r.timestamp;
      rp.seq = seq;
      rp.val = vals[l];
      rp.view = view_;
      rp.auth = sign_share(*pub_, auth_key_, rp.signing_digest());
      fx.send(Endpoint::client(r.client), std::move(rp));
    }
  }

  bool checkpoint = seq % params_.checkpoint_period == 0;
  // Without E-collectors the linear variants still certify checkpoints
  // through them; only the all-to-all baseline broadcasts votes.
  if (config_.exec_collector || (checkpoint && !config_.all_to_all)) {
    fx.send(to_endpoints(exec_collectors(seq)), SignState{seq, sign_share(*pub_, pi_key_, d)});
  }

  if (checkpoint) {
    StableCert own{seq, d, std::nullopt};
    checkpoints_[seq] = {own, service_.snapshot()};
    if (auto it = certs_.find(seq); it != certs_.end()) checkpoints_[seq].first = it->second;
    while (checkpoints_.size() > 2) checkpoints_.erase(checkpoints_.begin());
    if (!config_.all_to_all) {
      fx.set_timer({TimerKind::checkpoint, seq, 0}, config_.checkpoint_timeout);
    } else {
      fx.send(everyone_, CheckpointVote{seq, sign_share(*pub_, pi_key_, d)});
    }
  }

  auto er = exec_rounds_.find(seq);
  if (er != exec_rounds_.end() && er->second.ack_pending && er->second.pi) {
    er->second.ack_pending = false;
    send_acks(seq, *er->second.pi, fx);
  }
  (void)now;
}

// --- execution certificates ---------------------------------------------------------

void Replica::handle_sign_state(ReplicaId from, const SignState& m, SimTime now, Effects& fx) {
  if (m.pi.signer != from) {
    reject(RejectReason::bad_share, fx);
    return;
  }
  if (!in_window(m.seq) || config_.all_to_all) return;
  if (!config_.exec_collector && m.seq % params_.checkpoint_period != 0) return;
  auto ec = exec_collectors(m.seq);
  if (std::find(ec.begin(), ec.end(), id_) == ec.end()) return;
  auto& er = exec_rounds_[m.seq];
  if (er.done) return;
  er.shares[m.pi.digest].emplace(from, m.pi);
  check_exec_round(m.seq, now, fx);
}

void Replica::check_exec_round(Seq seq, SimTime, Effects& fx) {
  auto& er = exec_rounds_[seq];
  if (er.done || ready(er.shares, params_.pi_threshold) == nullptr) return;
  auto ec = exec_collectors(seq);
  auto k = std::find(ec.begin(), ec.end(), id_) - ec.begin();
  if (k == 0) {
    finish_exec_round(seq, fx);
  } else if (!er.timer) {
    er.timer = true;
    fx.set_timer({TimerKind::exec_stagger, seq, 0}, static_cast<SimTime>(k) * config_.stagger_delta);
  }
}

void Replica::finish_exec_round(Seq seq, Effects& fx) {
  auto& er = exec_rounds_[seq];
  if (er.done) return;
  Digest d{};
  const auto* shares = ready(er.shares, params_.pi_threshold, &d);
  if (shares == nullptr) return;
  er.done = true;
  CombinedSig pi = combine(*pub_, SchemeTag::pi, shares_of(*shares));
  er.pi = pi;
  fx.send(everyone_, FullExecuteProof{seq, pi});
  if (!config_.exec_collector) return;
  auto mine = service_.digest_at(seq);
  if (last_executed() >= seq && mine && *mine == d) {
    send_acks(seq, pi, fx);
  } else if (last_executed() < seq) {
    er.ack_pending = true;
  }
}

void Replica::send_acks(Seq seq, const CombinedSig& pi, Effects& fx) {
  Slot* slot = find_slot(seq);
  if (slot == nullptr || !slot->committed || !slot->committed->requests) return;
  auto mine = service_.digest_at(seq);
  if (!mine || *mine != pi.digest) return;
  const auto& reqs = *slot->committed->requests;
  for (std::size_t l = 0; l < reqs.size(); ++l) {
    auto pos = static_cast<std::uint32_t>(l + 1);
    try {
      auto [op, val] = service_.recorded(seq, pos);
      if (val.size() == 1 && val[0] == kv::result::kDuplicate) continue;
      ExecuteAck ack;
      ack.seq = seq;
      ack.position = pos;
      ack.client = reqs[l].client;
      ack.timestamp = reqs[l].timestamp;
      ack.val = std::move(val);
      ack.op = std::move(op);
      ack.pi = pi;
      ack.proof = service_.proof(seq, pos);
      ack.view = view_;
      fx.send(Endpoint::client(reqs[l].client), std::move(ack));
    } catch (const kv::NoSuchOperation&) {
    }
  }
}

void Replica::handle_full_execute_proof(const FullExecuteProof& m, SimTime now, Effects& fx) {
  if (auto it = exec_rounds_.find(m.seq); it != exec_rounds_.end()) it->second.done = true;
  add_certificate(StableCert{m.seq, m.pi.digest, m.pi}, now, fx);
}

void Replica::handle_checkpoint_vote(ReplicaId from, const CheckpointVote& m, SimTime now, Effects& fx) {
  if (m.pi.signer != from) {
    reject(RejectReason::bad_share, fx);
    return;
  }
  if (m.seq <= stable_.seq || m.seq > stable_.seq + 2 * params_.window) return;
  auto& set = votes_[m.seq][m.pi.digest];
  set.emplace(from, m.pi);
  if (set.size() == params_.pi_threshold) {
    CombinedSig pi = combine(*pub_, SchemeTag::pi, shares_of(set));
    add_certificate(StableCert{m.seq, m.pi.digest, pi}, now, fx);
  }
}

void Replica::add_certificate(const StableCert& cert, SimTime now, Effects& fx) {
  if (cert.seq <= stable_.seq) return;
  highest_seen_seq_ = std::max(highest_seen_seq_, cert.seq);
  if (cert.seq > stable_.seq + 2 * params_.window) {
    // Far ahead: remember only the newest such certificate.
    for (auto it = certs_.upper_bound(stable_.seq + 2 * params_.window); it != certs_.end();) it = certs_.erase(it);
  }
  certs_.emplace(cert.seq, cert);
  if (auto it = checkpoints_.find(cert.seq); it != checkpoints_.end() && !it->second.first.pi) {
    if (it->second.first.state_digest == cert.state_digest) it->second.first = cert;
  }
  if (cert.seq > last_executed()) note_lag(cert.seq, fx);
  advance_stable(now, fx);
}

void Replica::advance_stable(SimTime, Effects& fx) {
  Seq le = last_executed();
  const StableCert* best = nullptr;
  for (const auto& [s, c] : certs_) {
    if (s > le) break;
    if (s % params_.checkpoint_period == 0 || s <= fast_stable_target_) {
      auto mine = service_.digest_at(s);
      if (mine && *mine == c.state_digest) best = &c;
    }
  }
  if (best != nullptr && best->seq > stable_.seq) install_stable(StableCert(*best), fx);
}

void Replica::install_stable(const StableCert& cert, Effects& fx) {
  stable_ = cert;
  if (auto it = checkpoints_.find(cert.seq); it != checkpoints_.end() && !it->second.first.pi) it->second.first = cert;
  NodeEvent e;
  e.kind = NodeEventKind::stable;
  e.seq = cert.seq;
  e.view = view_;
  e.digest = cert.state_digest;
  fx.event(e);
  garbage_collect();
  next_seq_ = std::max(next_seq_, stable_.seq + 1);
}

void Replica::garbage_collect() {
  Seq ls = stable_.seq;
  slots_.erase(slots_.begin(), slots_.upper_bound(ls));
  exec_rounds_.erase(exec_rounds_.begin(), exec_rounds_.upper_bound(ls));
  certs_.erase(certs_.begin(), certs_.upper_bound(ls));
  votes_.erase(votes_.begin(), votes_.upper_bound(ls));
}

// --- client traffic ----------------------------------------------------------------------

bool Replica::already_handled(const ClientRequest& r) const {
  auto sess = service_.session(r.client);
  if (sess && sess->timestamp >= r.timestamp) return true;
  return proposed_keys_.count({r.client, r.timestamp}) > 0;
}

void Replica::handle_request(const Endpoint& from, const RequestMsg& m, SimTime now, Effects& fx) {
  const auto& r = m.request;
  if (!from.is_replica() && from.id != r.client) {
    reject(RejectReason::bad_client_auth, fx);
    return;
  }
  auto sess = service_.session(r.client);
  if (sess && r.timestamp <= sess->timestamp) {
    if (r.timestamp == sess->timestamp && !from.is_replica()) {
      if (m.retry || !config_.exec_collector) {
        send_reply(r.client, now, fx);
      } else {
        // Re-send the acknowledgement when its certificate is still held.
        const StableCert* cert = nullptr;
        if (auto it = certs_.find(sess->seq); it != certs_.end()) cert = &it->second;
        if (stable_.seq == sess->seq && stable_.pi) cert = &stable_;
        Slot* slot = find_slot(sess->seq);
        if (cert != nullptr && cert->pi && slot != nullptr) {
          send_acks(sess->seq, *cert->pi, fx);
        } else {
          send_reply(r.client, now, fx);
        }
      }
    }
    return;
  }
  std::pair<ClientId, Timestamp> key{r.client, r.timestamp};
  if (m.retry) {
    awaited_.emplace(key, now);
    arm_progress(fx);
  }
  if (!pending_keys_.count(key) && !proposed_keys_.count(key) && pending_.size() < kPendingLimit) {
    pending_.push_back(r);
    pending_keys_.insert(key);
  }
  if (is_primary()) {
    try_propose(now, fx);
  } else if (!m.retry && !from.is_replica()) {
    fx.send(Endpoint::replica(primary_of(view_, params_)), RequestMsg{r, false});
  }
}

void Replica::send_reply(ClientId client, SimTime, Effects& fx) {
  auto sess = service_.session(client);
  if (!sess) return;
  Reply rp;
  rp.replica = id_;
  rp.client = client;
  rp.timestamp = sess->timestamp;
  rp.seq = sess->seq;
  rp.val = sess->val;
  rp.view = view_;
  rp.auth = sign_share(*pub_, auth_key_, rp.signing_digest());
  fx.send(Endpoint::client(client), std::move(rp));
}

void Replica::try_propose(SimTime, Effects& fx, bool timer_fired) {
  if (!is_primary() || in_view_change_) return;
  while (true) {
    while (!pending_.empty() && already_handled(pending_.front())) {
      pending_keys_.erase({pending_.front().client, pending_.front().timestamp});
      pending_.pop_front();
    }
    if (pending_.empty()) return;
    next_seq_ = std::max(next_seq_, stable_.seq + 1);
    if (next_seq_ > stable_.seq + params_.window) return;
    if (next_seq_ > last_executed() + params_.active_window()) return;

    double avg = 0.5 * static_cast<double>(pending_.size()) + 0.5 * avg_pending_;
    std::uint32_t batch = std::min(compute_batch_size(avg, params_.active_window()), config_.max_batch);
    if (pending_.size() < batch && !timer_fired) {
      if (!batch_timer_) {
        batch_timer_ = true;
        fx.set_timer({TimerKind::batch, 0, 0}, config_.batch_timeout);
      }
      return;
    }
    timer_fired = false;
    avg_pending_ = avg;

    auto list = std::make_shared<RequestList>();
    while (!pending_.empty() && list->size() < batch) {
      ClientRequest r = std::move(pending_.front());
      pending_.pop_front();
      pending_keys_.erase({r.client, r.timestamp});
      if (already_handled(r)) continue;
      proposed_keys_.insert({r.client, r.timestamp});
      list->push_back(std::move(r));
    }
    if (list->empty()) continue;
    PrePrepare pp;
    pp.seq = next_seq_++;
    pp.view = view_;
    pp.requests = list;
    pp.primary_sig = sign_share(*pub_, auth_key_, preprepare_sig_digest(pp.seq, pp.view, block_hash(pp.seq, pp.view, *list)));
    ++stats_.proposals;
    fx.send(everyone_, std::move(pp));
  }
}

// --- view change --------------------------------------------------------------------

bool Replica::has_outstanding_work() const {
  if (!awaited_.empty() || stashed_new_view_) return true;
  for (auto it = slots_.upper_bound(last_executed()); it != slots_.end(); ++it) {
    if (it->second.accepted || it->second.committed) return true;
  }
  return false;
}

void Replica::arm_progress(Effects& fx) {
  if (progress_timer_) return;
  progress_timer_ = true;
  SimTime t = config_.view_change_timeout;
  if (in_view_change_) {
    auto failed = std::min<View>(pending_view_ - view_ - 1, 16);
    t <<= failed;
  }
  fx.set_timer({TimerKind::progress, 0, 0}, t);
}

void Replica::reset_progress(Effects& fx) {
  if (progress_timer_) fx.cancel_timer({TimerKind::progress, 0, 0});
  progress_timer_ = false;
  // Drop waits for requests that have since executed.
  for (auto it = awaited_.begin(); it != awaited_.end();) {
    auto sess = service_.session(it->first.first);
    if (sess && sess->timestamp >= it->first.second) {
      it = awaited_.erase(it);
    } else {
      ++it;
    }
  }
  if (in_view_change_ || has_outstanding_work()) arm_progress(fx);
}

ViewChange Replica::make_view_change(View leaving) {
  ViewChange vc;
  vc.sender = id_;
  vc.view = leaving;
  vc.stable = stable_;
  vc.slots.resize(params_.window);
  for (const auto& [seq, slot] : slots_) {
    if (seq <= stable_.seq || seq > stable_.seq + params_.window) continue;
    auto& e = vc.slots[seq - stable_.seq - 1];
    auto block_of = [&](const Digest& h) -> RequestListPtr {
      auto it = slot.blocks.find(h);
      return it == slot.blocks.end() ? nullptr : it->second.requests;
    };
    if (slot.committed && slot.committed->proof.scheme == SchemeTag::tau) {
      e.lm = TauTauEvidence{slot.committed->view, slot.committed->hash, slot.committed->proof, block_of(slot.committed->hash)};
    } else if (slot.prepared) {
      e.lm = TauWithView{slot.prepared->view, slot.prepared->hash, slot.prepared->tau, block_of(slot.prepared->hash)};
    }
    if (slot.committed && slot.committed->proof.scheme == SchemeTag::sigma) {
      e.fm = SigmaEvidence{slot.committed->view, slot.committed->hash, slot.committed->proof, block_of(slot.committed->hash)};
    } else if (slot.accepted) {
      e.fm = SigmaShareWithView{slot.accepted->view, sign_share(*pub_, sigma_key_, slot.accepted->hash),
                                slot.accepted->requests};
    }
  }
  vc.auth = sign_share(*pub_, auth_key_, vc.signing_digest());
  return vc;
}

void Replica::start_view_change(View target, const ComplaintEvidence& evidence, SimTime, Effects& fx) {
  if (target <= view_) return;
  if (in_view_change_ && target <= pending_view_) return;
  in_view_change_ = true;
  pending_view_ = target;
  ++stats_.view_changes_started;
  {
    NodeEvent e;
    e.kind = NodeEventKind::view_change;
    e.view = target;
    fx.event(e);
  }
  View leaving = target - 1;
  if (complained_.insert(leaving).second) {
    Complaint c;
    c.sender = id_;
    c.view = leaving;
    c.evidence = evidence;
    c.auth = sign_share(*pub_, auth_key_, complaint_digest(leaving));
    std::vector<Endpoint> others;
    for (const auto& e : everyone_) {
      if (e.id != id_) others.push_back(e);
    }
    fx.send(std::move(others), std::move(c));
  }
  fx.send(Endpoint::replica(primary_of(target, params_)), make_view_change(leaving));
  if (batch_timer_) fx.cancel_timer({TimerKind::batch, 0, 0});
  batch_timer_ = false;
  if (progress_timer_) fx.cancel_timer({TimerKind::progress, 0, 0});
  progress_timer_ = false;
  arm_progress(fx);
}

void Replica::handle_complaint(ReplicaId from, const Complaint& m, SimTime now, Effects& fx) {
  if (m.sender != from) {
    reject(RejectReason::bad_share, fx);
    return;
  }
  if (m.view < view_) return;
  if (std::holds_alternative<ContradictionEvidence>(m.evidence) ||
      std::holds_alternative<ComplaintSetEvidence>(m.evidence)) {
    start_view_change(m.view + 1, m.evidence, now, fx);
  }
  auto& set = complaints_[m.view];
  set.emplace(from, SignedComplaint{from, m.auth});
  if (set.size() >= params_.f + 1) {
    ComplaintSetEvidence ev;
    for (const auto& [r, s] : set) ev.complaints.push_back(s);
    start_view_change(m.view + 1, ev, now, fx);
  }
}

void Replica::handle_view_change(ReplicaId from, const ViewChange& m, SimTime now, Effects& fx) {
  if (m.sender != from) {
    reject(RejectReason::bad_share, fx);
    return;
  }
  View target = m.view + 1;
  if (target <= view_ || primary_of(target, params_) != id_) return;
  auto& set = view_changes_[target];
  set.emplace(from, m);
  if (set.size() >= params_.f + 1) start_view_change(target, TimeoutEvidence{}, now, fx);
  if (set.size() >= params_.view_change_quorum() && new_view_sent_.insert(target).second) {
    NewView nv;
    nv.view = target;
    for (const auto& [sender, vc] : set) {
      if (nv.view_changes.size() == params_.view_change_quorum()) break;
      nv.view_changes.push_back(vc);
    }
    fx.send(everyone_, std::move(nv));
  }
}

void Replica::handle_new_view(const NewView& m, SimTime now, Effects& fx) {
  if (m.view <= view_) return;
  process_new_view(m, now, fx);
}

void Replica::enter_view(View v, Effects& fx) {
  view_ = v;
  in_view_change_ = false;
  pending_view_ = v;
  for (auto& [seq, slot] : slots_) {
    slot.rounds.clear();
    slot.pending_prepare.reset();
    slot.awaiting_adopt.reset();
  }
  proposed_keys_.clear();
  if (batch_timer_) fx.cancel_timer({TimerKind::batch, 0, 0});
  batch_timer_ = false;
  complaints_.erase(complaints_.begin(), complaints_.lower_bound(v));
  view_changes_.erase(view_changes_.begin(), view_changes_.upper_bound(v));
  ++stats_.views_installed;
}

void Replica::process_new_view(const NewView& nv, SimTime now, Effects& fx) {
  const StableCert* base = &nv.view_changes.front().stable;
  for (const auto& vc : nv.view_changes) {
    if (vc.stable.seq > base->seq) base = &vc.stable;
  }
  if (base->seq > last_executed()) {
    // Our state is behind the new view's starting point.
    stashed_new_view_ = nv;
    std::vector<Endpoint> holders;
    for (const auto& vc : nv.view_changes) {
      if (vc.stable.seq >= base->seq && vc.sender != id_) holders.push_back(Endpoint::replica(vc.sender));
    }
    fx.send(std::move(holders), SnapshotRequest{base->seq});
    arm_progress(fx);
    return;
  }
  stashed_new_view_.reset();
  if (base->seq > stable_.seq) {
    auto mine = service_.digest_at(base->seq);
    if (mine && *mine == base->state_digest) install_stable(StableCert(*base), fx);
  }
  enter_view(nv.view, fx);
  last_new_view_ = nv;

  Seq last = 0;
  for (const auto& vc : nv.view_changes) {
    for (std::size_t i = 0; i < vc.slots.size(); ++i) {
      if (!vc.slots[i].empty()) last = std::max(last, vc.stable.seq + 1 + i);
    }
  }
  Seq hi = std::min(last, stable_.seq + params_.window);
  std::vector<SlotEvidence> ev;
  for (Seq j = stable_.seq + 1; j <= hi; ++j) {
    if (j <= stable_.seq) continue;
    ev.clear();
    for (const auto& vc : nv.view_changes) {
      if (j > vc.stable.seq && j <= vc.stable.seq + params_.window) {
        ev.push_back(slot_evidence(vc.slots[j - vc.stable.seq - 1]));
      } else {
        ev.emplace_back();
      }
    }
    SafeValue sv = choose_safe_value(ev, params_.f + params_.c + 1);
    switch (sv.kind) {
      case SafeKind::decide: {
        Slot& slot = slot_at(j);
        if (sv.value.requests) {
          slot.blocks.emplace(sv.value.hash, KnownBlock{sv.value.view, sv.value.requests, std::nullopt});
        }
        // Pull the certificate itself out of the evidence.
        std::optional<CombinedSig> proof;
        for (const auto& vc : nv.view_changes) {
          if (j <= vc.stable.seq || j > vc.stable.seq + params_.window) continue;
          const auto& entry = vc.slots[j - vc.stable.seq - 1];
          if (const auto* s = std::get_if<SigmaEvidence>(&entry.fm); s && s->hash == sv.value.hash) proof = s->sigma;
          if (const auto* t = std::get_if<TauTauEvidence>(&entry.lm); t && t->hash == sv.value.hash) proof = t->tau_tau;
          if (proof) break;
        }
        if (proof) commit_slot(j, sv.value.view, sv.value.hash, CommitPath::decided, *proof, now, fx);
        break;
      }
      case SafeKind::adopt: {
        RequestListPtr reqs = sv.value.requests;
        Slot& slot = slot_at(j);
        if (!reqs) {
          if (auto it = slot.blocks.find(sv.value.hash); it != slot.blocks.end()) reqs = it->second.requests;
        } else {
          slot.blocks.emplace(sv.value.hash, KnownBlock{sv.value.view, reqs, std::nullopt});
        }
        if (!reqs) {
          slot.awaiting_adopt = std::make_pair(view_, sv.value.hash);
          request_block(j, sv.value.hash, fx);
          break;
        }
        for (const auto& r : *reqs) proposed_keys_.insert({r.client, r.timestamp});
        accept_preprepare(j, view_, block_hash(j, view_, *reqs), reqs, std::nullopt, now, fx);
        break;
      }
      case SafeKind::noop: {
        auto reqs = empty_block();
        accept_preprepare(j, view_, block_hash(j, view_, *reqs), reqs, std::nullopt, now, fx);
        break;
      }
    }
  }
  next_seq_ = std::max({hi, stable_.seq, last_executed()}) + 1;

  NodeEvent e;
  e.kind = NodeEventKind::view_installed;
  e.view = view_;
  e.seq = stable_.seq;
  fx.event(e);

  auto stash = std::move(future_);
  future_.clear();
  for (auto& [from, msg] : stash) {
    auto v = message_view(*msg);
    if (!v || *v < view_) continue;
    if (*v == view_) {
      on_message(from, *msg, now, fx);
    } else {
      future_.emplace_back(from, msg);
    }
  }
  reset_progress(fx);
  try_propose(now, fx);
}

void Replica::note_future_view(ReplicaId, View, Effects& fx) {
  if (!catch_up_timer_) {
    catch_up_timer_ = true;
    fx.set_timer({TimerKind::catch_up, 0, 0}, config_.catch_up_timeout);
  }
}

// --- catch-up ------------------------------------------------------------------------

void Replica::note_lag(Seq seq, Effects& fx) {
  highest_seen_seq_ = std::max(highest_seen_seq_, seq);
  if (!catch_up_timer_) {
    catch_up_timer_ = true;
    fx.set_timer({TimerKind::catch_up, 0, 0}, config_.catch_up_timeout);
  }
}

void Replica::run_catch_up(SimTime, Effects& fx) {
  catch_up_timer_ = false;
  Seq le = last_executed();
  bool view_behind = false;
  for (const auto& [from, msg] : future_) {
    auto v = message_view(*msg);
    if (v && *v > view_ && (!in_view_change_ || *v >= pending_view_)) view_behind = true;
  }
  bool seq_behind = highest_seen_seq_ > le && (highest_seen_seq_ > le + params_.fast_window() ||
                                               !certs_.empty() || highest_seen_seq_ > stable_.seq + params_.window);
  if (!view_behind && !seq_behind) return;

  std::vector<Endpoint> others;
  for (const auto& e : everyone_) {
    if (e.id != id_) others.push_back(e);
  }
  if (view_behind || highest_seen_seq_ > stable_.seq + params_.window || snapshot_requested_) {
    fx.send(others, SnapshotRequest{le + 1});
    snapshot_requested_ = false;
  } else {
    // Per-slot retrieval of committed blocks; a snapshot follows if this
    // does not move le by the next round.
    Seq hi = std::min(highest_seen_seq_, stable_.seq + params_.window);
    int budget = static_cast<int>(2 * params_.active_window());
    for (Seq s = le + 1; s <= hi && budget > 0; ++s) {
      Slot* slot = find_slot(s);
      if (slot && slot->committed && slot->committed->requests) continue;
      fx.send(others, FetchBlock{s, kZeroDigest});
      --budget;
    }
    snapshot_requested_ = true;
  }
  catch_up_timer_ = true;
  fx.set_timer({TimerKind::catch_up, 0, 0}, config_.catch_up_timeout);
}

void Replica::handle_fetch_block(ReplicaId from, const FetchBlock& m, Effects& fx) {
  Slot* slot = find_slot(m.seq);
  if (slot == nullptr) return;
  BlockData out;
  out.seq = m.seq;
  if (m.hash == kZeroDigest) {
    if (!slot->committed || !slot->committed->requests) return;
    out.view = slot->committed->view;
    out.requests = slot->committed->requests;
    out.proof = slot->committed->proof;
  } else {
    auto it = slot->blocks.find(m.hash);
    if (it == slot->blocks.end()) return;
    out.view = it->second.view;
    out.requests = it->second.requests;
    out.primary_sig = it->second.primary_sig;
    if (slot->committed && slot->committed->hash == m.hash) out.proof = slot->committed->proof;
  }
  fx.send(Endpoint::replica(from), std::move(out));
}

void Replica::handle_block_data(ReplicaId, const BlockData& m, SimTime now, Effects& fx) {
  if (!in_window(m.seq)) return;
  Digest h = block_hash(m.seq, m.view, *m.requests);
  std::optional<SigShare> sig;
  if (m.primary_sig && m.primary_sig->signer == primary_of(m.view, params_) &&
      m.primary_sig->digest == preprepare_sig_digest(m.seq, m.view, h)) {
    sig = m.primary_sig;
  }
  {
    Slot& slot = slot_at(m.seq);
    auto [it, inserted] = slot.blocks.emplace(h, KnownBlock{m.view, m.requests, sig});
    if (!inserted && !it->second.primary_sig) it->second.primary_sig = sig;
    if (sig && slot.accepted && slot.accepted->view == m.view && slot.accepted->hash != h &&
        slot.accepted->primary_sig && m.view >= view_) {
      ContradictionEvidence ev{m.seq, m.view, slot.accepted->hash, *slot.accepted->primary_sig, h, *sig};
      start_view_change(m.view + 1, ev, now, fx);
    }
  }
  if (m.proof) {
    bool binds = (m.proof->scheme == SchemeTag::sigma && m.proof->digest == h) ||
                 (m.proof->scheme == SchemeTag::tau && m.proof->digest == combined_value(SchemeTag::tau, h));
    Slot* slot = find_slot(m.seq);
    if (binds && slot && !slot->committed) {
      commit_slot(m.seq, m.view, h, CommitPath::fetched, *m.proof, now, fx);
    }
  }
  Slot* slot = find_slot(m.seq);
  if (slot && slot->committed && !slot->committed->requests && slot->committed->hash == h) {
    slot->committed->requests = m.requests;
    slot->committed->view = m.view;
    slot->fetching = false;
    execute_ready(now, fx);
    advance_stable(now, fx);
  }
  slot = find_slot(m.seq);
  if (slot && slot->pending_prepare && slot->pending_prepare->tau.digest == h) {
    Prepare p = *slot->pending_prepare;
    slot->pending_prepare.reset();
    if (view_ok(p.view)) accept_prepare(m.seq, p, now, fx);
  }
  slot = find_slot(m.seq);
  if (slot && slot->awaiting_adopt && slot->awaiting_adopt->second == h) {
    View v = slot->awaiting_adopt->first;
    slot->awaiting_adopt.reset();
    if (v == view_ && !in_view_change_) {
      for (const auto& r : *m.requests) proposed_keys_.insert({r.client, r.timestamp});
      accept_preprepare(m.seq, v, block_hash(m.seq, v, *m.requests), m.requests, std::nullopt, now, fx);
    }
  }
}

void Replica::handle_snapshot_request(ReplicaId from, const SnapshotRequest& m, Effects& fx) {
  SnapshotData out;
  out.cert = StableCert{0, kv::genesis_digest(), std::nullopt};
  Seq le = last_executed();
  const StableCert* current = nullptr;
  if (auto it = certs_.find(le); it != certs_.end()) current = &it->second;
  if (stable_.seq == le && stable_.pi) current = &stable_;
  if (current != nullptr && le >= m.min_seq) {
    out.cert = *current;
    out.snapshot = service_.snapshot();
  } else {
    for (auto it = checkpoints_.rbegin(); it != checkpoints_.rend(); ++it) {
      if (it->first >= m.min_seq && it->second.first.pi) {
        out.cert = it->second.first;
        out.snapshot = it->second.second;
        break;
      }
    }
  }
  if (last_new_view_ && last_new_view_->view == view_) out.new_view = last_new_view_;
  if (out.snapshot.empty() && !out.new_view) return;
  fx.send(Endpoint::replica(from), std::move(out));
}

void Replica::handle_snapshot_data(const SnapshotData& m, SimTime now, Effects& fx) {
  if (!m.snapshot.empty() && m.cert.seq > last_executed()) {
    try {
      auto restored = kv::ServiceState::restore(m.snapshot, params_.window);
      if (restored.last_seq() == m.cert.seq && restored.digest() == m.cert.state_digest) {
        service_ = std::move(restored);
        ++stats_.state_transfers;
        NodeEvent e;
        e.kind = NodeEventKind::state_transfer;
        e.seq = m.cert.seq;
        e.view = view_;
        e.digest = m.cert.state_digest;
        fx.event(e);
        checkpoints_[m.cert.seq] = {m.cert, m.snapshot};
        while (checkpoints_.size() > 2) checkpoints_.erase(checkpoints_.begin());
        install_stable(m.cert, fx);
        snapshot_requested_ = false;
        execute_ready(now, fx);
        advance_stable(now, fx);
      }
    } catch (const std::exception&) {
    }
  }
  if (m.new_view && m.new_view->view > view_) {
    process_new_view(*m.new_view, now, fx);
  } else if (stashed_new_view_) {
    NewView nv = *stashed_new_view_;
    if (nv.view > view_) {
      Seq base = 0;
      for (const auto& vc : nv.view_changes) base = std::max(base, vc.stable.seq);
      if (base <= last_executed()) process_new_view(nv, now, fx);
    } else {
      stashed_new_view_.reset();
    }
  }
}

// --- timers ------------------------------------------------------------------------------

void Replica::on_timer(const TimerKey& key, SimTime now, Effects& fx) {
  switch (key.kind) {
    case TimerKind::batch:
      batch_timer_ = false;
      try_propose(now, fx, true);
      break;
    case TimerKind::fast_path: {
      Slot* slot = find_slot(key.seq);
      if (slot == nullptr || slot->committed) break;
      auto rit = slot->rounds.find(key.view);
      if (rit == slot->rounds.end() || rit->second.proof_sent || rit->second.prepare_sent) break;
      Digest h{};
      if (ready(rit->second.tau, params_.tau_threshold, &h) != nullptr) send_prepare(key.seq, key.view, h, fx);
      break;
    }
    case TimerKind::proof_stagger: {
      Slot* slot = find_slot(key.seq);
      if (slot == nullptr || slot->committed) break;
      auto rit = slot->rounds.find(key.view);
      if (rit == slot->rounds.end() || rit->second.proof_sent) break;
      Digest h{};
      if (ready(rit->second.sigma, params_.sigma_threshold, &h) != nullptr)
        send_full_commit_proof(key.seq, key.view, h, fx);
      break;
    }
    case TimerKind::slow_stagger: {
      Slot* slot = find_slot(key.seq);
      if (slot == nullptr || slot->committed) break;
      auto rit = slot->rounds.find(key.view);
      if (rit == slot->rounds.end() || rit->second.slow_sent) break;
      send_slow_proof(key.seq, key.view, fx);
      break;
    }
    case TimerKind::exec_stagger: {
      auto it = exec_rounds_.find(key.seq);
      if (it != exec_rounds_.end() && !it->second.done) finish_exec_round(key.seq, fx);
      break;
    }
    case TimerKind::share_forward: {
      if (!view_ok(key.view)) break;
      Slot* slot = find_slot(key.seq);
      if (slot == nullptr || slot->committed || !slot->accepted || slot->accepted->view != key.view) break;
      if (slot->prepared && slot->prepared->view == key.view) break;
      SignShare ss;
      ss.seq = key.seq;
      ss.view = key.view;
      if (config_.fast_path && key.seq <= last_executed() + params_.fast_window())
        ss.sigma = sign_share(*pub_, sigma_key_, slot->accepted->hash);
      ss.tau = sign_share(*pub_, tau_key_, slot->accepted->hash);
      fx.send(Endpoint::replica(primary_of(key.view, params_)), std::move(ss));
      break;
    }
    case TimerKind::progress:
      progress_timer_ = false;
      if (in_view_change_) {
        start_view_change(pending_view_ + 1, TimeoutEvidence{}, now, fx);
      } else if (has_outstanding_work()) {
        start_view_change(view_ + 1, TimeoutEvidence{}, now, fx);
      }
      break;
    case TimerKind::checkpoint: {
      if (stable_.seq >= key.seq || last_executed() < key.seq) break;
      auto d = service_.digest_at(key.seq);
      if (d) fx.send(everyone_, CheckpointVote{key.seq, sign_share(*pub_, pi_key_, *d)});
      break;
    }
    case TimerKind::catch_up:
      run_catch_up(now, fx);
      break;
    case TimerKind::fetch_retry: {
      Slot* slot = find_slot(key.seq);
      if (slot == nullptr) break;
      slot->fetching = false;
      bool needed = (slot->committed && !slot->committed->requests) || slot->pending_prepare || slot->awaiting_adopt;
      if (!needed || key.view >= kFetchRetries) break;
      Digest h = slot->committed && !slot->committed->requests ? slot->committed->hash
                 : slot->pending_prepare                        ? slot->pending_prepare->tau.digest
                                                                : slot->awaiting_adopt->second;
      request_block(key.seq, h, fx);
      // The retry count rides in the view field of the key.
      fx.cancel_timer({TimerKind::fetch_retry, key.seq, 0});
      fx.set_timer({TimerKind::fetch_retry, key.seq, key.view + 1}, 2 * config_.fast_path_timeout);
      break;
    }
    case TimerKind::client_retry:
      break;
  }
}

void Replica::on_recover(SimTime, Effects& fx) {
  progress_timer_ = false;
  catch_up_timer_ = false;
  batch_timer_ = false;
  for (auto& [seq, slot] : slots_) {
    slot.fetching = false;
    for (auto& [v, round] : slot.rounds) {
      round.fast_timer = round.proof_timer = round.slow_timer = false;
    }
  }
  for (auto& [seq, er] : exec_rounds_) er.timer = false;
  std::vector<Endpoint> others;
  for (const auto& e : everyone_) {
    if (e.id != id_) others.push_back(e);
  }
  fx.send(std::move(others), SnapshotRequest{last_executed() + 1});
  if (in_view_change_ || has_outstanding_work()) arm_progress(fx);
}

}  // namespace tsbft
