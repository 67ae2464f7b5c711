#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

#include "tsbft/kvstore.hpp"
#include "tsbft/messages.hpp"
#include "tsbft/node.hpp"
#include "tsbft/params.hpp"

namespace tsbft {

// Protocol knobs. Times are virtual microseconds. The four booleans select
// rungs of the evaluation ladder; the defaults are the full protocol.
struct ProtocolConfig {
  SimTime fast_path_timeout = 4000;
  SimTime stagger_delta = 2000;
  SimTime view_change_timeout = 60000;
  SimTime batch_timeout = 500;
  // 0 derives fast_path_timeout + (c + 2) * stagger_delta.
  SimTime share_forward_timeout = 0;
  // 0 derives 2 * fast_path_timeout.
  SimTime checkpoint_timeout = 0;
  // 0 derives view_change_timeout / 4.
  SimTime catch_up_timeout = 0;
  std::uint32_t max_batch = 1024;

  bool fast_path = true;
  bool exec_collector = true;
  bool redundant_collectors = true;
  bool all_to_all = false;

  // Mutation switch for the oracle self-test: accept pre-prepares and
  // shares regardless of view. Never set outside that test.
  bool unsafe_skip_view_checks = false;

  // Static access control; empty admits everything.
  std::function<bool(const ClientRequest&)> allow;
};

// The evaluation ladder, from the all-to-all baseline to the full protocol.
enum class ProtocolVariant : std::uint8_t {
  pbft_all_to_all,
  linear_pbft,
  fast_path,
  exec_collector,
  redundant_c,
};

const char* variant_name(ProtocolVariant v);
// Accepts the names above with or without a leading '+'.
std::optional<ProtocolVariant> parse_variant(std::string_view name);
void apply_variant(ProtocolConfig& config, ProtocolVariant v);

struct ReplicaStats {
  std::uint64_t fast_commits = 0;
  std::uint64_t slow_commits = 0;
  std::uint64_t decided_commits = 0;
  std::uint64_t prepares_sent = 0;
  std::uint64_t view_changes_started = 0;
  std::uint64_t views_installed = 0;
  std::uint64_t rejected = 0;
  std::uint64_t dropped_requests = 0;
  std::uint64_t state_transfers = 0;
  std::uint64_t proposals = 0;
};

std::uint32_t compute_batch_size(double avg_pending, std::uint32_t active_window);

class Replica {
 public:
  Replica(ReplicaId id, const ClusterParams& params, std::shared_ptr<const PublicMaterial> pub,
          ProtocolConfig config);

  void start(SimTime now, Effects& fx);
  void on_message(const Endpoint& from, const ProtocolMessage& m, SimTime now, Effects& fx);
  void on_timer(const TimerKey& key, SimTime now, Effects& fx);
  // Called when a crashed replica resumes; its timers were discarded.
  void on_recover(SimTime now, Effects& fx);

  ReplicaId id() const { return id_; }
  View view() const { return view_; }
  bool in_view_change() const { return in_view_change_; }
  bool is_primary() const { return primary_of(view_, params_) == id_; }
  Seq last_stable() const { return stable_.seq; }
  Seq last_executed() const { return service_.last_seq(); }
  std::size_t log_size() const { return slots_.size(); }
  Seq log_min_seq() const { return slots_.empty() ? 0 : slots_.begin()->first; }
  Seq log_max_seq() const { return slots_.empty() ? 0 : slots_.rbegin()->first; }
  std::size_t pending_size() const { return pending_.size(); }
  const kv::ServiceState& service() const { return service_; }
  const ReplicaStats& stats() const { return stats_; }
  const ClusterParams& params() const { return params_; }
  const ProtocolConfig& config() const { return config_; }

  // The ViewChange this replica would send when leaving `leaving`.
  ViewChange make_view_change(View leaving);

 private:
  struct KnownBlock {
    View view = 0;
    RequestListPtr requests;
    std::optional<SigShare> primary_sig;
  };
  struct Accepted {
    View view = 0;
    Digest hash{};
    RequestListPtr requests;
    std::optional<SigShare> primary_sig;
  };
  struct Prepared {
    View view = 0;
    Digest hash{};
    CombinedSig tau;
  };
  struct Committed {
    View view = 0;
    Digest hash{};
    CommitPath path = CommitPath::fast;
    CombinedSig proof;  // sigma(h) or tau(tau(h))
    RequestListPtr requests;
  };
  using ShareSet = std::map<Digest, std::map<ReplicaId, SigShare>>;
  struct Round {
    ShareSet sigma;
    ShareSet tau;
    ShareSet tau_tau;
    bool proof_sent = false;
    bool prepare_sent = false;
    bool slow_sent = false;
    bool fast_timer = false;
    bool proof_timer = false;
    bool slow_timer = false;
    bool local_prepared = false;  // all-to-all: tau(h) formed locally
  };
  struct Slot {
    std::map<Digest, KnownBlock> blocks;
    std::optional<Accepted> accepted;
    std::optional<Prepared> prepared;
    std::optional<Committed> committed;
    std::map<View, Round> rounds;
    std::optional<Prepare> pending_prepare;  // prepare waiting for its block
    std::optional<std::pair<View, Digest>> awaiting_adopt;  // (entering view, source hash)
    bool fetching = false;
  };
  struct ExecRound {
    ShareSet shares;
    bool done = false;
    bool timer = false;
    bool ack_pending = false;
    std::optional<CombinedSig> pi;
  };

  // message handlers
  void handle_preprepare(ReplicaId from, const PrePrepare& m, SimTime now, Effects& fx);
  void handle_sign_share(ReplicaId from, const SignShare& m, SimTime now, Effects& fx);
  void handle_prepare(ReplicaId from, const Prepare& m, SimTime now, Effects& fx);
  void handle_commit(ReplicaId from, const Commit& m, SimTime now, Effects& fx);
  void handle_full_commit_proof(const FullCommitProof& m, SimTime now, Effects& fx);
  void handle_full_commit_proof_slow(const FullCommitProofSlow& m, SimTime now, Effects& fx);
  void handle_sign_state(ReplicaId from, const SignState& m, SimTime now, Effects& fx);
  void handle_full_execute_proof(const FullExecuteProof& m, SimTime now, Effects& fx);
  void handle_checkpoint_vote(ReplicaId from, const CheckpointVote& m, SimTime now, Effects& fx);
  void handle_view_change(ReplicaId from, const ViewChange& m, SimTime now, Effects& fx);
  void handle_new_view(const NewView& m, SimTime now, Effects& fx);
  void handle_complaint(ReplicaId from, const Complaint& m, SimTime now, Effects& fx);
  void handle_request(const Endpoint& from, const RequestMsg& m, SimTime now, Effects& fx);
  void handle_fetch_block(ReplicaId from, const FetchBlock& m, Effects& fx);
  void handle_block_data(ReplicaId from, const BlockData& m, SimTime now, Effects& fx);
  void handle_snapshot_request(ReplicaId from, const SnapshotRequest& m, Effects& fx);
  void handle_snapshot_data(const SnapshotData& m, SimTime now, Effects& fx);

  // normal case
  bool in_window(Seq seq) const;
  bool view_ok(View v) const;
  Slot* find_slot(Seq seq);
  Slot& slot_at(Seq seq);
  void accept_preprepare(Seq seq, View view, const Digest& hash, RequestListPtr requests,
                         std::optional<SigShare> sig, SimTime now, Effects& fx);
  void send_sign_share(Seq seq, View view, const Digest& hash, Effects& fx);
  std::vector<ReplicaId> share_collectors(Seq seq, View view) const;
  std::vector<ReplicaId> commit_collectors(Seq seq, View view) const;
  int share_collector_index(Seq seq, View view) const;
  int commit_collector_index(Seq seq, View view) const;
  void check_share_round(Seq seq, View view, const Digest& hash, SimTime now, Effects& fx);
  void send_full_commit_proof(Seq seq, View view, const Digest& hash, Effects& fx);
  void send_prepare(Seq seq, View view, const Digest& hash, Effects& fx);
  void accept_prepare(Seq seq, const Prepare& m, SimTime now, Effects& fx);
  void check_commit_round(Seq seq, View view, SimTime now, Effects& fx);
  void send_slow_proof(Seq seq, View view, Effects& fx);
  void commit_slot(Seq seq, View view_hint, const Digest& hash, CommitPath path, const CombinedSig& proof,
                   SimTime now, Effects& fx);
  void request_block(Seq seq, const Digest& hash, Effects& fx);
  void execute_ready(SimTime now, Effects& fx);
  void after_execute(Seq seq, const RequestList& requests, const std::vector<Bytes>& vals, SimTime now,
                     Effects& fx);

  // execution certificates and checkpoints
  std::vector<ReplicaId> exec_collectors(Seq seq) const;
  void check_exec_round(Seq seq, SimTime now, Effects& fx);
  void finish_exec_round(Seq seq, Effects& fx);
  void send_acks(Seq seq, const CombinedSig& pi, Effects& fx);
  void add_certificate(const StableCert& cert, SimTime now, Effects& fx);
  void advance_stable(SimTime now, Effects& fx);
  void install_stable(const StableCert& cert, Effects& fx);
  void garbage_collect();

  // primary
  void try_propose(SimTime now, Effects& fx, bool timer_fired = false);
  bool already_handled(const ClientRequest& r) const;

  // replies
  void send_reply(ClientId client, SimTime now, Effects& fx);

  // view change
  void start_view_change(View target, const ComplaintEvidence& evidence, SimTime now, Effects& fx);
  void process_new_view(const NewView& nv, SimTime now, Effects& fx);
  void enter_view(View v, Effects& fx);
  bool has_outstanding_work() const;
  void arm_progress(Effects& fx);
  void reset_progress(Effects& fx);
  void note_future_view(ReplicaId from, View v, Effects& fx);
  void stash_future(const Endpoint& from, const ProtocolMessage& m);

  // catch-up
  void note_lag(Seq seq, Effects& fx);
  void run_catch_up(SimTime now, Effects& fx);

  std::vector<Endpoint> all_replicas() const;
  std::vector<Endpoint> to_endpoints(const std::vector<ReplicaId>& ids) const;
  void reject(RejectReason r, Effects& fx);

  ReplicaId id_;
  ClusterParams params_;
  std::shared_ptr<const PublicMaterial> pub_;
  ProtocolConfig config_;
  ValidationContext validation_;
  SigningKey sigma_key_, tau_key_, pi_key_, auth_key_;
  std::vector<Endpoint> everyone_;

  View view_ = 0;
  bool in_view_change_ = false;
  View pending_view_ = 0;
  StableCert stable_;
  kv::ServiceState service_;
  std::map<Seq, Slot> slots_;
  std::map<Seq, ExecRound> exec_rounds_;
  std::map<Seq, StableCert> certs_;
  std::map<Seq, ShareSet> votes_;
  std::map<Seq, std::pair<StableCert, Bytes>> checkpoints_;  // snapshots at checkpoint seqs
  Seq fast_stable_target_ = 0;
  Seq highest_seen_seq_ = 0;

  // primary
  std::deque<ClientRequest> pending_;
  std::set<std::pair<ClientId, Timestamp>> pending_keys_;
  std::set<std::pair<ClientId, Timestamp>> proposed_keys_;
  Seq next_seq_ = 1;
  double avg_pending_ = 0;
  bool batch_timer_ = false;

  // view change
  std::map<View, std::map<ReplicaId, SignedComplaint>> complaints_;
  std::set<View> complained_;
  std::map<View, std::map<ReplicaId, ViewChange>> view_changes_;
  std::set<View> new_view_sent_;
  std::optional<NewView> last_new_view_;
  std::optional<NewView> stashed_new_view_;
  std::vector<std::pair<Endpoint, MessagePtr>> future_;
  bool progress_timer_ = false;
  std::map<std::pair<ClientId, Timestamp>, SimTime> awaited_;

  bool catch_up_timer_ = false;
  bool snapshot_requested_ = false;

  ReplicaStats stats_;
};

}  // namespace tsbft
