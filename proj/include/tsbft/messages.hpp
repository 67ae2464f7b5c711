#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tsbft/crypto.hpp"
#include "tsbft/kvstore.hpp"
#include "tsbft/types.hpp"

namespace tsbft {

struct ClientRequest {
  ClientId client = 0;
  Timestamp timestamp = 0;
  Bytes op;
  SigShare auth;  // client_auth signature over auth_digest()

  Digest auth_digest() const;
  bool operator==(const ClientRequest&) const = default;
};

using RequestList = std::vector<ClientRequest>;
using RequestListPtr = std::shared_ptr<const RequestList>;

Bytes encode_requests(const RequestList& requests);
// H(seq || view || encoded requests). An empty list is the no-op block.
Digest block_hash(Seq seq, View view, const RequestList& requests);
// View-independent identity of a request list.
Digest content_id(const RequestList& requests);

bool same_requests(const RequestListPtr& a, const RequestListPtr& b);

// --- replica protocol messages ----------------------------------------------

struct PrePrepare {
  Seq seq = 0;
  View view = 0;
  RequestListPtr requests;
  SigShare primary_sig;  // replica_auth over preprepare_sig_digest()

  bool operator==(const PrePrepare& o) const;
};

// What a primary signs for a pre-prepare: binds (seq, view, block hash) so a
// pair of conflicting signatures is publicly verifiable.
Digest preprepare_sig_digest(Seq seq, View view, const Digest& block_hash);

// Carries sigma_i(h) for the fast path and tau_i(h) for linear-PBFT. The
// sigma share is withheld outside the fast-path participation window.
struct SignShare {
  Seq seq = 0;
  View view = 0;
  std::optional<SigShare> sigma;
  std::optional<SigShare> tau;
  bool operator==(const SignShare&) const = default;
};

struct FullCommitProof {
  Seq seq = 0;
  View view = 0;
  CombinedSig sigma;
  bool operator==(const FullCommitProof&) const = default;
};

struct Prepare {
  Seq seq = 0;
  View view = 0;
  CombinedSig tau;
  bool operator==(const Prepare&) const = default;
};

// tau_i over the value of tau(h).
struct Commit {
  Seq seq = 0;
  View view = 0;
  SigShare tau_tau;
  bool operator==(const Commit&) const = default;
};

struct FullCommitProofSlow {
  Seq seq = 0;
  View view = 0;
  Digest block_hash{};
  CombinedSig tau_tau;
  bool operator==(const FullCommitProofSlow&) const = default;
};

struct SignState {
  Seq seq = 0;
  SigShare pi;
  bool operator==(const SignState&) const = default;
};

struct FullExecuteProof {
  Seq seq = 0;
  CombinedSig pi;
  bool operator==(const FullExecuteProof&) const = default;
};

struct ExecuteAck {
  Seq seq = 0;
  std::uint32_t position = 0;  // l, 1-based
  ClientId client = 0;
  Timestamp timestamp = 0;
  Bytes val;
  Bytes op;
  CombinedSig pi;
  kv::OpProof proof;
  View view = 0;  // sender's view, lets the client track the primary
  bool operator==(const ExecuteAck&) const = default;
};

// pi(d_s). Sequence 0 is the genesis checkpoint and carries no signature.
struct StableCert {
  Seq seq = 0;
  Digest state_digest{};
  std::optional<CombinedSig> pi;
  bool operator==(const StableCert&) const = default;
};

// --- view-change evidence ---------------------------------------------------

struct NoCommit {
  bool operator==(const NoCommit&) const = default;
};
// tau(tau(h)): the slot committed on the linear path.
struct TauTauEvidence {
  View view = 0;
  Digest hash{};
  CombinedSig tau_tau;
  RequestListPtr requests;  // may be null when the block was never received
  bool operator==(const TauTauEvidence& o) const;
};
// (tau(h), v): highest view whose prepare was accepted.
struct TauWithView {
  View view = 0;
  Digest hash{};
  CombinedSig tau;
  RequestListPtr requests;  // may be null
  bool operator==(const TauWithView& o) const;
};
using CommitEvidence = std::variant<NoCommit, TauTauEvidence, TauWithView>;

struct NoPrePrepare {
  bool operator==(const NoPrePrepare&) const = default;
};
// sigma(h): the slot committed on the fast path.
struct SigmaEvidence {
  View view = 0;
  Digest hash{};
  CombinedSig sigma;
  RequestListPtr requests;  // may be null
  bool operator==(const SigmaEvidence& o) const;
};
// (sigma_i(h), v): highest view whose pre-prepare the sender accepted.
struct SigmaShareWithView {
  View view = 0;
  SigShare share;
  RequestListPtr requests;  // required
  bool operator==(const SigmaShareWithView& o) const;
};
using PrePrepareEvidence = std::variant<NoPrePrepare, SigmaEvidence, SigmaShareWithView>;

struct ViewChangeSlotEntry {
  CommitEvidence lm;
  PrePrepareEvidence fm;
  bool empty() const;
  bool operator==(const ViewChangeSlotEntry&) const = default;
};

// Entry i describes sequence stable.seq + 1 + i; the list always spans the
// full window, absent evidence encoded as (NoCommit, NoPrePrepare).
struct ViewChange {
  ReplicaId sender = 0;
  View view = 0;  // the view being left
  StableCert stable;
  std::vector<ViewChangeSlotEntry> slots;
  SigShare auth;  // replica_auth over signing_digest()

  Digest signing_digest() const;
  bool operator==(const ViewChange&) const = default;
};

struct NewView {
  View view = 0;  // the view being entered
  std::vector<ViewChange> view_changes;
  bool operator==(const NewView&) const = default;
};

struct CheckpointVote {
  Seq seq = 0;
  SigShare pi;
  bool operator==(const CheckpointVote&) const = default;
};

struct TimeoutEvidence {
  bool operator==(const TimeoutEvidence&) const = default;
};
// Two pre-prepares for one (seq, view) with different hashes, both signed
// by that view's primary.
struct ContradictionEvidence {
  Seq seq = 0;
  View view = 0;
  Digest first_hash{};
  SigShare first;
  Digest second_hash{};
  SigShare second;
  bool operator==(const ContradictionEvidence&) const = default;
};
struct SignedComplaint {
  ReplicaId sender = 0;
  SigShare auth;
  bool operator==(const SignedComplaint&) const = default;
};
// f+1 signed complaints against one view.
struct ComplaintSetEvidence {
  std::vector<SignedComplaint> complaints;
  bool operator==(const ComplaintSetEvidence&) const = default;
};
using ComplaintEvidence = std::variant<TimeoutEvidence, ContradictionEvidence, ComplaintSetEvidence>;

struct Complaint {
  ReplicaId sender = 0;
  View view = 0;
  ComplaintEvidence evidence;
  SigShare auth;  // replica_auth over complaint_digest(view)
  bool operator==(const Complaint&) const = default;
};

Digest complaint_digest(View view);

// --- client and recovery traffic ------------------------------------------------

struct RequestMsg {
  ClientRequest request;
  bool retry = false;  // client re-broadcast asking for f+1 replies
  bool operator==(const RequestMsg&) const = default;
};

// Individually signed reply for the f+1 acknowledgement path.
struct Reply {
  ReplicaId replica = 0;
  ClientId client = 0;
  Timestamp timestamp = 0;
  Seq seq = 0;
  Bytes val;
  View view = 0;
  SigShare auth;  // replica_auth over signing_digest()

  Digest signing_digest() const;
  bool operator==(const Reply&) const = default;
};

struct FetchBlock {
  Seq seq = 0;
  Digest hash{};
  bool operator==(const FetchBlock&) const = default;
};

struct BlockData {
  Seq seq = 0;
  View view = 0;
  RequestListPtr requests;
  std::optional<SigShare> primary_sig;
  // sigma(h) or tau(tau(h)) when the sender committed the slot.
  std::optional<CombinedSig> proof;
  bool operator==(const BlockData& o) const;
};

struct SnapshotRequest {
  Seq min_seq = 0;
  bool operator==(const SnapshotRequest&) const = default;
};

struct SnapshotData {
  StableCert cert;
  Bytes snapshot;
  std::optional<NewView> new_view;  // establishes the sender's view
  bool operator==(const SnapshotData&) const = default;
};

using ProtocolMessage =
    std::variant<PrePrepare, SignShare, FullCommitProof, Prepare, Commit, FullCommitProofSlow, SignState,
                 FullExecuteProof, ExecuteAck, ViewChange, NewView, CheckpointVote, Complaint, RequestMsg, Reply,
                 FetchBlock, BlockData, SnapshotRequest, SnapshotData>;

inline constexpr std::size_t kMessageTypeCount = std::variant_size_v<ProtocolMessage>;

const char* message_type_name(std::size_t index);
inline const char* message_type_name(const ProtocolMessage& m) { return message_type_name(m.index()); }
// Index for a wire name, or -1.
int message_type_index(const std::string& name);

// Sequence number a message is about, if any.
std::optional<Seq> message_seq(const ProtocolMessage& m);
std::optional<View> message_view(const ProtocolMessage& m);

// Canonical binary encoding: one type byte followed by the fields in
// declaration order. See docs/wire-format.md.
Bytes encode(const ProtocolMessage& m);
// Throws MalformedMessage on any non-conforming input.
ProtocolMessage decode(BytesView bytes);

// Wire size with every combined signature counted at its succinct size.
std::size_t accounted_size(const ProtocolMessage& m);

// --- stateless validation ----------------------------------------------------

enum class RejectReason {
  bad_client_auth,
  bad_share,
  bad_range,
  empty_block,
};

const char* reject_reason_name(RejectReason r);

struct ValidationContext {
  const PublicMaterial* pub = nullptr;
  const ClusterParams* params = nullptr;
  // Static access-control rule; nullptr admits every request.
  std::function<bool(const ClientRequest&)> allow;
};

// Checks signatures, share/digest consistency, list lengths and id ranges.
// View and sequence acceptance belong to the replica.
std::optional<RejectReason> validate_well_formed(const ProtocolMessage& m, const ValidationContext& ctx);

ClientRequest make_request(const PublicMaterial& pub, const SigningKey& client_key, Timestamp t, Bytes op);

}  // namespace tsbft
