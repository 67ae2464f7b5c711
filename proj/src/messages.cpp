#include "tsbft/messages.hpp"

#include <algorithm>
#include <set>

#include "tsbft/codec.hpp"
#include "tsbft/hash.hpp"

namespace tsbft {

namespace {

constexpr std::size_t kShareSize = 1 + 4 + 32 + 32;
constexpr std::size_t kRequestMinSize = 8 + 8 + 4 + kShareSize;

// Writer plus bookkeeping for accounted_size: raw bytes spent on combined
// signature evidence and how many combined signatures were written.
struct Out {
  Writer w;
  std::size_t combined_raw = 0;
  std::size_t combined_count = 0;
};

void put(Out& o, const SigShare& s) {
  o.w.u8(static_cast<std::uint8_t>(s.scheme)).u32(s.signer).digest(s.digest).digest(s.tag);
}

void put(Out& o, const CombinedSig& c) {
  auto before = o.w.size();
  o.w.u8(static_cast<std::uint8_t>(c.scheme)).digest(c.digest).u32(static_cast<std::uint32_t>(c.evidence.size()));
  for (const auto& e : c.evidence) o.w.u32(e.signer).digest(e.tag);
  o.combined_raw += o.w.size() - before;
  ++o.combined_count;
}

void put(Out& o, const ClientRequest& r) {
  o.w.u64(r.client).u64(r.timestamp).blob(r.op);
  put(o, r.auth);
}

void put_list(Out& o, const RequestListPtr& list) {
  if (!list) {
    o.w.u32(0);
    return;
  }
  o.w.u32(static_cast<std::uint32_t>(list->size()));
  for (const auto& r : *list) put(o, r);
}

void put_opt_list(Out& o, const RequestListPtr& list) {
  o.w.boolean(static_cast<bool>(list));
  if (list) put_list(o, list);
}

template <typename T>
void put_opt(Out& o, const std::optional<T>& v) {
  o.w.boolean(v.has_value());
  if (v) put(o, *v);
}

SchemeTag get_scheme(Reader& r) {
  auto raw = r.u8();
  if (!is_valid_scheme_tag(raw)) throw MalformedMessage("unknown signature scheme");
  return static_cast<SchemeTag>(raw);
}

SigShare get_share(Reader& r) {
  SigShare s;
  s.scheme = get_scheme(r);
  s.signer = r.u32();
  s.digest = r.digest();
  s.tag = r.digest();
  return s;
}

CombinedSig get_combined(Reader& r) {
  CombinedSig c;
  c.scheme = get_scheme(r);
  c.digest = r.digest();
  auto count = r.count(4 + 32);
  c.evidence.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    ShareEvidence e;
    e.signer = r.u32();
    e.tag = r.digest();
    c.evidence.push_back(e);
  }
  return c;
}

ClientRequest get_request(Reader& r) {
  ClientRequest q;
  q.client = r.u64();
  q.timestamp = r.u64();
  q.op = r.blob();
  q.auth = get_share(r);
  return q;
}

RequestListPtr get_list(Reader& r) {
  auto count = r.count(kRequestMinSize);
  auto list = std::make_shared<RequestList>();
  list->reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) list->push_back(get_request(r));
  return list;
}

RequestListPtr get_opt_list(Reader& r) {
  if (!r.boolean()) return nullptr;
  return get_list(r);
}

std::optional<SigShare> get_opt_share(Reader& r) {
  if (!r.boolean()) return std::nullopt;
  return get_share(r);
}

std::optional<CombinedSig> get_opt_combined(Reader& r) {
  if (!r.boolean()) return std::nullopt;
  return get_combined(r);
}

void put(Out& o, const StableCert& c) {
  o.w.u64(c.seq).digest(c.state_digest);
  put_opt(o, c.pi);
}

StableCert get_stable(Reader& r) {
  StableCert c;
  c.seq = r.u64();
  c.state_digest = r.digest();
  c.pi = get_opt_combined(r);
  return c;
}

void put(Out& o, const ViewChangeSlotEntry& e) {
  o.w.u8(static_cast<std::uint8_t>(e.lm.index()));
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, TauTauEvidence>) {
          o.w.u64(v.view).digest(v.hash);
          put(o, v.tau_tau);
          put_opt_list(o, v.requests);
        } else if constexpr (std::is_same_v<T, TauWithView>) {
          o.w.u64(v.view).digest(v.hash);
          put(o, v.tau);
          put_opt_list(o, v.requests);
        }
      },
      e.lm);
  o.w.u8(static_cast<std::uint8_t>(e.fm.index()));
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, SigmaEvidence>) {
          o.w.u64(v.view).digest(v.hash);
          put(o, v.sigma);
          put_opt_list(o, v.requests);
        } else if constexpr (std::is_same_v<T, SigmaShareWithView>) {
          o.w.u64(v.view);
          put(o, v.share);
          put_list(o, v.requests);
        }
      },
      e.fm);
}

ViewChangeSlotEntry get_slot(Reader& r) {
  ViewChangeSlotEntry e;
  switch (r.u8()) {
    case 0: e.lm = NoCommit{}; break;
    case 1: {
      TauTauEvidence v;
      v.view = r.u64();
      v.hash = r.digest();
      v.tau_tau = get_combined(r);
      v.requests = get_opt_list(r);
      e.lm = std::move(v);
      break;
    }
    case 2: {
      TauWithView v;
      v.view = r.u64();
      v.hash = r.digest();
      v.tau = get_combined(r);
      v.requests = get_opt_list(r);
      e.lm = std::move(v);
      break;
    }
    default: throw MalformedMessage("unknown commit evidence tag");
  }
  switch (r.u8()) {
    case 0: e.fm = NoPrePrepare{}; break;
    case 1: {
      SigmaEvidence v;
      v.view = r.u64();
      v.hash = r.digest();
      v.sigma = get_combined(r);
      v.requests = get_opt_list(r);
      e.fm = std::move(v);
      break;
    }
    case 2: {
      SigmaShareWithView v;
      v.view = r.u64();
      v.share = get_share(r);
      v.requests = get_list(r);
      e.fm = std::move(v);
      break;
    }
    default: throw MalformedMessage("unknown pre-prepare evidence tag");
  }
  return e;
}

void put_vc_body(Out& o, const ViewChange& m) {
  o.w.u32(m.sender).u64(m.view);
  put(o, m.stable);
  o.w.u32(static_cast<std::uint32_t>(m.slots.size()));
  for (const auto& e : m.slots) put(o, e);
}

void put(Out& o, const ViewChange& m) {
  put_vc_body(o, m);
  put(o, m.auth);
}

ViewChange get_view_change(Reader& r) {
  ViewChange m;
  m.sender = r.u32();
  m.view = r.u64();
  m.stable = get_stable(r);
  auto count = r.count(2);
  m.slots.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) m.slots.push_back(get_slot(r));
  m.auth = get_share(r);
  return m;
}

void put(Out& o, const NewView& m) {
  o.w.u64(m.view).u32(static_cast<std::uint32_t>(m.view_changes.size()));
  for (const auto& vc : m.view_changes) put(o, vc);
}

NewView get_new_view(Reader& r) {
  NewView m;
  m.view = r.u64();
  auto count = r.count(4 + 8 + 8 + 32 + 1 + 4 + kShareSize);
  m.view_changes.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) m.view_changes.push_back(get_view_change(r));
  return m;
}

void put_body(Out& o, const PrePrepare& m) {
  o.w.u64(m.seq).u64(m.view);
  put_list(o, m.requests);
  put(o, m.primary_sig);
}
void put_body(Out& o, const SignShare& m) {
  o.w.u64(m.seq).u64(m.view);
  put_opt(o, m.sigma);
  put_opt(o, m.tau);
}
void put_body(Out& o, const FullCommitProof& m) {
  o.w.u64(m.seq).u64(m.view);
  put(o, m.sigma);
}
void put_body(Out& o, const Prepare& m) {
  o.w.u64(m.seq).u64(m.view);
  put(o, m.tau);
}
void put_body(Out& o, const Commit& m) {
  o.w.u64(m.seq).u64(m.view);
  put(o, m.tau_tau);
}
void put_body(Out& o, const FullCommitProofSlow& m) {
  o.w.u64(m.seq).u64(m.view).digest(m.block_hash);
  put(o, m.tau_tau);
}
void put_body(Out& o, const SignState& m) {
  o.w.u64(m.seq);
  put(o, m.pi);
}
void put_body(Out& o, const FullExecuteProof& m) {
  o.w.u64(m.seq);
  put(o, m.pi);
}
void put_body(Out& o, const ExecuteAck& m) {
  o.w.u64(m.seq).u32(m.position).u64(m.client).u64(m.timestamp).blob(m.val).blob(m.op);
  put(o, m.pi);
  m.proof.encode(o.w);
  o.w.u64(m.view);
}
void put_body(Out& o, const ViewChange& m) { put(o, m); }
void put_body(Out& o, const NewView& m) { put(o, m); }
void put_body(Out& o, const CheckpointVote& m) {
  o.w.u64(m.seq);
  put(o, m.pi);
}
void put_body(Out& o, const Complaint& m) {
  o.w.u32(m.sender).u64(m.view).u8(static_cast<std::uint8_t>(m.evidence.index()));
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ContradictionEvidence>) {
          o.w.u64(v.seq).u64(v.view).digest(v.first_hash);
          put(o, v.first);
          o.w.digest(v.second_hash);
          put(o, v.second);
        } else if constexpr (std::is_same_v<T, ComplaintSetEvidence>) {
          o.w.u32(static_cast<std::uint32_t>(v.complaints.size()));
          for (const auto& c : v.complaints) {
            o.w.u32(c.sender);
            put(o, c.auth);
          }
        }
      },
      m.evidence);
  put(o, m.auth);
}
void put_body(Out& o, const RequestMsg& m) {
  put(o, m.request);
  o.w.boolean(m.retry);
}
void put_body(Out& o, const Reply& m) {
  o.w.u32(m.replica).u64(m.client).u64(m.timestamp).u64(m.seq).blob(m.val).u64(m.view);
  put(o, m.auth);
}
void put_body(Out& o, const FetchBlock& m) { o.w.u64(m.seq).digest(m.hash); }
void put_body(Out& o, const BlockData& m) {
  o.w.u64(m.seq).u64(m.view);
  put_list(o, m.requests);
  put_opt(o, m.primary_sig);
  put_opt(o, m.proof);
}
void put_body(Out& o, const SnapshotRequest& m) { o.w.u64(m.min_seq); }
void put_body(Out& o, const SnapshotData& m) {
  put(o, m.cert);
  o.w.blob(m.snapshot);
  put_opt(o, m.new_view);
}

Out encode_out(const ProtocolMessage& m) {
  Out o;
  o.w.u8(static_cast<std::uint8_t>(m.index() + 1));
  std::visit([&](const auto& v) { put_body(o, v); }, m);
  return o;
}

ProtocolMessage decode_body(std::uint8_t type, Reader& r) {
  switch (type) {
    case 1: {
      PrePrepare m;
      m.seq = r.u64();
      m.view = r.u64();
      m.requests = get_list(r);
      m.primary_sig = get_share(r);
      return m;
    }
    case 2: {
      SignShare m;
      m.seq = r.u64();
      m.view = r.u64();
      m.sigma = get_opt_share(r);
      m.tau = get_opt_share(r);
      return m;
    }
    case 3: {
      FullCommitProof m;
      m.seq = r.u64();
      m.view = r.u64();
      m.sigma = get_combined(r);
      return m;
    }
    case 4: {
      Prepare m;
      m.seq = r.u64();
      m.view = r.u64();
      m.tau = get_combined(r);
      return m;
    }
    case 5: {
      Commit m;
      m.seq = r.u64();
      m.view = r.u64();
      m.tau_tau = get_share(r);
      return m;
    }
    case 6: {
      FullCommitProofSlow m;
      m.seq = r.u64();
      m.view = r.u64();
      m.block_hash = r.digest();
      m.tau_tau = get_combined(r);
      return m;
    }
    case 7: {
      SignState m;
      m.seq = r.u64();
      m.pi = get_share(r);
      return m;
    }
    case 8: {
      FullExecuteProof m;
      m.seq = r.u64();
      m.pi = get_combined(r);
      return m;
    }
    case 9: {
      ExecuteAck m;
      m.seq = r.u64();
      m.position = r.u32();
      m.client = r.u64();
      m.timestamp = r.u64();
      m.val = r.blob();
      m.op = r.blob();
      m.pi = get_combined(r);
      m.proof = kv::OpProof::decode(r);
      m.view = r.u64();
      return m;
    }
    case 10: return get_view_change(r);
    case 11: return get_new_view(r);
    case 12: {
      CheckpointVote m;
      m.seq = r.u64();
      m.pi = get_share(r);
      return m;
    }
    case 13: {
      Complaint m;
      m.sender = r.u32();
      m.view = r.u64();
      switch (r.u8()) {
        case 0: m.evidence = TimeoutEvidence{}; break;
        case 1: {
          ContradictionEvidence e;
          e.seq = r.u64();
          e.view = r.u64();
          e.first_hash = r.digest();
          e.first = get_share(r);
          e.second_hash = r.digest();
          e.second = get_share(r);
          m.evidence = e;
          break;
        }
        case 2: {
          ComplaintSetEvidence e;
          auto count = r.count(4 + kShareSize);
          for (std::uint32_t i = 0; i < count; ++i) {
            SignedComplaint c;
            c.sender = r.u32();
            c.auth = get_share(r);
            e.complaints.push_back(c);
          }
          m.evidence = std::move(e);
          break;
        }
        default: throw MalformedMessage("unknown complaint evidence tag");
      }
      m.auth = get_share(r);
      return m;
    }
    case 14: {
      RequestMsg m;
      m.request = get_request(r);
      m.retry = r.boolean();
      return m;
    }
    case 15: {
      Reply m;
      m.replica = r.u32();
      m.client = r.u64();
      m.timestamp = r.u64();
      m.seq = r.u64();
      m.val = r.blob();
      m.view = r.u64();
      m.auth = get_share(r);
      return m;
    }
    case 16: {
      FetchBlock m;
      m.seq = r.u64();
      m.hash = r.digest();
      return m;
    }
    case 17: {
      BlockData m;
      m.seq = r.u64();
      m.view = r.u64();
      m.requests = get_list(r);
      m.primary_sig = get_opt_share(r);
      m.proof = get_opt_combined(r);
      return m;
    }
    case 18: {
      SnapshotRequest m;
      m.min_seq = r.u64();
      return m;
    }
    case 19: {
      SnapshotData m;
      m.cert = get_stable(r);
      m.snapshot = r.blob();
      if (r.boolean()) m.new_view = get_new_view(r);
      return m;
    }
    default: throw MalformedMessage("unknown message type");
  }
}

}  // namespace

// --- requests ----------------------------------------------------------------

Digest ClientRequest::auth_digest() const {
  return Hasher().raw("tsbft/request").u64(client).u64(timestamp).blob(op).finish();
}

Bytes encode_requests(const RequestList& requests) {
  Out o;
  o.w.u32(static_cast<std::uint32_t>(requests.size()));
  for (const auto& r : requests) put(o, r);
  return std::move(o.w).bytes();
}

Digest block_hash(Seq seq, View view, const RequestList& requests) {
  return protocol_hash(seq, view, encode_requests(requests));
}

Digest content_id(const RequestList& requests) {
  return Hasher().raw("tsbft/content").blob(encode_requests(requests)).finish();
}

bool same_requests(const RequestListPtr& a, const RequestListPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

Digest preprepare_sig_digest(Seq seq, View view, const Digest& block_hash) {
  return Hasher().raw("tsbft/pre-prepare").u64(seq).u64(view).digest(block_hash).finish();
}

bool PrePrepare::operator==(const PrePrepare& o) const {
  return seq == o.seq && view == o.view && same_requests(requests, o.requests) && primary_sig == o.primary_sig;
}
bool TauTauEvidence::operator==(const TauTauEvidence& o) const {
  return view == o.view && hash == o.hash && tau_tau == o.tau_tau && same_requests(requests, o.requests);
}
bool TauWithView::operator==(const TauWithView& o) const {
  return view == o.view && hash == o.hash && tau == o.tau && same_requests(requests, o.requests);
}
bool SigmaEvidence::operator==(const SigmaEvidence& o) const {
  return view == o.view && hash == o.hash && sigma == o.sigma && same_requests(requests, o.requests);
}
bool SigmaShareWithView::operator==(const SigmaShareWithView& o) const {
  return view == o.view && share == o.share && same_requests(requests, o.requests);
}
bool BlockData::operator==(const BlockData& o) const {
  return seq == o.seq && view == o.view && same_requests(requests, o.requests) && primary_sig == o.primary_sig &&
         proof == o.proof;
}

bool ViewChangeSlotEntry::empty() const {
  return std::holds_alternative<NoCommit>(lm) && std::holds_alternative<NoPrePrepare>(fm);
}

Digest ViewChange::signing_digest() const {
  Out o;
  put_vc_body(o, *this);
  return Hasher().raw("tsbft/view-change").bytes(o.w.bytes()).finish();
}

Digest complaint_digest(View view) { return Hasher().raw("tsbft/complaint").u64(view).finish(); }

Digest Reply::signing_digest() const {
  return Hasher().raw("tsbft/reply").u32(replica).u64(client).u64(timestamp).u64(seq).blob(val).u64(view).finish();
}

// --- type metadata -------------------------------------------------------------

namespace {
constexpr const char* kTypeNames[kMessageTypeCount] = {
    "pre-prepare", "sign-share",  "full-commit-proof", "prepare",    "commit",      "full-commit-proof-slow",
    "sign-state",  "full-execute-proof", "execute-ack", "view-change", "new-view",  "checkpoint",
    "complaint",   "request",     "reply",             "fetch-block", "block-data", "snapshot-request",
    "snapshot-data",
};
}  // namespace

const char* message_type_name(std::size_t index) {
  return index < kMessageTypeCount ? kTypeNames[index] : "unknown";
}

int message_type_index(const std::string& name) {
  for (std::size_t i = 0; i < kMessageTypeCount; ++i) {
    if (name == kTypeNames[i]) return static_cast<int>(i);
  }
  return -1;
}

std::optional<Seq> message_seq(const ProtocolMessage& m) {
  return std::visit(
      [](const auto& v) -> std::optional<Seq> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ViewChange> || std::is_same_v<T, NewView> || std::is_same_v<T, Complaint> ||
                      std::is_same_v<T, RequestMsg> || std::is_same_v<T, SnapshotRequest> ||
                      std::is_same_v<T, SnapshotData>) {
          return std::nullopt;
        } else {
          return v.seq;
        }
      },
      m);
}

std::optional<View> message_view(const ProtocolMessage& m) {
  return std::visit(
      [](const auto& v) -> std::optional<View> {
        if constexpr (requires { v.view; }) {
          return v.view;
        } else {
          return std::nullopt;
        }
      },
      m);
}

Bytes encode(const ProtocolMessage& m) { return std::move(encode_out(m).w).bytes(); }

ProtocolMessage decode(BytesView bytes) {
  Reader r(bytes);
  auto type = r.u8();
  auto m = decode_body(type, r);
  r.expect_end();
  return m;
}

std::size_t accounted_size(const ProtocolMessage& m) {
  auto o = encode_out(m);
  return o.w.size() - o.combined_raw + o.combined_count * CombinedSig::kAccountedSize;
}

// --- validation ------------------------------------------------------------------

const char* reject_reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::bad_client_auth: return "bad_client_auth";
    case RejectReason::bad_share: return "bad_share";
    case RejectReason::bad_range: return "bad_range";
    case RejectReason::empty_block: return "empty_block";
  }
  return "unknown";
}

namespace {

using Verdict = std::optional<RejectReason>;

class Validator {
 public:
  explicit Validator(const ValidationContext& ctx) : ctx_(ctx), pub_(*ctx.pub), params_(*ctx.params) {}

  bool replica_in_range(ReplicaId id) const { return id >= 1 && id <= params_.n; }

  bool share_ok(const SigShare& s, SchemeTag scheme) const { return s.scheme == scheme && verify_share(pub_, s); }
  bool combined_ok(const CombinedSig& c, SchemeTag scheme) const {
    return c.scheme == scheme && verify_combined(pub_, c);
  }

  Verdict request(const ClientRequest& r) const {
    if (r.auth.scheme != SchemeTag::client_auth || r.auth.signer != r.client) return RejectReason::bad_client_auth;
    if (r.client < 1 || r.client > pub_.scheme(SchemeTag::client_auth).total) return RejectReason::bad_client_auth;
    if (r.auth.digest != r.auth_digest() || !verify_share(pub_, r.auth)) return RejectReason::bad_client_auth;
    if (ctx_.allow && !ctx_.allow(r)) return RejectReason::bad_client_auth;
    return std::nullopt;
  }

  Verdict requests(const RequestListPtr& list) const {
    if (!list) return RejectReason::bad_range;
    for (const auto& r : *list) {
      if (auto v = request(r)) return v;
    }
    return std::nullopt;
  }

  Verdict stable(const StableCert& c) const {
    if (c.seq == 0) {
      if (c.pi || c.state_digest != kv::genesis_digest()) return RejectReason::bad_share;
      return std::nullopt;
    }
    if (!c.pi || c.pi->digest != c.state_digest || !combined_ok(*c.pi, SchemeTag::pi)) return RejectReason::bad_share;
    return std::nullopt;
  }

  // A list carried as evidence must hash to the claimed block hash.
  static bool list_matches(const RequestListPtr& list, Seq seq, View view, const Digest& hash) {
    return !list || block_hash(seq, view, *list) == hash;
  }

  Verdict slot(const ViewChange& vc, Seq seq, const ViewChangeSlotEntry& e) const {
    Verdict out;
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, TauTauEvidence>) {
            if (v.view > vc.view) out = RejectReason::bad_range;
            else if (v.tau_tau.digest != combined_value(SchemeTag::tau, v.hash) ||
                     !combined_ok(v.tau_tau, SchemeTag::tau) || !list_matches(v.requests, seq, v.view, v.hash))
              out = RejectReason::bad_share;
          } else if constexpr (std::is_same_v<T, TauWithView>) {
            if (v.view > vc.view) out = RejectReason::bad_range;
            else if (v.tau.digest != v.hash || !combined_ok(v.tau, SchemeTag::tau) ||
                     !list_matches(v.requests, seq, v.view, v.hash))
              out = RejectReason::bad_share;
          }
        },
        e.lm);
    if (out) return out;
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, SigmaEvidence>) {
            if (v.view > vc.view) out = RejectReason::bad_range;
            else if (v.sigma.digest != v.hash || !combined_ok(v.sigma, SchemeTag::sigma) ||
                     !list_matches(v.requests, seq, v.view, v.hash))
              out = RejectReason::bad_share;
          } else if constexpr (std::is_same_v<T, SigmaShareWithView>) {
            if (v.view > vc.view) out = RejectReason::bad_range;
            else if (!v.requests || v.share.signer != vc.sender || !share_ok(v.share, SchemeTag::sigma) ||
                     block_hash(seq, v.view, *v.requests) != v.share.digest)
              out = RejectReason::bad_share;
          }
        },
        e.fm);
    return out;
  }

  Verdict view_change(const ViewChange& vc) const {
    if (!replica_in_range(vc.sender) || vc.slots.size() != params_.window) return RejectReason::bad_range;
    if (vc.auth.signer != vc.sender || vc.auth.digest != vc.signing_digest() ||
        !share_ok(vc.auth, SchemeTag::replica_auth))
      return RejectReason::bad_share;
    if (auto v = stable(vc.stable)) return v;
    for (std::size_t i = 0; i < vc.slots.size(); ++i) {
      if (vc.slots[i].empty()) continue;
      if (auto v = slot(vc, vc.stable.seq + 1 + i, vc.slots[i])) return v;
    }
    return std::nullopt;
  }

  Verdict new_view(const NewView& nv) const {
    if (nv.view == 0 || nv.view_changes.size() != params_.view_change_quorum()) return RejectReason::bad_range;
    std::set<ReplicaId> senders;
    for (const auto& vc : nv.view_changes) {
      if (vc.view + 1 != nv.view || !senders.insert(vc.sender).second) return RejectReason::bad_range;
      if (auto v = view_change(vc)) return v;
    }
    return std::nullopt;
  }

  Verdict signed_complaint(ReplicaId sender, View view, const SigShare& auth) const {
    if (!replica_in_range(sender)) return RejectReason::bad_range;
    if (auth.signer != sender || auth.digest != complaint_digest(view) || !share_ok(auth, SchemeTag::replica_auth))
      return RejectReason::bad_share;
    return std::nullopt;
  }

  Verdict complaint(const Complaint& c) const {
    if (auto v = signed_complaint(c.sender, c.view, c.auth)) return v;
    Verdict out;
    std::visit(
        [&](const auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, ContradictionEvidence>) {
            auto primary = primary_of(e.view, params_);
            if (e.view != c.view || e.first_hash == e.second_hash) {
              out = RejectReason::bad_range;
            } else if (e.first.signer != primary || e.second.signer != primary ||
                       e.first.digest != preprepare_sig_digest(e.seq, e.view, e.first_hash) ||
                       e.second.digest != preprepare_sig_digest(e.seq, e.view, e.second_hash) ||
                       !share_ok(e.first, SchemeTag::replica_auth) || !share_ok(e.second, SchemeTag::replica_auth)) {
              out = RejectReason::bad_share;
            }
          } else if constexpr (std::is_same_v<T, ComplaintSetEvidence>) {
            std::set<ReplicaId> senders;
            for (const auto& s : e.complaints) {
              if (!senders.insert(s.sender).second) {
                out = RejectReason::bad_range;
                return;
              }
              if (auto v = signed_complaint(s.sender, c.view, s.auth)) {
                out = v;
                return;
              }
            }
            if (senders.size() < params_.f + 1) out = RejectReason::bad_range;
          }
        },
        c.evidence);
    return out;
  }

  Verdict operator()(const PrePrepare& m) const {
    if (!m.requests || m.requests->empty()) return RejectReason::empty_block;
    if (m.primary_sig.signer != primary_of(m.view, params_)) return RejectReason::bad_range;
    if (auto v = requests(m.requests)) return v;
    if (m.primary_sig.digest != preprepare_sig_digest(m.seq, m.view, block_hash(m.seq, m.view, *m.requests)) ||
        !share_ok(m.primary_sig, SchemeTag::replica_auth))
      return RejectReason::bad_share;
    return std::nullopt;
  }
  Verdict operator()(const SignShare& m) const {
    if (!m.sigma && !m.tau) return RejectReason::bad_share;
    if (m.sigma && !replica_in_range(m.sigma->signer)) return RejectReason::bad_range;
    if (m.tau && !replica_in_range(m.tau->signer)) return RejectReason::bad_range;
    if (m.sigma && m.tau && (m.sigma->digest != m.tau->digest || m.sigma->signer != m.tau->signer))
      return RejectReason::bad_share;
    if (m.sigma && !share_ok(*m.sigma, SchemeTag::sigma)) return RejectReason::bad_share;
    if (m.tau && !share_ok(*m.tau, SchemeTag::tau)) return RejectReason::bad_share;
    return std::nullopt;
  }
  Verdict operator()(const FullCommitProof& m) const {
    return combined_ok(m.sigma, SchemeTag::sigma) ? Verdict{} : RejectReason::bad_share;
  }
  Verdict operator()(const Prepare& m) const {
    return combined_ok(m.tau, SchemeTag::tau) ? Verdict{} : RejectReason::bad_share;
  }
  Verdict operator()(const Commit& m) const {
    if (!replica_in_range(m.tau_tau.signer)) return RejectReason::bad_range;
    return share_ok(m.tau_tau, SchemeTag::tau) ? Verdict{} : RejectReason::bad_share;
  }
  Verdict operator()(const FullCommitProofSlow& m) const {
    if (m.tau_tau.digest != combined_value(SchemeTag::tau, m.block_hash) || !combined_ok(m.tau_tau, SchemeTag::tau))
      return RejectReason::bad_share;
    return std::nullopt;
  }
  Verdict operator()(const SignState& m) const {
    if (!replica_in_range(m.pi.signer)) return RejectReason::bad_range;
    return share_ok(m.pi, SchemeTag::pi) ? Verdict{} : RejectReason::bad_share;
  }
  Verdict operator()(const FullExecuteProof& m) const {
    return combined_ok(m.pi, SchemeTag::pi) ? Verdict{} : RejectReason::bad_share;
  }
  Verdict operator()(const ExecuteAck& m) const {
    if (m.position < 1) return RejectReason::bad_range;
    return combined_ok(m.pi, SchemeTag::pi) ? Verdict{} : RejectReason::bad_share;
  }
  Verdict operator()(const ViewChange& m) const { return view_change(m); }
  Verdict operator()(const NewView& m) const { return new_view(m); }
  Verdict operator()(const CheckpointVote& m) const {
    if (!replica_in_range(m.pi.signer)) return RejectReason::bad_range;
    return share_ok(m.pi, SchemeTag::pi) ? Verdict{} : RejectReason::bad_share;
  }
  Verdict operator()(const Complaint& m) const { return complaint(m); }
  Verdict operator()(const RequestMsg& m) const { return request(m.request); }
  Verdict operator()(const Reply& m) const {
    if (!replica_in_range(m.replica)) return RejectReason::bad_range;
    if (m.auth.signer != m.replica || m.auth.digest != m.signing_digest() ||
        !share_ok(m.auth, SchemeTag::replica_auth))
      return RejectReason::bad_share;
    return std::nullopt;
  }
  Verdict operator()(const FetchBlock&) const { return std::nullopt; }
  Verdict operator()(const BlockData& m) const {
    if (auto v = requests(m.requests)) return v;
    if (m.primary_sig && !share_ok(*m.primary_sig, SchemeTag::replica_auth)) return RejectReason::bad_share;
    if (m.proof && !(combined_ok(*m.proof, SchemeTag::sigma) || combined_ok(*m.proof, SchemeTag::tau)))
      return RejectReason::bad_share;
    return std::nullopt;
  }
  Verdict operator()(const SnapshotRequest&) const { return std::nullopt; }
  Verdict operator()(const SnapshotData& m) const {
    if (auto v = stable(m.cert)) return v;
    if (m.new_view) return new_view(*m.new_view);
    return std::nullopt;
  }

 private:
  const ValidationContext& ctx_;
  const PublicMaterial& pub_;
  const ClusterParams& params_;
};

}  // namespace

std::optional<RejectReason> validate_well_formed(const ProtocolMessage& m, const ValidationContext& ctx) {
  Validator v(ctx);
  return std::visit(v, m);
}

ClientRequest make_request(const PublicMaterial& pub, const SigningKey& client_key, Timestamp t, Bytes op) {
  ClientRequest r;
  r.client = client_key.signer;
  r.timestamp = t;
  r.op = std::move(op);
  r.auth = sign_share(pub, client_key, r.auth_digest());
  return r;
}

}  // namespace tsbft
