#include "tsbft/kvstore.hpp"

#include <algorithm>

#include "tsbft/hash.hpp"
#include "tsbft/merkle.hpp"

namespace tsbft::kv {

// --- op codec ----------------------------------------------------------------

Bytes make_put(BytesView key, BytesView value) {
  Writer w;
  w.u8(static_cast<std::uint8_t>(OpCode::put)).blob(key).blob(value);
  return std::move(w).bytes();
}

Bytes make_get(BytesView key) {
  Writer w;
  w.u8(static_cast<std::uint8_t>(OpCode::get)).blob(key);
  return std::move(w).bytes();
}

std::optional<Op> parse_op(BytesView raw) {
  try {
    Reader r(raw);
    Op op;
    auto tag = r.u8();
    if (tag == static_cast<std::uint8_t>(OpCode::put)) {
      op.code = OpCode::put;
      op.key = r.blob();
      op.value = r.blob();
    } else if (tag == static_cast<std::uint8_t>(OpCode::get)) {
      op.code = OpCode::get;
      op.key = r.blob();
    } else {
      return std::nullopt;
    }
    r.expect_end();
    return op;
  } catch (const MalformedMessage&) {
    return std::nullopt;
  }
}

namespace result {
Bytes ok() { return {kOk}; }
Bytes found(BytesView value) {
  Bytes out(value.size() + 1);
  out[0] = kOk;
  std::copy(value.begin(), value.end(), out.begin() + 1);
  return out;
}
Bytes absent() { return {kAbsent}; }
Bytes duplicate() { return {kDuplicate}; }
Bytes error() { return {kError}; }
}  // namespace result

// --- proof codecs ------------------------------------------------------------

namespace {

void write_path(Writer& w, const std::vector<Digest>& path) {
  w.u32(static_cast<std::uint32_t>(path.size()));
  for (const auto& d : path) w.digest(d);
}

std::vector<Digest> read_path(Reader& r) {
  auto n = r.count(32);
  if (n > 64) throw MalformedMessage("merkle path too long");
  std::vector<Digest> out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(r.digest());
  return out;
}

void write_witness(Writer& w, const std::optional<KvWitness>& wit) {
  w.boolean(wit.has_value());
  if (!wit) return;
  w.u64(wit->index).blob(wit->key).blob(wit->value);
  write_path(w, wit->path);
}

std::optional<KvWitness> read_witness(Reader& r) {
  if (!r.boolean()) return std::nullopt;
  KvWitness wit;
  wit.index = r.u64();
  wit.key = r.blob();
  wit.value = r.blob();
  wit.path = read_path(r);
  return wit;
}

}  // namespace

void OpProof::encode(Writer& w) const {
  w.u64(block_count);
  write_path(w, block_path);
  w.u64(log_count);
  write_path(w, log_path);
  w.digest(kv_root);
}

OpProof OpProof::decode(Reader& r) {
  OpProof p;
  p.block_count = r.u64();
  p.block_path = read_path(r);
  p.log_count = r.u64();
  p.log_path = read_path(r);
  p.kv_root = r.digest();
  return p;
}

void QueryProof::encode(Writer& w) const {
  w.u64(kv_count);
  write_witness(w, hit);
  write_witness(w, left);
  write_witness(w, right);
  w.digest(log_root);
}

QueryProof QueryProof::decode(Reader& r) {
  QueryProof p;
  p.kv_count = r.u64();
  p.hit = read_witness(r);
  p.left = read_witness(r);
  p.right = read_witness(r);
  p.log_root = r.digest();
  return p;
}

// --- hashing helpers ---------------------------------------------------------

namespace {

Digest key_order(BytesView key) { return sha256(key); }

Digest kv_leaf(BytesView key, BytesView value) { return Hasher().u8(0x00).blob(key).blob(value).finish(); }

Digest op_leaf(std::uint32_t l, BytesView op, BytesView val) {
  return Hasher().u8(0x01).u32(l).blob(op).blob(val).finish();
}

Digest log_leaf(Seq s, const Digest& block_root) { return Hasher().u8(0x02).u64(s).digest(block_root).finish(); }

Bytes session_key(ClientId client) {
  Writer w;
  w.u8(0x00).u8('S').u64(client);
  return std::move(w).bytes();
}

Bytes encode_session(const SessionRecord& rec) {
  Writer w;
  w.u64(rec.timestamp).u64(rec.seq).u32(rec.position).blob(rec.val);
  return std::move(w).bytes();
}

SessionRecord decode_session(BytesView raw) {
  Reader r(raw);
  SessionRecord rec;
  rec.timestamp = r.u64();
  rec.seq = r.u64();
  rec.position = r.u32();
  rec.val = r.blob();
  r.expect_end();
  return rec;
}

}  // namespace

Digest state_digest(Seq seq, const Digest& kv_root, const Digest& log_root) {
  return Hasher().u8(0x05).u64(seq).digest(kv_root).digest(log_root).finish();
}

Digest genesis_digest() { return ServiceState(1).digest(); }

// --- service state -----------------------------------------------------------

ServiceState::ServiceState(std::uint64_t retention) : retention_(std::max<std::uint64_t>(1, retention)) {
  recompute();
}

void ServiceState::set_block_root(Seq s, const Digest& root) {
  block_roots_[s] = root;
  log_leaves_[s] = log_leaf(s, root);
}

void ServiceState::put_entry(const Bytes& key, const Bytes& value) {
  Entry& e = kv_[key_order(key)];
  e.key = key;
  e.value = value;
  e.leaf = kv_leaf(key, value);
}

std::vector<Digest> ServiceState::kv_leaves() const {
  std::vector<Digest> leaves;
  leaves.reserve(kv_.size());
  for (const auto& [order, e] : kv_) leaves.push_back(e.leaf);
  return leaves;
}

Digest ServiceState::kv_root_now() const { return merkle::root(kv_leaves()); }

std::vector<Digest> ServiceState::log_leaves(Seq s) const {
  std::vector<Digest> leaves;
  Seq first = s >= retention_ ? s - retention_ + 1 : 1;
  for (Seq q = first; q <= s; ++q) {
    auto it = log_leaves_.find(q);
    if (it == log_leaves_.end()) throw NoSuchOperation("block root not retained for seq " + std::to_string(q));
    leaves.push_back(it->second);
  }
  return leaves;
}

void ServiceState::recompute() {
  kv_root_ = kv_root_now();
  log_root_ = merkle::root(log_leaves(last_seq_));
  digest_ = state_digest(last_seq_, kv_root_, log_root_);
}

std::vector<Bytes> ServiceState::execute(Seq seq, std::span<const BlockOp> ops) {
  if (seq != last_seq_ + 1) {
    throw std::logic_error("execute out of order: expected seq " + std::to_string(last_seq_ + 1) + ", got " +
                           std::to_string(seq));
  }
  SeqRecord rec;
  std::vector<Bytes> vals;
  vals.reserve(ops.size());
  std::uint32_t l = 0;
  for (const auto& bop : ops) {
    ++l;
    Bytes val;
    std::optional<SessionRecord> prior;
    if (bop.client != 0) prior = session(bop.client);
    if (prior && bop.timestamp <= prior->timestamp) {
      val = result::duplicate();
    } else {
      auto op = parse_op(bop.op);
      if (!op || (!op->key.empty() && op->key.front() == 0x00)) {
        val = result::error();
      } else if (op->code == OpCode::put) {
        put_entry(op->key, op->value);
        val = result::ok();
      } else {
        auto v = get(op->key);
        val = v ? result::found(*v) : result::absent();
      }
      if (bop.client != 0) put_entry(session_key(bop.client), encode_session({bop.timestamp, seq, l, val}));
    }
    rec.leaves.push_back(op_leaf(l, bop.op, val));
    rec.ops.push_back(bop.op);
    rec.vals.push_back(val);
    vals.push_back(std::move(val));
  }
  last_seq_ = seq;
  set_block_root(seq, merkle::root(rec.leaves));
  rec.kv_root = kv_root_now();
  rec.log_root = merkle::root(log_leaves(seq));
  records_[seq] = std::move(rec);

  // Retention is a function of seq only, so every replica keeps the same
  // window regardless of when it garbage-collects its protocol log.
  if (seq > retention_) records_.erase(records_.begin(), records_.upper_bound(seq - retention_));
  if (seq > 2 * retention_) {
    block_roots_.erase(block_roots_.begin(), block_roots_.upper_bound(seq - 2 * retention_));
    log_leaves_.erase(log_leaves_.begin(), log_leaves_.upper_bound(seq - 2 * retention_));
  }

  kv_root_ = records_.at(seq).kv_root;
  log_root_ = records_.at(seq).log_root;
  digest_ = state_digest(seq, kv_root_, log_root_);
  return vals;
}

std::optional<Digest> ServiceState::digest_at(Seq s) const {
  if (s == last_seq_) return digest_;
  auto it = records_.find(s);
  if (it == records_.end()) return std::nullopt;
  return state_digest(s, it->second.kv_root, it->second.log_root);
}

std::optional<Bytes> ServiceState::get(BytesView key) const {
  auto it = kv_.find(key_order(key));
  if (it == kv_.end()) return std::nullopt;
  return it->second.value;
}

std::optional<SessionRecord> ServiceState::session(ClientId client) const {
  auto v = get(session_key(client));
  if (!v) return std::nullopt;
  return decode_session(*v);
}

std::size_t ServiceState::user_key_count() const {
  return static_cast<std::size_t>(
      std::count_if(kv_.begin(), kv_.end(), [](const auto& kvp) { return kvp.second.key.empty() || kvp.second.key[0] != 0x00; }));
}

std::pair<Bytes, Bytes> ServiceState::recorded(Seq s, std::uint32_t l) const {
  auto it = records_.find(s);
  if (it == records_.end() || l < 1 || l > it->second.ops.size()) {
    throw NoSuchOperation("no operation " + std::to_string(l) + " retained at seq " + std::to_string(s));
  }
  return {it->second.ops[l - 1], it->second.vals[l - 1]};
}

OpProof ServiceState::proof(Seq s, std::uint32_t l) const {
  auto it = records_.find(s);
  if (it == records_.end() || l < 1 || l > it->second.leaves.size()) {
    throw NoSuchOperation("no operation " + std::to_string(l) + " retained at seq " + std::to_string(s));
  }
  const SeqRecord& rec = it->second;
  OpProof p;
  p.block_count = rec.leaves.size();
  p.block_path = merkle::path(rec.leaves, l - 1);
  auto logs = log_leaves(s);
  p.log_count = logs.size();
  p.log_path = merkle::path(logs, logs.size() - 1);
  p.kv_root = rec.kv_root;
  return p;
}

QueryProof ServiceState::query_proof(BytesView key) const {
  QueryProof p;
  auto leaves = kv_leaves();
  p.kv_count = leaves.size();
  p.log_root = log_root_;
  Digest order = key_order(key);
  auto it = kv_.lower_bound(order);
  auto index_of = [&](std::map<Digest, Entry>::const_iterator pos) {
    return static_cast<std::uint64_t>(std::distance(kv_.begin(), pos));
  };
  auto witness = [&](std::map<Digest, Entry>::const_iterator pos) {
    KvWitness w;
    w.index = index_of(pos);
    w.key = pos->second.key;
    w.value = pos->second.value;
    w.path = merkle::path(leaves, w.index);
    return w;
  };
  if (it != kv_.end() && it->first == order) {
    p.hit = witness(it);
    return p;
  }
  if (it != kv_.begin()) p.left = witness(std::prev(it));
  if (it != kv_.end()) p.right = witness(it);
  return p;
}

Bytes ServiceState::snapshot() const {
  Writer w;
  w.u64(last_seq_);
  w.u32(static_cast<std::uint32_t>(kv_.size()));
  for (const auto& [order, e] : kv_) w.blob(e.key).blob(e.value);
  Seq first = last_seq_ >= retention_ ? last_seq_ - retention_ + 1 : 1;
  w.u32(static_cast<std::uint32_t>(last_seq_ >= first ? last_seq_ - first + 1 : 0));
  for (Seq q = first; q <= last_seq_; ++q) w.digest(block_roots_.at(q));
  return std::move(w).bytes();
}

ServiceState ServiceState::restore(BytesView snapshot, std::uint64_t retention) {
  ServiceState st(retention);
  Reader r(snapshot);
  st.last_seq_ = r.u64();
  auto entries = r.count(8);
  Digest prev{};
  for (std::uint32_t i = 0; i < entries; ++i) {
    Bytes key = r.blob();
    Bytes value = r.blob();
    Digest order = key_order(key);
    if (i > 0 && !(prev < order)) throw MalformedMessage("snapshot keys not in canonical order");
    prev = order;
    st.put_entry(key, value);
  }
  Seq first = st.last_seq_ >= st.retention_ ? st.last_seq_ - st.retention_ + 1 : 1;
  auto roots = r.count(32);
  Seq expected = st.last_seq_ >= first ? st.last_seq_ - first + 1 : 0;
  if (roots != expected) throw MalformedMessage("snapshot block-root count mismatch");
  for (Seq q = first; q <= st.last_seq_; ++q) st.set_block_root(q, r.digest());
  r.expect_end();
  st.recompute();
  return st;
}

// --- verification ------------------------------------------------------------

bool verify(const Digest& d, BytesView op, BytesView val, Seq s, std::uint32_t l, const OpProof& proof) {
  if (s == 0 || l == 0 || proof.log_count == 0 || proof.log_count > s) return false;
  auto block_root = merkle::fold(op_leaf(l, op, val), l - 1, proof.block_count, proof.block_path);
  if (!block_root) return false;
  auto log_root = merkle::fold(log_leaf(s, *block_root), proof.log_count - 1, proof.log_count, proof.log_path);
  if (!log_root) return false;
  return state_digest(s, proof.kv_root, *log_root) == d;
}

bool verify_query(const Digest& d, BytesView query, BytesView val, Seq s, const QueryProof& proof) {
  auto q = parse_op(query);
  if (!q || q->code != OpCode::get) return false;
  if (val.empty()) return false;
  Digest order = key_order(q->key);

  std::optional<Digest> kv_root;
  if (val[0] == result::kOk) {
    if (!proof.hit || proof.left || proof.right) return false;
    const auto& w = *proof.hit;
    if (w.key != q->key) return false;
    if (!std::equal(val.begin() + 1, val.end(), w.value.begin(), w.value.end())) return false;
    kv_root = merkle::fold(kv_leaf(w.key, w.value), w.index, proof.kv_count, w.path);
  } else if (val[0] == result::kAbsent && val.size() == 1) {
    if (proof.hit) return false;
    if (proof.kv_count == 0) {
      if (proof.left || proof.right) return false;
      kv_root = merkle::root({});
    } else {
      if (!proof.left && !proof.right) return false;
      std::optional<Digest> from_left, from_right;
      if (proof.left) {
        const auto& w = *proof.left;
        if (!(key_order(w.key) < order)) return false;
        // Without a right neighbour the left one must be the last leaf.
        if (!proof.right && w.index + 1 != proof.kv_count) return false;
        from_left = merkle::fold(kv_leaf(w.key, w.value), w.index, proof.kv_count, w.path);
        if (!from_left) return false;
      }
      if (proof.right) {
        const auto& w = *proof.right;
        if (!(order < key_order(w.key))) return false;
        if (!proof.left && w.index != 0) return false;
        if (proof.left && proof.left->index + 1 != w.index) return false;
        from_right = merkle::fold(kv_leaf(w.key, w.value), w.index, proof.kv_count, w.path);
        if (!from_right) return false;
      }
      if (from_left && from_right && *from_left != *from_right) return false;
      kv_root = from_left ? from_left : from_right;
    }
  } else {
    return false;
  }
  if (!kv_root) return false;
  return state_digest(s, *kv_root, proof.log_root) == d;
}

}  // namespace tsbft::kv
