#pragma once

#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "tsbft/codec.hpp"
#include "tsbft/types.hpp"

// Authenticated key-value store: the deterministic replicated service.
//
// State digest
//   d = H(0x05 || last_seq || kv_root || log_root)
// kv_root   Merkle root over H(0x00 || key || value) leaves sorted by H(key).
// log_root  Merkle root over H(0x02 || seq || block_root) for the last
//           `retention` sequence numbers up to and including last_seq.
// block_root Merkle root over H(0x01 || l || op || val), l = 1..b.
// All roots are count-bound (see merkle.hpp).
//
// Client sessions (last executed timestamp and reply per client) live under
// reserved keys starting with 0x00, so they are covered by the digest and
// travel with snapshots. User keys may not start with 0x00.
namespace tsbft::kv {

enum class OpCode : std::uint8_t { put = 1, get = 2 };

struct Op {
  OpCode code = OpCode::get;
  Bytes key;
  Bytes value;  // put only
};

Bytes make_put(BytesView key, BytesView value);
Bytes make_get(BytesView key);
std::optional<Op> parse_op(BytesView raw);

// Result encodings.
namespace result {
inline constexpr Byte kAbsent = 0x00;
inline constexpr Byte kOk = 0x01;
inline constexpr Byte kDuplicate = 0xDD;
inline constexpr Byte kError = 0xEE;
Bytes ok();
Bytes found(BytesView value);
Bytes absent();
Bytes duplicate();
Bytes error();
}  // namespace result

struct BlockOp {
  ClientId client = 0;  // 0: no session tracking
  Timestamp timestamp = 0;
  Bytes op;
};

struct SessionRecord {
  Timestamp timestamp = 0;
  Seq seq = 0;
  std::uint32_t position = 0;
  Bytes val;
  bool operator==(const SessionRecord&) const = default;
};

// Binds (op, val) at position l of block s to the state digest after s.
struct OpProof {
  std::uint64_t block_count = 0;
  std::vector<Digest> block_path;
  std::uint64_t log_count = 0;
  std::vector<Digest> log_path;
  Digest kv_root{};

  void encode(Writer& w) const;
  static OpProof decode(Reader& r);
  bool operator==(const OpProof&) const = default;
};

struct KvWitness {
  std::uint64_t index = 0;
  Bytes key;
  Bytes value;
  std::vector<Digest> path;
  bool operator==(const KvWitness&) const = default;
};

// Membership (hit) or non-membership (adjacent neighbours) of a key in the
// kv tree at some sequence number.
struct QueryProof {
  std::uint64_t kv_count = 0;
  std::optional<KvWitness> hit;
  std::optional<KvWitness> left;
  std::optional<KvWitness> right;
  Digest log_root{};

  void encode(Writer& w) const;
  static QueryProof decode(Reader& r);
  bool operator==(const QueryProof&) const = default;
};

class NoSuchOperation : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ServiceState {
 public:
  explicit ServiceState(std::uint64_t retention = 256);

  // Applies block `seq`, which must be last_seq() + 1. Returns one result
  // per op. Replayed (client, timestamp) pairs yield result::duplicate()
  // and leave the state untouched.
  std::vector<Bytes> execute(Seq seq, std::span<const BlockOp> ops);

  Digest digest() const { return digest_; }
  std::optional<Digest> digest_at(Seq s) const;
  Seq last_seq() const { return last_seq_; }
  std::uint64_t retention() const { return retention_; }

  std::optional<Bytes> get(BytesView key) const;
  std::optional<SessionRecord> session(ClientId client) const;
  std::size_t user_key_count() const;

  // Proof that the l-th op of block s (1-based) produced the recorded val,
  // against digest_at(s). Throws NoSuchOperation outside retention.
  OpProof proof(Seq s, std::uint32_t l) const;
  // The (op, val) recorded at (s, l); throws NoSuchOperation.
  std::pair<Bytes, Bytes> recorded(Seq s, std::uint32_t l) const;
  // Proof for a read-only get against the current state (seq last_seq()).
  QueryProof query_proof(BytesView key) const;

  Bytes snapshot() const;
  // Throws MalformedMessage on a non-canonical snapshot.
  static ServiceState restore(BytesView snapshot, std::uint64_t retention);

 private:
  struct Entry {
    Bytes key;
    Bytes value;
    Digest leaf{};
  };
  struct SeqRecord {
    Digest kv_root{};
    Digest log_root{};
    std::vector<Bytes> ops;
    std::vector<Bytes> vals;
    std::vector<Digest> leaves;
  };

  void put_entry(const Bytes& key, const Bytes& value);
  void set_block_root(Seq s, const Digest& root);
  void recompute();
  Digest kv_root_now() const;
  std::vector<Digest> log_leaves(Seq s) const;
  std::vector<Digest> kv_leaves() const;

  std::uint64_t retention_;
  Seq last_seq_ = 0;
  std::map<Digest, Entry> kv_;  // keyed by H(key)
  std::map<Seq, Digest> block_roots_;
  std::map<Seq, Digest> log_leaves_;  // H(0x02 || seq || block_root), cached
  std::map<Seq, SeqRecord> records_;
  Digest kv_root_{};
  Digest log_root_{};
  Digest digest_{};
};

Digest state_digest(Seq seq, const Digest& kv_root, const Digest& log_root);
Digest genesis_digest();

bool verify(const Digest& d, BytesView op, BytesView val, Seq s, std::uint32_t l, const OpProof& proof);
bool verify_query(const Digest& d, BytesView query, BytesView val, Seq s, const QueryProof& proof);

}  // namespace tsbft::kv
