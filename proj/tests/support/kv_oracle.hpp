#pragma once

// Naive recomputation of the store digest from its logical content, used
// to cross-check the incremental bookkeeping in ServiceState.

#include <algorithm>
#include <map>
#include <vector>

#include "tsbft/hash.hpp"
#include "tsbft/kvstore.hpp"

namespace tsbft::oracle {

// Recursive definition: a level of one node is the raw root; odd levels pad
// by repeating their last node.
inline Digest naive_raw_root(std::vector<Digest> level) {
  if (level.empty()) return Digest{};
  if (level.size() == 1) return level[0];
  if (level.size() % 2 == 1) level.push_back(level.back());
  std::vector<Digest> up;
  for (std::size_t i = 0; i < level.size(); i += 2) up.push_back(Hasher().u8(0x04).digest(level[i]).digest(level[i + 1]).finish());
  return naive_raw_root(up);
}

inline Digest naive_root(const std::vector<Digest>& leaves) {
  return Hasher().u8(0x03).u64(leaves.size()).digest(naive_raw_root(leaves)).finish();
}

// Replays a history of blocks (each a list of (op bytes, client, timestamp))
// using a plain std::map, then hashes it all from scratch.
struct NaiveStore {
  std::uint64_t retention;
  std::map<Bytes, Bytes> kv;
  std::map<std::uint64_t, std::pair<Timestamp, Bytes>> sessions;  // client -> (t, encoded record)
  std::map<Seq, Digest> block_roots;
  Seq last = 0;

  explicit NaiveStore(std::uint64_t r) : retention(r) {}

  void apply(Seq s, const std::vector<kv::BlockOp>& ops) {
    std::vector<Digest> leaves;
    std::uint32_t l = 0;
    for (const auto& op : ops) {
      ++l;
      Bytes val;
      auto it = sessions.find(op.client);
      if (op.client != 0 && it != sessions.end() && op.timestamp <= it->second.first) {
        val = {0xDD};
      } else {
        auto parsed = kv::parse_op(op.op);
        if (!parsed || (!parsed->key.empty() && parsed->key[0] == 0)) {
          val = {0xEE};
        } else if (parsed->code == kv::OpCode::put) {
          kv[parsed->key] = parsed->value;
          val = {0x01};
        } else {
          auto f = kv.find(parsed->key);
          if (f == kv.end()) {
            val = {0x00};
          } else {
            val = {0x01};
            val.insert(val.end(), f->second.begin(), f->second.end());
          }
        }
        if (op.client != 0) {
          Writer rec;
          rec.u64(op.timestamp).u64(s).u32(l).blob(val);
          sessions[op.client] = {op.timestamp, rec.bytes()};
        }
      }
      leaves.push_back(Hasher().u8(0x01).u32(l).blob(op.op).blob(val).finish());
    }
    block_roots[s] = naive_root(leaves);
    last = s;
  }

  Digest digest() const {
    std::vector<std::pair<Digest, Digest>> ordered;
    auto leaf = [](const Bytes& k, const Bytes& v) { return Hasher().u8(0x00).blob(k).blob(v).finish(); };
    for (const auto& [k, v] : kv) ordered.emplace_back(sha256(k), leaf(k, v));
    for (const auto& [client, rec] : sessions) {
      Writer key;
      key.u8(0x00).u8('S').u64(client);
      ordered.emplace_back(sha256(key.bytes()), leaf(key.bytes(), rec.second));
    }
    std::sort(ordered.begin(), ordered.end());
    std::vector<Digest> kv_leaves;
    for (const auto& p : ordered) kv_leaves.push_back(p.second);
    std::vector<Digest> log_leaves;
    Seq first = last >= retention ? last - retention + 1 : 1;
    for (Seq q = first; q <= last; ++q) log_leaves.push_back(Hasher().u8(0x02).u64(q).digest(block_roots.at(q)).finish());
    return Hasher().u8(0x05).u64(last).digest(naive_root(kv_leaves)).digest(naive_root(log_leaves)).finish();
  }
};

}  // namespace tsbft::oracle
