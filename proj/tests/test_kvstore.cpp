#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "support/kv_oracle.hpp"
#include "tsbft/kvstore.hpp"
#include "tsbft/merkle.hpp"

using namespace tsbft;
using namespace tsbft::kv;

#ifndef TSBFT_FIXTURE_DIR
#define TSBFT_FIXTURE_DIR "tests/fixtures"
#endif

namespace {

BlockOp put_op(ClientId c, Timestamp t, const std::string& k, const std::string& v) {
  return {c, t, make_put(to_bytes(k), to_bytes(v))};
}
BlockOp get_op(ClientId c, Timestamp t, const std::string& k) { return {c, t, make_get(to_bytes(k))}; }

std::string read_fixture(const std::string& name, const std::string& now) {
  std::string path = std::string(TSBFT_FIXTURE_DIR) + "/" + name;
  if (std::getenv("TSBFT_REGEN_FIXTURES") != nullptr) std::ofstream(path) << now;
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("merkle root matches the recursive definition") {
  for (std::size_t n = 0; n <= 40; ++n) {
    std::vector<Digest> leaves;
    for (std::size_t i = 0; i < n; ++i) leaves.push_back(sha256(to_bytes("leaf" + std::to_string(i))));
    CHECK(merkle::root(leaves) == oracle::naive_root(leaves));
    for (std::size_t i = 0; i < n; ++i) {
      auto p = merkle::path(leaves, i);
      auto r = merkle::fold(leaves[i], i, n, p);
      REQUIRE(r);
      CHECK(*r == merkle::root(leaves));
      // Wrong index or count fails.
      if (n > 1) {
        auto wrong = merkle::fold(leaves[i], (i + 1) % n, n, p);
        CHECK((!wrong || *wrong != merkle::root(leaves)));
      }
      auto wrong_count = merkle::fold(leaves[i], i, n + 1, p);
      CHECK((!wrong_count || *wrong_count != merkle::root(leaves)));
    }
  }
  // n and n+1 leaves with duplicated last leaf differ thanks to the count.
  std::vector<Digest> three = {sha256(to_bytes("a")), sha256(to_bytes("b")), sha256(to_bytes("c"))};
  auto four = three;
  four.push_back(three.back());
  CHECK(merkle::root(three) != merkle::root(four));
}

TEST_CASE("op codec") {
  auto p = parse_op(make_put(to_bytes("k"), to_bytes("v")));
  REQUIRE(p);
  CHECK(p->code == OpCode::put);
  CHECK(p->key == to_bytes("k"));
  CHECK(p->value == to_bytes("v"));
  auto g = parse_op(make_get(to_bytes("k")));
  REQUIRE(g);
  CHECK(g->code == OpCode::get);
  CHECK_FALSE(parse_op(Bytes{}).has_value());
  CHECK_FALSE(parse_op(Bytes{9, 0, 0, 0, 0}).has_value());
  auto trailing = make_get(to_bytes("k"));
  trailing.push_back(1);
  CHECK_FALSE(parse_op(trailing).has_value());
}

TEST_CASE("sequential semantics within a block") {
  ServiceState st(16);
  std::vector<BlockOp> ops = {put_op(1, 1, "k", "v"), get_op(2, 1, "k"), get_op(3, 1, "missing")};
  auto vals = st.execute(1, ops);
  CHECK(vals[0] == result::ok());
  CHECK(vals[1] == result::found(to_bytes("v")));
  CHECK(vals[2] == result::absent());
  CHECK(st.get(to_bytes("k")) == to_bytes("v"));
  CHECK(st.user_key_count() == 1);
}

TEST_CASE("execution is in order only") {
  ServiceState st(16);
  CHECK_THROWS_AS(st.execute(2, {}), std::logic_error);
  st.execute(1, {});
  CHECK_THROWS_AS(st.execute(1, {}), std::logic_error);
}

TEST_CASE("replayed requests are not applied twice") {
  ServiceState st(16);
  st.execute(1, std::vector<BlockOp>{put_op(1, 5, "k", "a")});
  auto d = st.digest();
  auto vals = st.execute(2, std::vector<BlockOp>{put_op(1, 5, "k", "b"), put_op(1, 4, "k", "c")});
  CHECK(vals[0] == result::duplicate());
  CHECK(vals[1] == result::duplicate());
  CHECK(st.get(to_bytes("k")) == to_bytes("a"));
  CHECK(st.digest() != d);  // seq and block log still advance
  auto s = st.session(1);
  REQUIRE(s);
  CHECK(s->timestamp == 5);
  CHECK(s->seq == 1);
}

TEST_CASE("reserved keys are refused") {
  ServiceState st(16);
  Bytes key = {0x00, 'S'};
  auto vals = st.execute(1, std::vector<BlockOp>{{1, 1, make_put(key, to_bytes("x"))}, {2, 1, Bytes{42}}});
  CHECK(vals[0] == result::error());
  CHECK(vals[1] == result::error());
}

TEST_CASE("digest behaviour") {
  ServiceState a(16), b(16);
  CHECK(a.digest() == genesis_digest());
  CHECK(read_fixture("genesis_digest.hex", to_hex(genesis_digest()) + "\n") == to_hex(genesis_digest()) + "\n");

  a.execute(1, std::vector<BlockOp>{put_op(0, 0, "x", "1")});
  CHECK(a.digest() != genesis_digest());
  b.execute(1, std::vector<BlockOp>{put_op(0, 0, "x", "1")});
  CHECK(a.digest() == b.digest());

  // Empty block: kv unchanged, seq and log advance.
  auto before = a.digest();
  a.execute(2, {});
  CHECK(a.digest() != before);
  CHECK(a.get(to_bytes("x")) == to_bytes("1"));

  // Insertion order does not matter.
  ServiceState c(16), d(16);
  c.execute(1, std::vector<BlockOp>{put_op(0, 0, "p", "1"), put_op(0, 0, "q", "2")});
  d.execute(1, std::vector<BlockOp>{put_op(0, 0, "q", "2"), put_op(0, 0, "p", "1")});
  CHECK(c.get(to_bytes("p")) == d.get(to_bytes("p")));
  ServiceState e(16), f(16);
  e.execute(1, std::vector<BlockOp>{put_op(0, 0, "p", "1")});
  e.execute(2, std::vector<BlockOp>{put_op(0, 0, "q", "2")});
  f.execute(1, std::vector<BlockOp>{put_op(0, 0, "q", "2")});
  f.execute(2, std::vector<BlockOp>{put_op(0, 0, "p", "1")});
  CHECK(e.get(to_bytes("p")) == f.get(to_bytes("p")));
  CHECK(e.digest() != f.digest());  // the block logs differ
}

TEST_CASE("digest matches a from-scratch recomputation") {
  std::mt19937_64 rng(11);
  for (std::uint64_t retention : {1, 3, 8}) {
    ServiceState st(retention);
    oracle::NaiveStore naive(retention);
    for (Seq s = 1; s <= 30; ++s) {
      std::vector<BlockOp> ops;
      auto count = rng() % 4;
      for (std::uint64_t i = 0; i < count; ++i) {
        ClientId client = rng() % 4;
        Timestamp t = rng() % 12;
        std::string key = "k" + std::to_string(rng() % 5);
        if (rng() % 3 == 0) {
          ops.push_back(get_op(client, t, key));
        } else {
          ops.push_back(put_op(client, t, key, "v" + std::to_string(rng() % 100)));
        }
      }
      st.execute(s, ops);
      naive.apply(s, ops);
      CHECK(st.digest() == naive.digest());
    }
  }
}

TEST_CASE("op proofs verify within retention") {
  ServiceState st(4);
  for (Seq s = 1; s <= 10; ++s) {
    std::vector<BlockOp> ops;
    for (std::uint32_t l = 0; l < s % 4 + 1; ++l) ops.push_back(put_op(s * 10 + l, 1, "k" + std::to_string(l), std::to_string(s)));
    st.execute(s, ops);
    for (Seq q = s >= 4 ? s - 3 : 1; q <= s; ++q) {
      auto d = st.digest_at(q);
      REQUIRE(d);
      for (std::uint32_t l = 1;; ++l) {
        std::pair<Bytes, Bytes> rec;
        try {
          rec = st.recorded(q, l);
        } catch (const NoSuchOperation&) {
          break;
        }
        auto p = st.proof(q, l);
        CHECK(verify(*d, rec.first, rec.second, q, l, p));
        CHECK_FALSE(verify(*d, rec.first, rec.second, q, l + 1, p));
        CHECK_FALSE(verify(*d, rec.first, rec.second, q + 1, l, p));
        CHECK_FALSE(verify(*d, rec.first, result::absent(), q, l, p));
      }
    }
  }
  CHECK_THROWS_AS(st.proof(2, 1), NoSuchOperation);
  CHECK_THROWS_AS(st.proof(10, 99), NoSuchOperation);
}

TEST_CASE("proof from another seq does not verify") {
  ServiceState st(8);
  st.execute(1, std::vector<BlockOp>{put_op(1, 1, "k", "v")});
  st.execute(2, std::vector<BlockOp>{put_op(1, 2, "k", "v")});
  auto p1 = st.proof(1, 1);
  auto [op, val] = st.recorded(1, 1);
  CHECK(verify(*st.digest_at(1), op, val, 1, 1, p1));
  CHECK_FALSE(verify(*st.digest_at(2), op, val, 2, 1, p1));
  CHECK_FALSE(verify(*st.digest_at(2), op, val, 1, 1, p1));
}

TEST_CASE("query proofs") {
  ServiceState st(8);
  std::vector<BlockOp> ops;
  for (int i = 0; i < 9; ++i) ops.push_back(put_op(0, 0, "key" + std::to_string(i), "val" + std::to_string(i)));
  st.execute(1, ops);
  auto d = st.digest();
  for (int i = 0; i < 9; ++i) {
    auto q = make_get(to_bytes("key" + std::to_string(i)));
    auto p = st.query_proof(to_bytes("key" + std::to_string(i)));
    CHECK(verify_query(d, q, result::found(to_bytes("val" + std::to_string(i))), 1, p));
    CHECK_FALSE(verify_query(d, q, result::found(to_bytes("other")), 1, p));
    CHECK_FALSE(verify_query(d, q, result::absent(), 1, p));
  }
  for (int i = 0; i < 20; ++i) {
    auto key = to_bytes("missing" + std::to_string(i));
    auto p = st.query_proof(key);
    CHECK(verify_query(d, make_get(key), result::absent(), 1, p));
    CHECK_FALSE(verify_query(d, make_get(key), result::found(to_bytes("x")), 1, p));
  }
  ServiceState empty(8);
  CHECK(verify_query(empty.digest(), make_get(to_bytes("a")), result::absent(), 0, empty.query_proof(to_bytes("a"))));
}

TEST_CASE("snapshot round-trip and golden bytes") {
  ServiceState st(4);
  st.execute(1, std::vector<BlockOp>{put_op(1, 1, "a", "1"), put_op(2, 1, "b", "2")});
  st.execute(2, std::vector<BlockOp>{get_op(1, 2, "a")});
  auto snap = st.snapshot();
  auto restored = ServiceState::restore(snap, 4);
  CHECK(restored.digest() == st.digest());
  CHECK(restored.last_seq() == 2);
  CHECK(restored.session(1) == st.session(1));
  // The restored store keeps executing in lockstep.
  restored.execute(3, std::vector<BlockOp>{put_op(3, 1, "c", "3")});
  st.execute(3, std::vector<BlockOp>{put_op(3, 1, "c", "3")});
  CHECK(restored.digest() == st.digest());

  CHECK(read_fixture("snapshot.hex", to_hex(snap) + "\n") == to_hex(snap) + "\n");

  auto corrupt = snap;
  corrupt.push_back(0);
  CHECK_THROWS_AS(ServiceState::restore(corrupt, 4), MalformedMessage);
  CHECK_THROWS_AS(ServiceState::restore(Bytes(snap.begin(), snap.begin() + 10), 4), MalformedMessage);
}

TEST_CASE("proof codec round-trip") {
  ServiceState st(8);
  st.execute(1, std::vector<BlockOp>{put_op(1, 1, "a", "1"), put_op(2, 1, "b", "2"), put_op(3, 1, "c", "3")});
  auto p = st.proof(1, 3);
  Writer w;
  p.encode(w);
  Reader r(w.bytes());
  CHECK(OpProof::decode(r) == p);
  r.expect_end();
}

TEST_CASE("mutation fuzz: no false accepts") {
  ServiceState st(8);
  for (Seq s = 1; s <= 6; ++s) {
    std::vector<BlockOp> ops;
    for (int l = 0; l < 5; ++l) ops.push_back(put_op(s * 10 + l, 1, "k" + std::to_string(l), "v" + std::to_string(s)));
    st.execute(s, ops);
  }
  std::mt19937_64 rng(9);
  int false_accepts = 0;
  for (int t = 0; t < 20000; ++t) {
    Seq s = 1 + rng() % 6;
    std::uint32_t l = 1 + static_cast<std::uint32_t>(rng() % 5);
    auto [op, val] = st.recorded(s, l);
    auto proof = st.proof(s, l);
    auto d = *st.digest_at(s);
    switch (rng() % 6) {
      case 0: val[rng() % val.size()] ^= static_cast<Byte>(1 + rng() % 255); break;
      case 1: op[rng() % op.size()] ^= static_cast<Byte>(1 + rng() % 255); break;
      case 2: d[rng() % 32] ^= static_cast<Byte>(1 + rng() % 255); break;
      case 3:
        if (!proof.block_path.empty()) proof.block_path[rng() % proof.block_path.size()][rng() % 32] ^= 1;
        else proof.kv_root[0] ^= 1;
        break;
      case 4:
        if (!proof.log_path.empty()) proof.log_path[rng() % proof.log_path.size()][rng() % 32] ^= 0x80;
        else proof.log_count += 1;
        break;
      default: proof.kv_root[rng() % 32] ^= 0x04; break;
    }
    if (verify(d, op, val, s, l, proof)) ++false_accepts;
  }
  CHECK(false_accepts == 0);
}
