#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "support/samples.hpp"
#include "tsbft/messages.hpp"

using namespace tsbft;

#ifndef TSBFT_FIXTURE_DIR
#define TSBFT_FIXTURE_DIR "tests/fixtures"
#endif

TEST_CASE("every message type round-trips") {
  samples::Fixture fx;
  auto all = fx.all();
  std::set<std::size_t> kinds;
  for (const auto& m : all) {
    CAPTURE(message_type_name(m));
    kinds.insert(m.index());
    auto bytes = encode(m);
    auto back = decode(bytes);
    CHECK(back == m);
    CHECK(encode(back) == bytes);
  }
  CHECK(kinds.size() == kMessageTypeCount);
}

TEST_CASE("minimal messages round-trip") {
  std::vector<ProtocolMessage> minimal = {
      PrePrepare{0, 0, std::make_shared<RequestList>(), {}},
      SignShare{},
      FullCommitProof{},
      Prepare{},
      Commit{},
      FullCommitProofSlow{},
      SignState{},
      FullExecuteProof{},
      ExecuteAck{},
      ViewChange{},
      NewView{},
      CheckpointVote{},
      Complaint{},
      RequestMsg{},
      Reply{},
      FetchBlock{},
      BlockData{0, 0, std::make_shared<RequestList>(), std::nullopt, std::nullopt},
      SnapshotRequest{},
      SnapshotData{},
  };
  REQUIRE(minimal.size() == kMessageTypeCount);
  for (std::size_t i = 0; i < minimal.size(); ++i) {
    CHECK(minimal[i].index() == i);
    CHECK(decode(encode(minimal[i])) == minimal[i]);
  }
}

TEST_CASE("canonical encoding") {
  samples::Fixture fx;
  // Built twice independently, including separately allocated request lists.
  auto a = fx.all();
  auto b = fx.all();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(encode(a[i]) == encode(b[i]));
}

TEST_CASE("decode rejects garbage") {
  std::mt19937_64 rng(2024);
  int rejected = 0;
  const int trials = 20000;
  for (int t = 0; t < trials; ++t) {
    Bytes junk(64);
    for (auto& b : junk) b = static_cast<Byte>(rng());
    try {
      decode(junk);
    } catch (const MalformedMessage&) {
      ++rejected;
    }
  }
  CHECK(rejected >= trials - 2);
}

TEST_CASE("decode rejects truncation, trailing bytes and bad tags") {
  samples::Fixture fx;
  for (const auto& m : fx.all()) {
    auto bytes = encode(m);
    CAPTURE(message_type_name(m));
    for (std::size_t cut = 0; cut < bytes.size(); cut += std::max<std::size_t>(1, bytes.size() / 37)) {
      Bytes prefix(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
      CHECK_THROWS_AS(decode(prefix), MalformedMessage);
    }
    auto longer = bytes;
    longer.push_back(0);
    CHECK_THROWS_AS(decode(longer), MalformedMessage);
  }
  CHECK_THROWS_AS(decode(Bytes{}), MalformedMessage);
  CHECK_THROWS_AS(decode(Bytes{0}), MalformedMessage);
  CHECK_THROWS_AS(decode(Bytes{200}), MalformedMessage);
  // Boolean flags other than 0/1.
  SignShare s;
  auto bytes = encode(s);
  bytes[17] = 2;
  CHECK_THROWS_AS(decode(bytes), MalformedMessage);
  // A huge list count cannot allocate past the input.
  Bytes huge = {1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0xff, 0xff, 0xff, 0x7f};
  CHECK_THROWS_AS(decode(huge), MalformedMessage);
}

TEST_CASE("accounted size counts combined signatures at 33 bytes") {
  samples::Fixture fx;
  auto h = block_hash(1, 0, *fx.block());
  FullCommitProof p{1, 0, fx.combined(SchemeTag::sigma, h)};
  // type + seq + view + 33
  CHECK(accounted_size(p) == 1 + 8 + 8 + 33);
  CHECK(encode(p).size() > accounted_size(p));

  // Accounted size is independent of n.
  samples::Fixture big;
  big.params = derive_cluster(4, 2, 8);
  PublicMaterial pub(big.params, 1);
  std::vector<SigShare> shares;
  for (std::uint32_t i = 1; i <= big.params.n; ++i) shares.push_back(sign_share(pub, pub.signing_key(SchemeTag::sigma, i), h));
  FullCommitProof q{1, 0, combine(pub, SchemeTag::sigma, shares)};
  CHECK(accounted_size(q) == accounted_size(p));
}

TEST_CASE("view change size grows with window, not with n") {
  auto size_for = [](std::int64_t f, std::int64_t window) {
    samples::Fixture fx;
    fx.params = derive_cluster(f, 0, window);
    return accounted_size(fx.view_change(1, 0, {}));
  };
  CHECK(size_for(1, 64) == size_for(4, 64));
  auto s64 = size_for(1, 64), s128 = size_for(1, 128), s256 = size_for(1, 256);
  CHECK(s256 - s128 == 2 * (s128 - s64));
}

TEST_CASE("type names") {
  for (std::size_t i = 0; i < kMessageTypeCount; ++i) {
    CHECK(message_type_index(message_type_name(i)) == static_cast<int>(i));
  }
  CHECK(message_type_index("nope") == -1);
  CHECK(std::string(message_type_name(ProtocolMessage{FullCommitProofSlow{}})) == "full-commit-proof-slow");
}

TEST_CASE("golden byte vectors") {
  samples::Fixture fx;
  auto all = fx.all();
  std::string path = std::string(TSBFT_FIXTURE_DIR) + "/messages.hex";
  std::ostringstream now;
  for (const auto& m : all) now << message_type_name(m) << ' ' << to_hex(encode(m)) << '\n';
  if (std::getenv("TSBFT_REGEN_FIXTURES") != nullptr) {
    std::ofstream(path) << now.str();
  }
  std::ifstream in(path);
  REQUIRE_MESSAGE(in.good(), "missing fixture " << path);
  std::stringstream want;
  want << in.rdbuf();
  CHECK(want.str() == now.str());
}

// --- validation ------------------------------------------------------------------

namespace {
struct Ctx {
  samples::Fixture fx;
  ValidationContext ctx{&fx.pub, &fx.params, nullptr};
  std::optional<RejectReason> check(const ProtocolMessage& m) const { return validate_well_formed(m, ctx); }
};
}  // namespace

TEST_CASE("honest messages validate") {
  Ctx c;
  for (const auto& m : c.fx.all()) {
    CAPTURE(message_type_name(m));
    CHECK_FALSE(c.check(m).has_value());
  }
}

TEST_CASE("validation rejects malformed content") {
  Ctx c;
  auto& fx = c.fx;
  auto reqs = fx.block();
  auto h = block_hash(1, 0, *reqs);

  auto empty = fx.preprepare(1, 0, std::make_shared<RequestList>());
  CHECK(c.check(empty) == RejectReason::empty_block);

  SignShare mismatched{1, 0, sign_share(fx.pub, fx.key(SchemeTag::sigma, 2), h),
                       sign_share(fx.pub, fx.key(SchemeTag::tau, 2), block_hash(2, 0, *reqs))};
  CHECK(c.check(mismatched) == RejectReason::bad_share);

  SignShare none{1, 0, std::nullopt, std::nullopt};
  CHECK(c.check(none) == RejectReason::bad_share);

  SignShare out_of_range{1, 0, sign_share(fx.pub, fx.key(SchemeTag::sigma, 9), h), std::nullopt};
  CHECK(c.check(out_of_range) == RejectReason::bad_range);

  CHECK_FALSE(c.check(FullCommitProof{1, 0, fx.combined(SchemeTag::sigma, h)}).has_value());
  // A tau proof presented as a sigma proof.
  CHECK(c.check(FullCommitProof{1, 0, fx.combined(SchemeTag::tau, h)}) == RejectReason::bad_share);

  // Pre-prepare signed by a non-primary.
  auto pp = fx.preprepare(1, 0, reqs);
  pp.primary_sig = sign_share(fx.pub, fx.key(SchemeTag::replica_auth, 2), pp.primary_sig.digest);
  CHECK(c.check(pp) == RejectReason::bad_range);

  // Request with a tampered op.
  auto bad_list = std::make_shared<RequestList>(*reqs);
  (*bad_list)[0].op.push_back(0);
  CHECK(c.check(fx.preprepare(1, 0, bad_list)) == RejectReason::bad_client_auth);

  // Access control.
  Ctx strict;
  strict.ctx.allow = [](const ClientRequest& r) { return r.client != 2; };
  CHECK(strict.check(strict.fx.preprepare(1, 0, strict.fx.block())) == RejectReason::bad_client_auth);

  // Slow proof must be over the value of tau(h).
  CHECK(c.check(FullCommitProofSlow{1, 0, h, fx.combined(SchemeTag::tau, h)}) == RejectReason::bad_share);

  // View change entries may not name later views than the sender's.
  std::vector<ViewChangeSlotEntry> slots(1);
  slots[0].fm = SigmaShareWithView{3, sign_share(fx.pub, fx.key(SchemeTag::sigma, 2), block_hash(1, 3, *reqs)), reqs};
  CHECK(c.check(fx.view_change(2, 1, slots)) == RejectReason::bad_range);
  CHECK_FALSE(c.check(fx.view_change(2, 3, slots)).has_value());
  // Share from someone other than the sender.
  CHECK(c.check(fx.view_change(3, 3, slots)) == RejectReason::bad_share);

  // New view with too few view changes, or duplicates.
  NewView nv;
  nv.view = 1;
  nv.view_changes = {fx.view_change(1, 0, {}), fx.view_change(2, 0, {})};
  CHECK(c.check(nv) == RejectReason::bad_range);
  nv.view_changes.push_back(fx.view_change(2, 0, {}));
  CHECK(c.check(nv) == RejectReason::bad_range);

  // Contradiction needs two different hashes.
  Complaint same;
  same.sender = 2;
  same.view = 0;
  auto sig = sign_share(fx.pub, fx.key(SchemeTag::replica_auth, 1), preprepare_sig_digest(1, 0, h));
  same.evidence = ContradictionEvidence{1, 0, h, sig, h, sig};
  same.auth = sign_share(fx.pub, fx.key(SchemeTag::replica_auth, 2), complaint_digest(0));
  CHECK(c.check(same) == RejectReason::bad_range);

  // Forged stable certificate.
  auto vc = fx.view_change(1, 0, {});
  vc.stable = StableCert{5, h, fx.combined(SchemeTag::pi, block_hash(9, 9, *reqs))};
  vc.auth = sign_share(fx.pub, fx.key(SchemeTag::replica_auth, 1), vc.signing_digest());
  CHECK(c.check(vc) == RejectReason::bad_share);
}
