#include <set>

#include "doctest.h"
#include "tsbft/params.hpp"

using namespace tsbft;

TEST_CASE("derive_cluster arithmetic") {
  auto p = derive_cluster(1, 0, 256);
  CHECK(p.n == 4);
  CHECK(p.sigma_threshold == 4);
  CHECK(p.tau_threshold == 3);
  CHECK(p.pi_threshold == 2);
  CHECK(p.checkpoint_period == 128);

  CHECK(derive_cluster(64, 8, 256).n == 209);

  auto one = derive_cluster(0, 0, 4);
  CHECK(one.n == 1);
  CHECK(one.sigma_threshold == 1);
  CHECK(one.tau_threshold == 1);
  CHECK(one.pi_threshold == 1);
}

TEST_CASE("derive_cluster rejects bad input") {
  CHECK_THROWS_AS(derive_cluster(1, 0, 6), ConfigError);
  CHECK_THROWS_AS(derive_cluster(1, 0, 0), ConfigError);
  CHECK_THROWS_AS(derive_cluster(-1, 0, 256), ConfigError);
  CHECK_THROWS_AS(derive_cluster(1, -2, 256), ConfigError);
}

TEST_CASE("threshold relations hold for a grid of clusters") {
  for (int f = 0; f <= 12; ++f) {
    for (int c = 0; c <= 6; ++c) {
      auto p = derive_cluster(f, c, 64);
      CHECK(p.n == 3u * f + 2u * c + 1);
      // The fast path tolerates exactly c missing shares.
      CHECK(p.n - p.sigma_threshold == static_cast<std::uint32_t>(c));
      CHECK(p.pi_threshold <= p.tau_threshold);
      CHECK(p.tau_threshold <= p.sigma_threshold);
      CHECK(p.sigma_threshold <= p.n);
      // Blocking waits need at most n - f messages; the sigma wait is always
      // bounded by the fast-path timer instead.
      CHECK(p.tau_threshold <= p.n - p.f);
      CHECK(p.view_change_quorum() <= p.n - p.f);
      CHECK(p.view_change_quorum() == p.n - p.f);
      CHECK(p.checkpoint_period * 2 == p.window);
    }
  }
}

TEST_CASE("active window") {
  CHECK(derive_cluster(64, 8).active_window() == 23);
  CHECK(derive_cluster(1, 0).active_window() == 3);
  CHECK(derive_cluster(0, 0, 4).active_window() == 1);
}

TEST_CASE("primary_of is round robin") {
  auto p4 = derive_cluster(1, 0);
  CHECK(primary_of(0, p4) == 1);
  CHECK(primary_of(5, p4) == 2);
  CHECK(primary_of(208, derive_cluster(64, 8)) == 209);
  for (View v = 0; v < 40; ++v) CHECK(primary_of(v, p4) == primary_of(v + p4.n, p4));
}

TEST_CASE("collectors_of") {
  auto p4 = derive_cluster(1, 0);
  auto fast = collectors_of(1, 0, CollectorKind::commit, CollectorPath::fast, p4);
  REQUIRE(fast.collectors.size() == 1);
  CHECK(fast.collectors[0] != primary_of(0, p4));
  CHECK(fast.primary == 1);

  auto linear = collectors_of(1, 0, CollectorKind::commit, CollectorPath::linear, p4);
  CHECK(linear.collectors == std::vector<ReplicaId>{primary_of(0, p4)});

  auto p11 = derive_cluster(2, 2);
  REQUIRE(p11.n == 11);
  auto first = collectors_of(7, 2, CollectorKind::execute, CollectorPath::fast, p11);
  CHECK(first.collectors.size() == 3);
  CHECK(std::set<ReplicaId>(first.collectors.begin(), first.collectors.end()).size() == 3);
  CHECK_FALSE(first.contains(primary_of(2, p11)));
  for (int i = 0; i < 1000; ++i) {
    CHECK(collectors_of(7, 2, CollectorKind::execute, CollectorPath::fast, p11).collectors == first.collectors);
  }
}

TEST_CASE("collector assignments respect role invariants everywhere") {
  auto p = derive_cluster(2, 2);
  std::vector<int> load(p.n + 1, 0);
  for (Seq s = 1; s <= 300; ++s) {
    for (View v = 0; v < 3; ++v) {
      for (auto kind : {CollectorKind::commit, CollectorKind::execute}) {
        auto fast = collectors_of(s, v, kind, CollectorPath::fast, p);
        auto lin = collectors_of(s, v, kind, CollectorPath::linear, p);
        CHECK(fast.collectors.size() == p.c + 1);
        CHECK(std::set<ReplicaId>(fast.collectors.begin(), fast.collectors.end()).size() == p.c + 1);
        CHECK_FALSE(fast.contains(fast.primary));
        CHECK(lin.collectors.back() == lin.primary);
        CHECK(std::set<ReplicaId>(lin.collectors.begin(), lin.collectors.end()).size() == p.c + 1);
        for (auto id : fast.collectors) {
          CHECK(id >= 1);
          CHECK(id <= p.n);
          ++load[id];
        }
      }
    }
  }
  // Load spreads: every replica collects for some slot.
  for (ReplicaId id = 1; id <= p.n; ++id) CHECK(load[id] > 0);
}

TEST_CASE("single replica cluster collects on its own") {
  auto p = derive_cluster(0, 0, 4);
  auto a = collectors_of(1, 0, CollectorKind::commit, CollectorPath::fast, p);
  CHECK(a.collectors == std::vector<ReplicaId>{1});
}
