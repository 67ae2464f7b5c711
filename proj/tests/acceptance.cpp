// Acceptance checks: one PASS/FAIL line per criterion. Thresholds and run
// counts are fixed below; the binary exits nonzero when any line fails.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "support/fit.hpp"
#include "support/safe_value_corpus.hpp"
#include "support/safe_value_oracle.hpp"
#include "tsbft/crypto.hpp"
#include "tsbft/harness.hpp"
#include "tsbft/kvstore.hpp"

using namespace tsbft;
using namespace tsbft::harness;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = TSBFT_SOURCE_DIR;

// 1: Byzantine safety sweep
constexpr std::uint64_t kSafetySeeds = 1000;
constexpr double kSafetyBudgetSeconds = 600.0;
const std::pair<std::uint32_t, std::uint32_t> kSafetyClusters[] = {{1, 0}, {1, 1}, {3, 0}};  // n = 4, 6, 11
const char* const kByzantineScenarios[] = {"equivocating_primary_n4", "stale_viewchange", "invalid_shares",
                                           "silent_collector", "partial_send"};
// 2: safe-value corpus
constexpr std::size_t kSafeValueMinSets = 100000;
constexpr int kSafeValueMaxView = 4;
constexpr int kSafeValueRandomN6 = 200000;
// 3: liveness after a primary crash
constexpr std::uint64_t kCrashSeeds = 100;
constexpr SimTime kCrashAt = 20000;
constexpr std::uint64_t kViewChangeTimeoutsAllowed = 3;
// 4: common mode
constexpr std::uint64_t kCommonSeeds = 50;
constexpr SimTime kSlowExtraDelay = 50000;
const std::pair<std::uint32_t, std::uint32_t> kCommonClusters[] = {{1, 1}, {1, 2}, {2, 1}, {2, 2}};
// 5: linearity
const std::uint32_t kLinearSizes[] = {4, 13, 25, 49};
constexpr double kLinearMaxResidual = 0.10;
constexpr double kBaselineRatioMin = 4.0;
// 6: single acknowledgement
constexpr std::uint64_t kAckSeeds = 20;
constexpr std::uint64_t kDropAckSeeds = 50;
// 7: soak
constexpr std::uint64_t kSoakOps = 10000;
// 8: crypto clusters
const std::pair<int, int> kCryptoClusters[] = {{1, 0}, {2, 1}, {4, 2}};
// 9: Merkle fuzz
constexpr int kMerkleTrials = 100000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

unsigned jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Scenario bundled(const std::string& id) { return load_scenario(kSource / "scenarios" / (id + ".yaml")); }

bool is_commit(const sim::TraceRecord& r) {
  return r.kind == sim::TraceKind::event && r.event.kind == NodeEventKind::commit;
}

// --- 1 and 3 share the Byzantine sweep --------------------------------------

struct ByzantineSweep {
  std::size_t runs = 0;
  std::map<std::string, std::size_t> violations;  // by oracle property
  std::size_t incomplete_runs = 0;
  double seconds = 0;
};

const ByzantineSweep& byzantine_sweep() {
  static const ByzantineSweep result = [] {
    ByzantineSweep out;
    auto t0 = std::chrono::steady_clock::now();
    for (const char* id : kByzantineScenarios) {
      auto s = bundled(id);
      std::vector<RunPoint> points;
      for (auto [f, c] : kSafetyClusters) {
        for (std::uint64_t seed = 1; seed <= kSafetySeeds; ++seed) points.push_back(RunPoint{seed, f, c, s.variant});
      }
      SweepOptions options;
      options.jobs = jobs();
      run_sweep(s, points, options, [&](const RunPoint&, RunResult& r) {
        ++out.runs;
        for (const auto& v : r.oracle.violations) ++out.violations[v.property];
        if (r.row.summary.ops != r.trace.meta.expected_ops) ++out.incomplete_runs;
      });
    }
    out.seconds = seconds_since(t0);
    return out;
  }();
  return result;
}

std::size_t count(const std::map<std::string, std::size_t>& m, const std::string& key) {
  auto it = m.find(key);
  return it == m.end() ? 0 : it->second;
}

Outcome criterion_safety() {
  const auto& sw = byzantine_sweep();
  auto agreement = count(sw.violations, "agreement");
  auto exec = count(sw.violations, "exec-consistency");
  std::size_t other = 0;
  for (const auto& [k, v] : sw.violations) other += v;
  other -= agreement + exec;
  bool pass = sw.runs == std::size(kByzantineScenarios) * std::size(kSafetyClusters) * kSafetySeeds &&
              agreement == 0 && exec == 0 && sw.seconds < kSafetyBudgetSeconds;
  return {pass, fmt::format("{} runs (5 scripts x n in 4,6,11 x {} seeds), agreement {}, exec-consistency {}, "
                            "other oracle findings {}, {:.1f} s of {:.0f} s",
                            sw.runs, kSafetySeeds, agreement, exec, other, sw.seconds, kSafetyBudgetSeconds)};
}

// --- 2 -------------------------------------------------------------------------

Outcome criterion_safe_value() {
  std::size_t checked = 0, mismatches = 0, ties = 0;
  {
    // n=4 (f=1, c=0): three entries, fast quorum 2, exhaustive.
    auto opts = corpus::entry_options(kSafeValueMaxView, false);
    std::vector<SlotEvidence> xs(3);
    for (const auto& a : opts) {
      xs[0] = a;
      for (const auto& b : opts) {
        xs[1] = b;
        for (const auto& c : opts) {
          xs[2] = c;
          auto want = oracle::reference_safe_value(xs, 2);
          if (!oracle::matches(choose_safe_value(xs, 2), want)) ++mismatches;
          ties += want.tie;
          ++checked;
        }
      }
    }
  }
  std::size_t exhaustive = checked;
  {
    // n=6 (f=1, c=1): five entries, fast quorum 3, sampled with decided entries.
    auto opts = corpus::entry_options(kSafeValueMaxView, true);
    std::mt19937_64 rng(6);
    std::vector<SlotEvidence> xs(5);
    for (int t = 0; t < kSafeValueRandomN6; ++t) {
      for (auto& x : xs) x = opts[rng() % opts.size()];
      auto want = oracle::reference_safe_value(xs, 3);
      if (!oracle::matches(choose_safe_value(xs, 3), want)) ++mismatches;
      ties += want.tie;
      ++checked;
    }
  }
  bool pass = exhaustive >= kSafeValueMinSets && mismatches == 0 && ties > 0;
  return {pass, fmt::format("{} sets ({} exhaustive at n=4, {} sampled at n=6, views <= {}), {} slow-over-fast "
                            "ties, {} mismatches",
                            checked, exhaustive, checked - exhaustive, kSafeValueMaxView, ties, mismatches)};
}

// --- 3 -------------------------------------------------------------------------

Outcome criterion_liveness() {
  const auto& sw = byzantine_sweep();
  auto liveness = count(sw.violations, "liveness") + count(sw.violations, "completion");

  auto s = parse_scenario(fmt::format(R"(version: 1
id: primary_crash
sim: {{link: {{base_delay: 1000, jitter: 300}}}}
workload: {{clients: 2, ops_per_client: 6}}
faults:
  - {{kind: crash, replicas: primary, at: {}}}
)",
                                      kCrashAt),
                          "primary_crash");
  const std::pair<std::uint32_t, std::uint32_t> clusters[] = {{1, 0}, {2, 0}, {1, 1}};
  std::size_t runs = 0, slow_new_view = 0, incomplete = 0;
  SimTime worst = 0;
  const SimTime limit = kViewChangeTimeoutsAllowed * s.config.protocol.view_change_timeout;
  for (auto [f, c] : clusters) {
    std::vector<RunPoint> points;
    for (std::uint64_t seed = 1; seed <= kCrashSeeds; ++seed) points.push_back(RunPoint{seed, f, c, s.variant});
    SweepOptions options;
    options.jobs = jobs();
    options.keep_traces = true;
    run_sweep(s, points, options, [&](const RunPoint&, RunResult& r) {
      ++runs;
      if (!r.ok()) ++incomplete;
      std::optional<SimTime> commit;
      for (const auto& rec : r.trace.records) {
        if (is_commit(rec) && rec.event.view >= 1 && rec.time > kCrashAt) {
          commit = rec.time;
          break;
        }
      }
      SimTime took = commit ? *commit - kCrashAt : std::numeric_limits<SimTime>::max();
      worst = std::max(worst, took);
      if (took > limit) ++slow_new_view;
    });
  }
  bool pass = sw.incomplete_runs == 0 && liveness == 0 && slow_new_view == 0 && incomplete == 0;
  return {pass, fmt::format("Byzantine sweep: {} of {} runs incomplete, {} liveness findings; primary crash: {} runs, "
                            "{} failed, slowest new-view commit {} us after the crash (limit {} us = {} timeouts)",
                            sw.incomplete_runs, sw.runs, liveness, runs, incomplete, worst, limit,
                            kViewChangeTimeoutsAllowed)};
}

// --- 4 -------------------------------------------------------------------------

Outcome criterion_common_mode() {
  std::size_t runs = 0, off_fast = 0, with_prepares = 0, failed = 0;
  for (const char* kind : {"crash", "slow"}) {
    auto s = parse_scenario(fmt::format(R"(version: 1
id: common_{0}
sim: {{mode: common, link: {{base_delay: 1000, jitter: 200}}}}
workload: {{clients: 2, ops_per_client: 8}}
faults:
  - {{kind: {0}, replicas: last_c, at: 0{1}}}
)",
                                        kind, std::string(kind) == "slow" ? fmt::format(", extra_delay: {}", kSlowExtraDelay) : ""),
                            "common");
    for (auto [f, c] : kCommonClusters) {
      std::vector<RunPoint> points;
      for (std::uint64_t seed = 1; seed <= kCommonSeeds; ++seed) points.push_back(RunPoint{seed, f, c, s.variant});
      SweepOptions options;
      options.jobs = jobs();
      run_sweep(s, points, options, [&](const RunPoint&, RunResult& r) {
        ++runs;
        if (!r.ok()) ++failed;
        if (r.row.summary.fast_fraction != 1.0) ++off_fast;
        if (r.row.summary.prepares != 0) ++with_prepares;
      });
    }
  }

  // c + 1 crashed backups: the fast quorum is out of reach.
  auto s = parse_scenario(R"(version: 1
id: over_c
sim: {link: {base_delay: 1000, jitter: 200}}
workload: {clients: 2, ops_per_client: 8}
faults:
  - {kind: crash, replicas: last_c_plus_1, at: 0}
)",
                          "over_c");
  std::size_t over_runs = 0, over_failed = 0, over_without_linear = 0;
  for (auto [f, c] : kCommonClusters) {
    std::vector<RunPoint> points;
    for (std::uint64_t seed = 1; seed <= kCommonSeeds; ++seed) points.push_back(RunPoint{seed, f, c, s.variant});
    SweepOptions options;
    options.jobs = jobs();
    run_sweep(s, points, options, [&](const RunPoint&, RunResult& r) {
      ++over_runs;
      if (!r.ok()) ++over_failed;
      if (r.row.summary.prepares == 0) ++over_without_linear;
    });
  }
  bool pass = failed == 0 && off_fast == 0 && with_prepares == 0 && over_failed == 0 && over_without_linear == 0;
  return {pass, fmt::format("c crash/slow: {} runs, {} below fast fraction 1.0, {} with prepares, {} failed; c+1 "
                            "crashes: {} runs, {} failed, {} without the linear path",
                            runs, off_fast, with_prepares, failed, over_runs, over_failed, over_without_linear)};
}

// --- 5 -------------------------------------------------------------------------

Outcome criterion_linearity() {
  auto s = bundled("linear_sweep");
  std::vector<double> xs, linear, baseline;
  bool ok = true;
  for (auto n : kLinearSizes) {
    xs.push_back(n);
    for (auto [variant, out] : {std::pair{ProtocolVariant::linear_pbft, &linear},
                                std::pair{ProtocolVariant::pbft_all_to_all, &baseline}}) {
      auto p = with_cluster_size(default_point(s), n);
      p.variant = variant;
      auto r = run_point(s, p);
      ok = ok && r.ok();
      out->push_back(r.row.messages.messages_per_block());
    }
  }
  auto fit = test::fit_line(xs, linear);
  double ratio = baseline.back() / linear.back();
  bool pass = ok && fit.max_relative_residual < kLinearMaxResidual && ratio >= kBaselineRatioMin;
  return {pass, fmt::format("linear_pbft msgs/block {} ~ {:.2f} n + {:.2f} (max residual {:.4f} < {:.2f}, R^2 "
                            "{:.5f}); all-to-all {}; ratio at n=49 {:.2f} >= {:.1f}",
                            fmt::join(linear, "/"), fit.slope, fit.intercept, fit.max_relative_residual,
                            kLinearMaxResidual, fit.r_squared, fmt::join(baseline, "/"), ratio, kBaselineRatioMin)};
}

// --- 6 -------------------------------------------------------------------------

Outcome criterion_single_ack() {
  std::size_t runs = 0, ops = 0, over_one = 0, failed = 0;
  for (SimTime jitter : {SimTime{0}, SimTime{500}}) {
    for (std::uint32_t clients : {1u, 3u}) {
      auto s = parse_scenario(fmt::format(R"(version: 1
id: ack_{}_{}
sim: {{link: {{base_delay: 1000, jitter: {}}}}}
workload: {{clients: {}, ops_per_client: 6}}
assert: {{single_ack: true}}
)",
                                          jitter, clients, jitter, clients),
                              "single_ack");
      for (auto [f, c] : {std::pair{1u, 0u}, {1u, 1u}, {2u, 0u}, {2u, 1u}}) {
        std::vector<RunPoint> points;
        for (std::uint64_t seed = 1; seed <= kAckSeeds; ++seed) points.push_back(RunPoint{seed, f, c, s.variant});
        SweepOptions options;
        options.jobs = jobs();
        run_sweep(s, points, options, [&](const RunPoint&, RunResult& r) {
          ++runs;
          ops += r.row.summary.ops;
          if (!r.ok()) ++failed;
          if (r.row.summary.client_messages_max != 1 || r.row.summary.client_messages_mean != 1.0) ++over_one;
        });
      }
    }
  }

  auto drops = bundled("drop_acks");
  std::size_t drop_runs = 0, drop_failed = 0, drop_ops = 0, drop_expected = 0;
  for (auto [f, c] : {std::pair{1u, 0u}, {1u, 1u}, {2u, 1u}}) {
    std::vector<RunPoint> points;
    for (std::uint64_t seed = 1; seed <= kDropAckSeeds; ++seed) points.push_back(RunPoint{seed, f, c, drops.variant});
    SweepOptions options;
    options.jobs = jobs();
    run_sweep(drops, points, options, [&](const RunPoint&, RunResult& r) {
      ++drop_runs;
      drop_ops += r.row.summary.ops;
      drop_expected += drops.config.workload.clients * drops.config.workload.ops_per_client;
      if (!r.ok()) ++drop_failed;
    });
  }
  bool pass = failed == 0 && over_one == 0 && ops > 0 && drop_failed == 0 && drop_ops == drop_expected;
  return {pass, fmt::format("fault-free: {} runs, {} ops, {} runs with a client receiving more than one message per "
                            "op, {} failed; all acks dropped: {} runs, {} of {} ops completed via replies",
                            runs, ops, over_one, failed, drop_runs, drop_ops, drop_expected)};
}

// --- 7 -------------------------------------------------------------------------

Outcome criterion_soak() {
  auto s = bundled("soak");
  auto r = run_point(s, default_point(s));
  const auto& meta = r.trace.meta;
  std::uint64_t worst = 0;
  for (const auto& [id, size] : meta.max_log_size) worst = std::max(worst, size);
  std::size_t stable_events = 0;
  for (const auto& rec : r.trace.records) {
    stable_events += rec.kind == sim::TraceKind::event && rec.event.kind == NodeEventKind::stable;
  }
  auto window_findings = r.oracle.count("window");
  auto monotone_findings = r.oracle.count("stable-monotone");
  bool pass = r.ok() && meta.expected_ops == kSoakOps && r.row.summary.ops == kSoakOps && worst <= meta.window &&
              meta.max_log_size.size() == meta.n && window_findings == 0 && monotone_findings == 0 &&
              stable_events > 0;
  return {pass, fmt::format("{} ops at n={}, max log occupancy {} <= window {}, {} stable advances, window findings "
                            "{}, ls regressions {}",
                            r.row.summary.ops, meta.n, worst, meta.window, stable_events, window_findings,
                            monotone_findings)};
}

// --- 8 -------------------------------------------------------------------------

Outcome criterion_crypto() {
  std::size_t checks = 0, failures = 0;
  auto expect = [&](bool ok) {
    ++checks;
    failures += !ok;
  };
  auto digest = [](const char* s) { return sha256(to_bytes(s)); };
  auto shares = [](const PublicMaterial& pub, SchemeTag scheme, const Digest& d, std::uint32_t from,
                   std::uint32_t count) {
    std::vector<SigShare> out;
    for (std::uint32_t i = from; i < from + count; ++i) out.push_back(sign_share(pub, pub.signing_key(scheme, i), d));
    return out;
  };
  auto throws = [](auto&& fn) {
    try {
      fn();
    } catch (const CryptoError&) {
      return true;
    }
    return false;
  };

  for (auto [f, c] : kCryptoClusters) {
    auto params = derive_cluster(f, c);
    PublicMaterial pub(params, 1234);
    for (auto scheme : {SchemeTag::sigma, SchemeTag::tau, SchemeTag::pi}) {
      const auto k = pub.scheme(scheme).threshold;
      auto d = digest("acceptance");
      auto enough = shares(pub, scheme, d, 1, k);
      auto sig = combine(pub, scheme, enough);
      expect(verify_combined(pub, sig));
      expect(throws([&] { combine(pub, scheme, shares(pub, scheme, d, 1, k - 1)); }));
      expect(throws([&] { combine(pub, scheme, std::vector<SigShare>(k, enough.front())); }));

      auto bad = enough.front();
      bad.tag[0] ^= 0xff;
      auto foreign = enough.back();
      foreign.digest = digest("elsewhere");
      auto noisy = enough;
      noisy.insert(noisy.begin(), bad);
      noisy.push_back(foreign);
      auto filtered = combine(pub, scheme, noisy);
      expect(verify_combined(pub, filtered) && filtered.value() == sig.value());

      auto padded = shares(pub, scheme, d, 2, k - 1);
      padded.push_back(bad);
      padded.push_back(foreign);
      expect(throws([&] { combine(pub, scheme, padded); }));
      expect(params.n < k + 1 || combine(pub, scheme, shares(pub, scheme, d, params.n - k + 1, k)).value() == sig.value());
    }
    auto h = digest("block");
    auto tau = combine(pub, SchemeTag::tau, shares(pub, SchemeTag::tau, h, 1, params.tau_threshold));
    auto nested = combine(pub, SchemeTag::tau, shares(pub, SchemeTag::tau, tau.value(), 2, params.tau_threshold));
    expect(verify_combined(pub, nested) && nested.digest == combined_value(SchemeTag::tau, h));
  }
  return {failures == 0, fmt::format("{} boundary checks over sigma/tau/pi at (f,c) = (1,0), (2,1), (4,2) incl. "
                                     "nested tau(tau(h)), {} failed",
                                     checks, failures)};
}

// --- 9 -------------------------------------------------------------------------

Outcome criterion_merkle() {
  constexpr std::uint64_t retention = 8;
  constexpr Seq blocks = 12;
  constexpr std::uint32_t ops_per_block = 5;
  kv::ServiceState st(retention);
  for (Seq s = 1; s <= blocks; ++s) {
    std::vector<kv::BlockOp> ops;
    for (std::uint32_t l = 0; l < ops_per_block; ++l) {
      ClientId client = s * 10 + l;
      auto key = to_bytes("k" + std::to_string((s + l) % 7));
      ops.push_back({client, 1, l % 2 ? kv::make_get(key) : kv::make_put(key, to_bytes("v" + std::to_string(s)))});
    }
    st.execute(s, ops);
  }

  const Seq oldest = blocks - retention + 1;
  std::size_t honest = 0, honest_rejected = 0;
  for (Seq s = oldest; s <= blocks; ++s) {
    for (std::uint32_t l = 1; l <= ops_per_block; ++l) {
      auto [op, val] = st.recorded(s, l);
      ++honest;
      if (!kv::verify(*st.digest_at(s), op, val, s, l, st.proof(s, l))) ++honest_rejected;
    }
  }

  std::mt19937_64 rng(99);
  std::size_t false_accepts = 0;
  for (int t = 0; t < kMerkleTrials; ++t) {
    Seq s = oldest + rng() % retention;
    auto l = static_cast<std::uint32_t>(1 + rng() % ops_per_block);
    auto [op, val] = st.recorded(s, l);
    auto proof = st.proof(s, l);
    auto d = *st.digest_at(s);
    Seq claimed_seq = s;
    std::uint32_t claimed_pos = l;
    auto flip = [&](auto& bytes) { bytes[rng() % bytes.size()] ^= static_cast<Byte>(1 + rng() % 255); };
    switch (rng() % 8) {
      case 0:
        if (val.empty()) val.push_back(0);
        else flip(val);
        break;
      case 1: flip(op); break;
      case 2: flip(d); break;
      case 3:
        if (!proof.block_path.empty()) flip(proof.block_path[rng() % proof.block_path.size()]);
        else flip(proof.kv_root);
        break;
      case 4:
        if (!proof.log_path.empty()) flip(proof.log_path[rng() % proof.log_path.size()]);
        else proof.log_count += 1;
        break;
      case 5: flip(proof.kv_root); break;
      case 6: claimed_pos = l % ops_per_block + 1; break;
      default: claimed_seq = s == blocks ? s - 1 : s + 1; break;
    }
    if (kv::verify(d, op, val, claimed_seq, claimed_pos, proof)) ++false_accepts;
  }
  bool pass = false_accepts == 0 && honest_rejected == 0;
  return {pass, fmt::format("{} mutation trials, {} false accepts; {} honest proofs within retention, {} rejected",
                            kMerkleTrials, false_accepts, honest, honest_rejected)};
}

// --- 10 ------------------------------------------------------------------------

std::string golden_hash(const std::string& id) {
  std::ifstream in(kSource / "tests" / "golden" / (id + ".csv"));
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    return out;
  };
  auto cols = split(header), cells = split(row);
  for (std::size_t i = 0; i < cols.size() && i < cells.size(); ++i) {
    if (cols[i] == "trace_hash") return cells[i];
  }
  return {};
}

Outcome criterion_determinism() {
  std::size_t scenarios = 0, unstable = 0, off_golden = 0;
  for (const auto& e : fs::directory_iterator(kSource / "scenarios")) {
    if (e.path().extension() != ".yaml") continue;
    auto s = load_scenario(e.path());
    auto first = to_hex(run_point(s, default_point(s)).trace.hash());
    auto second = to_hex(run_point(s, default_point(s)).trace.hash());
    ++scenarios;
    if (first != second) ++unstable;
    if (first != golden_hash(s.id)) ++off_golden;
  }
  return {scenarios > 0 && unstable == 0 && off_golden == 0,
          fmt::format("{} bundled scenarios run twice, {} hashes differ between runs, {} differ from the committed "
                      "golden hashes",
                      scenarios, unstable, off_golden)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 10));
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* title;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "safety under Byzantine schedules", criterion_safety},
      {2, "safe-value rule vs reference enumerator", criterion_safe_value},
      {3, "liveness and primary-crash recovery", criterion_liveness},
      {4, "fast path under c crash/slow replicas", criterion_common_mode},
      {5, "linear message growth", criterion_linearity},
      {6, "single-message acknowledgement", criterion_single_ack},
      {7, "checkpoint and log bound soak", criterion_soak},
      {8, "threshold signature boundaries", criterion_crypto},
      {9, "Merkle proof mutation fuzz", criterion_merkle},
      {10, "trace determinism", criterion_determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    failed += !o.pass;
    fmt::print("[{}] criterion {:>2} {}: {} [{:.1f} s]\n", o.pass ? "PASS" : "FAIL", c.id, c.title, o.detail,
               seconds_since(t0));
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
