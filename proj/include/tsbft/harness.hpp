#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsbft/simnet.hpp"

// Scenario files, metrics rows and sweeps on top of the simulator.
namespace tsbft::harness {

inline constexpr int kScenarioVersion = 1;

// A configuration problem, located in its source file when known.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(const std::string& message, std::string origin = {}, int line = -1, int column = -1,
                std::string excerpt = {});

  const std::string& origin() const { return origin_; }
  int line() const { return line_; }  // 1-based, -1 unknown
  int column() const { return column_; }

 private:
  std::string origin_;
  int line_, column_;
};

// Which replicas a fault applies to. Named selectors resolve against the
// cluster size of each run so one scenario works across a size sweep.
struct ReplicaSelector {
  enum class Kind : std::uint8_t {
    list,          // explicit ids
    primary,       // primary of view 0
    first_f,       // 1..f
    last_f,        // n-f+1..n
    last_c,        // n-c+1..n
    last_c_plus_1  // n-c..n
  };
  Kind kind = Kind::list;
  std::vector<ReplicaId> ids;

  std::vector<ReplicaId> resolve(const ClusterParams& params) const;
};

struct FaultTemplate {
  sim::FaultSpec spec;  // replica field is filled per resolved id
  ReplicaSelector replicas;
  int line = -1;
};

struct Assertions {
  bool oracle = true;
  sim::OracleOptions oracle_options;
  bool all_ops_complete = true;
  std::optional<double> fast_fraction_min;
  std::optional<std::uint64_t> view_changes_min;
  std::optional<std::uint64_t> prepares_max;
  std::optional<std::uint32_t> client_messages_max;
};

struct Scenario {
  int version = kScenarioVersion;
  std::string id;
  std::string description;
  std::string origin;  // file the scenario was read from
  sim::SimConfig config;
  ProtocolVariant variant = ProtocolVariant::redundant_c;
  std::vector<FaultTemplate> faults;
  Assertions assertions;
  std::string output_csv;    // relative to --out when set
  std::string output_trace;
};

// Throws ScenarioError with line context on malformed input, unknown keys,
// bad values or a fault plan outside the model in strict mode.
Scenario parse_scenario(const std::string& text, const std::string& origin = "<string>");
Scenario load_scenario(const std::filesystem::path& path);

// One point of a run or sweep.
struct RunPoint {
  std::uint64_t seed = 1;
  std::uint32_t f = 1;
  std::uint32_t c = 0;
  ProtocolVariant variant = ProtocolVariant::redundant_c;
};

RunPoint default_point(const Scenario& s);
// Cluster size n with c fixed: f = (n - 1 - 2c) / 3, which must be integral.
RunPoint with_cluster_size(RunPoint p, std::uint32_t n);

// The simulator configuration of one point. Throws ScenarioError when the
// resolved fault plan is outside the model and the scenario is strict.
sim::SimConfig instantiate(const Scenario& s, const RunPoint& p);

struct MetricsRow {
  std::string scenario;
  std::string variant;
  std::uint64_t seed = 0;
  std::uint32_t n = 0, f = 0, c = 0;
  sim::RunSummary summary;
  sim::MessageStats messages;
  std::string trace_hash;
  bool passed = false;
};

// Stable column order, documented in docs/metrics-csv.md.
std::vector<std::string> csv_columns();
void write_csv_header(std::ostream& out);
void write_csv_row(const MetricsRow& row, std::ostream& out);

struct RunResult {
  MetricsRow row;
  sim::Trace trace;
  sim::OracleReport oracle;
  std::vector<std::string> failures;  // oracle violations and failed assertions

  bool ok() const { return failures.empty(); }
};

RunResult run_point(const Scenario& s, const RunPoint& p);

// Sweep axes. Empty axes keep the scenario's default.
struct SweepPlan {
  std::vector<std::uint32_t> sizes;
  std::vector<std::uint64_t> seeds;
  std::vector<ProtocolVariant> variants;

  std::vector<RunPoint> points(const Scenario& s) const;
};

// Parses "n=4,13,25", "seeds=1..100", "seed=7" or "variant=linear_pbft,fast_path"
// into `plan`; throws ScenarioError otherwise.
void add_sweep_axis(SweepPlan& plan, const std::string& spec);

struct SweepOptions {
  unsigned jobs = 1;
  // Checked between runs; set from a signal handler to stop early.
  const std::atomic<bool>* stop = nullptr;
  bool keep_traces = false;
};

// Runs every point, calling `on_result` in point order as results become
// available. Returns the number of points completed.
std::size_t run_sweep(const Scenario& s, const std::vector<RunPoint>& points, const SweepOptions& options,
                      const std::function<void(const RunPoint&, RunResult&)>& on_result);

struct ReplayFilter {
  std::optional<ReplicaId> replica;
  std::optional<ClientId> client;
  std::optional<Seq> seq;
  std::optional<sim::TraceKind> kind;

  bool matches(const sim::TraceRecord& r) const;
};

std::optional<sim::TraceKind> parse_trace_kind(std::string_view name);
// One human-readable line per matching record.
void print_trace(const sim::Trace& trace, const ReplayFilter& filter, std::ostream& out);

}  // namespace tsbft::harness
