#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsbft/client.hpp"
#include "tsbft/node.hpp"
#include "tsbft/replica.hpp"

// Deterministic discrete-event simulator. One run is single threaded; the
// trace it produces is a pure function of the configuration.
namespace tsbft::sim {

enum class NetworkMode : std::uint8_t { synchronous, common, asynchronous };
const char* mode_name(NetworkMode m);
std::optional<NetworkMode> parse_mode(std::string_view name);

struct LinkConfig {
  SimTime base_delay = 1000;
  // Uniform extra delay in [0, jitter].
  SimTime jitter = 0;
  // Asynchronous mode: uniform extra delay in [0, async_ceiling] and up to
  // drop_budget drops per (message, link), each retransmitted after
  // retransmit_timeout.
  SimTime async_ceiling = 20000;
  double drop_probability = 0.2;
  std::uint32_t drop_budget = 2;
  SimTime retransmit_timeout = 0;  // 0 derives 4 * base_delay
};

enum class ByzantineScript : std::uint8_t {
  equivocate_preprepare,
  stale_viewchange,
  invalid_shares,
  silent_collector,
  partial_send,
  // A primary that stops proposing; combined with stale_viewchange it forces
  // a view change in which the stale evidence is used.
  withhold_preprepare,
};
const char* script_name(ByzantineScript s);
std::optional<ByzantineScript> parse_script(std::string_view name);

struct FaultSpec {
  enum class Kind : std::uint8_t { crash, slow, byzantine, drop_acks };
  Kind kind = Kind::crash;
  ReplicaId replica = 0;  // drop_acks: 0 drops acks from any replica
  SimTime at = 0;
  std::optional<SimTime> recover_at;  // crash only
  SimTime extra_delay = 0;            // slow only
  // Several byzantine specs for one replica combine their scripts.
  ByzantineScript script = ByzantineScript::equivocate_preprepare;
  double probability = 1.0;           // drop_acks
  std::uint64_t limit = 0;            // drop_acks: max drops, 0 unlimited
};
const char* fault_kind_name(FaultSpec::Kind k);

struct Workload {
  std::uint32_t clients = 1;
  std::uint64_t ops_per_client = 1;
  double put_fraction = 0.5;
  std::uint32_t key_space = 16;
  std::uint32_t value_size = 8;
  SimTime think_time = 0;
};

struct SimConfig {
  std::uint32_t f = 1;
  std::uint32_t c = 0;
  std::uint64_t window = 64;
  std::uint64_t seed = 1;
  NetworkMode mode = NetworkMode::synchronous;
  LinkConfig link;
  ProtocolConfig protocol;
  ClientConfig client;
  Workload workload;
  std::vector<FaultSpec> faults;
  SimTime horizon = 60'000'000;
  // Reject plans exceeding the fault model instead of running them.
  bool strict = true;
};

class PlanViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Throws PlanViolation when the fault plan exceeds f Byzantine replicas, or
// (common mode) more than c crashed or slow replicas, or names a replica
// outside 1..n.
void validate_plan(const SimConfig& config);

// Client expected latency used when ClientConfig::expected_latency is 0:
// eight worst-case hops plus the fast-path timeout, the collector staggers
// and one batch timeout.
SimTime derived_expected_latency(const SimConfig& config);

enum class TraceKind : std::uint8_t { send, deliver, drop, timer, event, fault };
const char* trace_kind_name(TraceKind k);

inline constexpr std::uint8_t kNoMessage = 0xFF;

struct TraceRecord {
  SimTime time = 0;
  TraceKind kind = TraceKind::send;
  Endpoint node;  // actor: sender for send/drop, receiver for deliver
  Endpoint peer;  // other end of a message
  std::uint8_t msg_type = kNoMessage;
  Seq seq = 0;
  View view = 0;
  std::uint32_t bytes = 0;
  TimerKind timer = TimerKind::batch;  // timer records
  NodeEvent event;                     // event records; fault records use event.path
};

struct TraceMeta {
  std::uint32_t n = 0, f = 0, c = 0;
  std::uint64_t window = 0;
  std::uint64_t seed = 0;
  NetworkMode mode = NetworkMode::synchronous;
  std::string variant;
  std::set<ReplicaId> byzantine;
  std::set<ReplicaId> faulty;  // crashed or slow at any point
  bool ack_drops = false;
  std::uint32_t clients = 0;
  std::uint64_t expected_ops = 0;
  SimTime end_time = 0;
  bool finished = false;  // every client op completed or failed
  // Largest observed per-replica log occupancy and span above ls.
  std::map<ReplicaId, std::uint64_t> max_log_size;
  std::map<ReplicaId, std::uint64_t> max_log_span;
};

struct Trace {
  TraceMeta meta;
  std::vector<TraceRecord> records;

  Digest hash() const;
};

// NDJSON: a header line carrying the meta, then one record per line.
void write_ndjson(const Trace& trace, std::ostream& out);
// Throws std::runtime_error on malformed or incompatible input.
Trace read_ndjson(std::istream& in);
inline constexpr int kTraceVersion = 1;

struct OracleReport {
  struct Violation {
    std::string property;
    std::size_t index = 0;  // record index
    std::string detail;
  };
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count(const std::string& property) const;
};

struct OracleOptions {
  // Defaults to synchronous or common mode with at most f replicas faulty
  // or Byzantine; beyond that a view change cannot gather its quorum.
  std::optional<bool> check_liveness;
  // Defaults to fault-free runs with the E-collector acknowledgement.
  std::optional<bool> check_single_ack;
  bool check_window = true;
};

// Properties: agreement, exec-consistency, dedup, window, stable-monotone,
// completion (completed values match honest execution), single-ack, liveness.
OracleReport oracle_check(const Trace& trace, const OracleOptions& options = {});

struct BlockMessages {
  std::map<std::string, std::uint64_t> count_by_type;
  std::map<std::string, std::uint64_t> bytes_by_type;
  std::uint64_t count = 0;
  std::uint64_t bytes = 0;
};

struct MessageStats {
  std::map<Seq, BlockMessages> per_block;  // committed blocks only
  std::uint64_t committed_blocks = 0;
  std::uint64_t total_count = 0;
  std::uint64_t total_bytes = 0;
  std::map<std::string, std::uint64_t> count_by_type;

  double messages_per_block() const;
  double bytes_per_block() const;
};

// Counts messages carrying the sequence number of a committed block, one per
// recipient, with combined signatures at their succinct size.
MessageStats message_stats(const Trace& trace);

struct RunSummary {
  std::uint64_t committed_blocks = 0;
  std::uint64_t ops = 0;  // completed client ops
  std::uint64_t failed_ops = 0;
  double latency_mean = 0, latency_median = 0, latency_p99 = 0;
  std::uint64_t view_changes = 0;  // distinct views installed past 0
  double fast_fraction = 0;        // honest commits on the fast path
  std::uint64_t prepares = 0;
  // Protocol messages a client received per completed op.
  double client_messages_mean = 0;
  std::uint32_t client_messages_max = 0;
};

RunSummary summarize(const Trace& trace);

class Simulation {
 public:
  explicit Simulation(SimConfig config);
  ~Simulation();

  Trace run();

  const SimConfig& config() const { return config_; }
  const ClusterParams& params() const { return params_; }
  const Replica& replica(ReplicaId r) const;
  const Client& client(ClientId c) const;

 private:
  struct Impl;
  SimConfig config_;
  ClusterParams params_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace tsbft::sim
