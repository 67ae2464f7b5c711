#pragma once

#include <compare>
#include <memory>
#include <vector>

#include "tsbft/messages.hpp"

// The action interface between protocol state machines (replicas, clients)
// and whatever drives them: outbound sends, named timers, and observable
// events for the trace.
namespace tsbft {

struct Endpoint {
  enum class Kind : std::uint8_t { replica = 0, client = 1 };
  Kind kind = Kind::replica;
  std::uint64_t id = 0;

  static Endpoint replica(ReplicaId r) { return {Kind::replica, r}; }
  static Endpoint client(ClientId c) { return {Kind::client, c}; }
  bool is_replica() const { return kind == Kind::replica; }
  auto operator<=>(const Endpoint&) const = default;
};

using MessagePtr = std::shared_ptr<const ProtocolMessage>;

enum class TimerKind : std::uint8_t {
  batch,
  fast_path,        // C-collector: tau shares but no sigma, fall back to linear
  proof_stagger,    // C-collector k waits k * stagger before sending a proof
  slow_stagger,     // linear collector k waits before full-commit-proof-slow
  exec_stagger,     // E-collector k waits before full-execute-proof
  share_forward,    // backup: no progress from collectors, hand shares to primary
  progress,         // view-change timer
  checkpoint,       // periodic checkpoint vote fallback
  catch_up,         // lagging replica fetches blocks or a snapshot
  fetch_retry,
  client_retry,
};

const char* timer_kind_name(TimerKind k);

struct TimerKey {
  TimerKind kind = TimerKind::batch;
  Seq seq = 0;
  View view = 0;
  auto operator<=>(const TimerKey&) const = default;
};

struct Send {
  std::vector<Endpoint> to;
  MessagePtr msg;
};

struct TimerOp {
  TimerKey key;
  SimTime delay = 0;
  bool cancel = false;
};

enum class NodeEventKind : std::uint8_t {
  commit,         // seq, view, hash, content, path
  execute,        // seq, digest
  executed_op,    // seq, position, client, timestamp, digest = H(val), path 1 if duplicate
  stable,         // seq = new ls
  view_change,    // view = target
  view_installed, // view
  rejected,       // path = RejectReason
  conflict,       // a second commit proof disagreeing with the committed hash
  state_transfer, // seq installed
  completed,      // client: seq, client, timestamp, digest = H(val), position = messages received
  client_failed,  // client: timestamp
};

const char* node_event_name(NodeEventKind k);

enum class CommitPath : std::uint8_t { fast = 0, slow = 1, decided = 2, fetched = 3 };
const char* commit_path_name(CommitPath p);

// Digest of an operation result, as carried in executed-op and completed events.
Digest value_hash(BytesView val);

struct NodeEvent {
  NodeEventKind kind = NodeEventKind::commit;
  Seq seq = 0;
  View view = 0;
  std::uint32_t position = 0;
  std::uint8_t path = 0;
  ClientId client = 0;
  Timestamp timestamp = 0;
  Digest digest{};
  Digest hash{};
  SimTime latency = 0;  // completed: submit to completion
};

struct Effects {
  std::vector<Send> sends;
  std::vector<TimerOp> timers;
  std::vector<NodeEvent> events;

  void send(std::vector<Endpoint> to, ProtocolMessage m) {
    sends.push_back({std::move(to), std::make_shared<const ProtocolMessage>(std::move(m))});
  }
  void send(Endpoint to, ProtocolMessage m) { send(std::vector<Endpoint>{to}, std::move(m)); }
  void set_timer(TimerKey key, SimTime delay) { timers.push_back({key, delay, false}); }
  void cancel_timer(TimerKey key) { timers.push_back({key, 0, true}); }
  void event(NodeEvent e) { events.push_back(e); }
  void clear() {
    sends.clear();
    timers.clear();
    events.clear();
  }
};

}  // namespace tsbft
