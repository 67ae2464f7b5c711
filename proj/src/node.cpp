#include "tsbft/node.hpp"

#include "tsbft/hash.hpp"

namespace tsbft {

const char* timer_kind_name(TimerKind k) {
  switch (k) {
    case TimerKind::batch: return "batch";
    case TimerKind::fast_path: return "fast-path";
    case TimerKind::proof_stagger: return "proof-stagger";
    case TimerKind::slow_stagger: return "slow-stagger";
    case TimerKind::exec_stagger: return "exec-stagger";
    case TimerKind::share_forward: return "share-forward";
    case TimerKind::progress: return "progress";
    case TimerKind::checkpoint: return "checkpoint";
    case TimerKind::catch_up: return "catch-up";
    case TimerKind::fetch_retry: return "fetch-retry";
    case TimerKind::client_retry: return "client-retry";
  }
  return "unknown";
}

const char* node_event_name(NodeEventKind k) {
  switch (k) {
    case NodeEventKind::commit: return "commit";
    case NodeEventKind::execute: return "execute";
    case NodeEventKind::executed_op: return "executed-op";
    case NodeEventKind::stable: return "stable";
    case NodeEventKind::view_change: return "view-change";
    case NodeEventKind::view_installed: return "view-installed";
    case NodeEventKind::rejected: return "rejected";
    case NodeEventKind::conflict: return "conflict";
    case NodeEventKind::state_transfer: return "state-transfer";
    case NodeEventKind::completed: return "completed";
    case NodeEventKind::client_failed: return "client-failed";
  }
  return "unknown";
}

const char* commit_path_name(CommitPath p) {
  switch (p) {
    case CommitPath::fast: return "fast";
    case CommitPath::slow: return "slow";
    case CommitPath::decided: return "decided";
    case CommitPath::fetched: return "fetched";
  }
  return "unknown";
}

Digest value_hash(BytesView val) { return Hasher().raw("tsbft/val").blob(val).finish(); }

}  // namespace tsbft
