#pragma once

#include <map>
#include <memory>
#include <optional>

#include "tsbft/messages.hpp"
#include "tsbft/node.hpp"
#include "tsbft/params.hpp"

namespace tsbft {

inline constexpr SimTime kDefaultExpectedLatency = 10000;

struct ClientConfig {
  // Latency the client expects for one request; the first retry fires at
  // twice this, later ones double.
  // 0: the simulator derives it from the link model; standalone clients
  // fall back to kDefaultExpectedLatency.
  SimTime expected_latency = 0;
  std::uint32_t retry_budget = 5;
};

struct ClientStats {
  std::uint64_t completed = 0;
  std::uint64_t failed = 0;
  std::uint64_t retries = 0;
  std::uint64_t via_ack = 0;
  std::uint64_t via_replies = 0;
  std::uint64_t rejected = 0;  // messages that failed verification
  std::uint64_t messages = 0;  // protocol messages received for live requests
};

// A closed-loop client with at most one outstanding request.
class Client {
 public:
  Client(ClientId id, const ClusterParams& params, std::shared_ptr<const PublicMaterial> pub, ClientConfig config = {});

  // Issues `op`; returns its timestamp. Requires !busy().
  Timestamp submit(Bytes op, SimTime now, Effects& fx);
  void on_message(const Endpoint& from, const ProtocolMessage& m, SimTime now, Effects& fx);
  void on_timer(const TimerKey& key, SimTime now, Effects& fx);

  bool busy() const { return outstanding_.has_value(); }
  ClientId id() const { return id_; }
  View known_view() const { return view_; }
  const ClientStats& stats() const { return stats_; }
  // Result of the last completed request.
  const Bytes& last_result() const { return last_result_; }
  Seq last_seq() const { return last_seq_; }

 private:
  struct Outstanding {
    ClientRequest request;
    SimTime sent_at = 0;
    std::uint32_t retries = 0;
    std::uint32_t messages = 0;
    // (seq, val) -> replicas that replied with it
    std::map<std::pair<Seq, Bytes>, std::map<ReplicaId, bool>> replies;
  };

  void handle_ack(const ExecuteAck& m, SimTime now, Effects& fx);
  void handle_reply(ReplicaId from, const Reply& m, SimTime now, Effects& fx);
  void complete(Seq seq, const Bytes& val, SimTime now, Effects& fx);
  void note_view(View v);
  SimTime retry_delay(std::uint32_t attempt) const;

  ClientId id_;
  ClusterParams params_;
  std::shared_ptr<const PublicMaterial> pub_;
  ClientConfig config_;
  SigningKey key_;
  View view_ = 0;
  Timestamp next_timestamp_ = 1;
  std::optional<Outstanding> outstanding_;
  Bytes last_result_;
  Seq last_seq_ = 0;
  ClientStats stats_;
};

}  // namespace tsbft
