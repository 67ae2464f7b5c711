#include "tsbft/client.hpp"

#include "tsbft/kvstore.hpp"

namespace tsbft {

Client::Client(ClientId id, const ClusterParams& params, std::shared_ptr<const PublicMaterial> pub,
               ClientConfig config)
    : id_(id), params_(params), pub_(std::move(pub)), config_(config) {
  key_ = pub_->signing_key(SchemeTag::client_auth, static_cast<std::uint32_t>(id_));
  if (config_.expected_latency == 0) config_.expected_latency = kDefaultExpectedLatency;
}

SimTime Client::retry_delay(std::uint32_t attempt) const {
  return (2 * config_.expected_latency) << std::min<std::uint32_t>(attempt, 20);
}

Timestamp Client::submit(Bytes op, SimTime now, Effects& fx) {
  Outstanding o;
  o.request = make_request(*pub_, key_, next_timestamp_++, std::move(op));
  o.sent_at = now;
  fx.send(Endpoint::replica(primary_of(view_, params_)), RequestMsg{o.request, false});
  fx.set_timer({TimerKind::client_retry, o.request.timestamp, 0}, retry_delay(0));
  Timestamp t = o.request.timestamp;
  outstanding_ = std::move(o);
  return t;
}

void Client::note_view(View v) { view_ = std::max(view_, v); }

void Client::on_message(const Endpoint& from, const ProtocolMessage& m, SimTime now, Effects& fx) {
  if (!from.is_replica() || from.id < 1 || from.id > params_.n) return;
  if (const auto* ack = std::get_if<ExecuteAck>(&m)) {
    handle_ack(*ack, now, fx);
  } else if (const auto* rp = std::get_if<Reply>(&m)) {
    handle_reply(static_cast<ReplicaId>(from.id), *rp, now, fx);
  }
}

void Client::handle_ack(const ExecuteAck& m, SimTime now, Effects& fx) {
  if (!outstanding_ || m.client != id_ || m.timestamp != outstanding_->request.timestamp) return;
  ++outstanding_->messages;
  ++stats_.messages;
  bool ok = m.pi.scheme == SchemeTag::pi && verify_combined(*pub_, m.pi) && m.op == outstanding_->request.op &&
            kv::verify(m.pi.digest, m.op, m.val, m.seq, m.position, m.proof);
  if (!ok) {
    ++stats_.rejected;
    return;
  }
  note_view(m.view);
  ++stats_.via_ack;
  complete(m.seq, m.val, now, fx);
}

void Client::handle_reply(ReplicaId from, const Reply& m, SimTime now, Effects& fx) {
  if (!outstanding_ || m.client != id_ || m.timestamp != outstanding_->request.timestamp) return;
  ++outstanding_->messages;
  ++stats_.messages;
  if (m.replica != from || m.auth.scheme != SchemeTag::replica_auth || m.auth.signer != from ||
      m.auth.digest != m.signing_digest() || !verify_share(*pub_, m.auth)) {
    ++stats_.rejected;
    return;
  }
  note_view(m.view);
  auto& voters = outstanding_->replies[{m.seq, m.val}];
  voters[from] = true;
  if (voters.size() >= params_.f + 1) {
    ++stats_.via_replies;
    complete(m.seq, m.val, now, fx);
  }
}

void Client::complete(Seq seq, const Bytes& val, SimTime now, Effects& fx) {
  NodeEvent e;
  e.kind = NodeEventKind::completed;
  e.seq = seq;
  e.client = id_;
  e.timestamp = outstanding_->request.timestamp;
  e.digest = value_hash(val);
  e.position = outstanding_->messages;
  e.view = view_;
  e.latency = now - outstanding_->sent_at;
  fx.event(e);
  fx.cancel_timer({TimerKind::client_retry, outstanding_->request.timestamp, 0});
  last_result_ = val;
  last_seq_ = seq;
  ++stats_.completed;
  outstanding_.reset();
}

void Client::on_timer(const TimerKey& key, SimTime, Effects& fx) {
  if (key.kind != TimerKind::client_retry || !outstanding_ || key.seq != outstanding_->request.timestamp) return;
  auto& o = *outstanding_;
  if (o.retries >= config_.retry_budget) {
    NodeEvent e;
    e.kind = NodeEventKind::client_failed;
    e.client = id_;
    e.timestamp = o.request.timestamp;
    fx.event(e);
    ++stats_.failed;
    outstanding_.reset();
    return;
  }
  ++o.retries;
  ++stats_.retries;
  std::vector<Endpoint> all;
  for (ReplicaId r = 1; r <= params_.n; ++r) all.push_back(Endpoint::replica(r));
  fx.send(std::move(all), RequestMsg{o.request, true});
  fx.set_timer({TimerKind::client_retry, o.request.timestamp, 0}, retry_delay(o.retries));
}

}  // namespace tsbft
