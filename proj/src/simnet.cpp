#include "tsbft/simnet.hpp"

#include <algorithm>
#include <queue>
#include <random>

#include <fmt/format.h>

namespace tsbft::sim {

namespace {

// Independent streams so that, for example, a jitter change does not reshuffle
// the workload.
constexpr std::uint64_t kLinkStream = 0x6c696e6b;
constexpr std::uint64_t kWorkloadStream = 0x776f726b;
constexpr std::uint64_t kAdversaryStream = 0x61647673;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  // Uniform in [0, bound]; bound 0 yields 0. Modulo bias is irrelevant at
  // these ranges and keeps results identical across standard libraries.
  std::uint64_t upto(std::uint64_t bound) { return bound == 0 ? 0 : gen_() % (bound + 1); }
  double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 gen_;
};

std::uint8_t type_of(const ProtocolMessage& m) { return static_cast<std::uint8_t>(m.index()); }

}  // namespace

const char* mode_name(NetworkMode m) {
  switch (m) {
    case NetworkMode::synchronous: return "synchronous";
    case NetworkMode::common: return "common";
    case NetworkMode::asynchronous: return "asynchronous";
  }
  return "unknown";
}

std::optional<NetworkMode> parse_mode(std::string_view name) {
  if (name == "synchronous") return NetworkMode::synchronous;
  if (name == "common") return NetworkMode::common;
  if (name == "asynchronous") return NetworkMode::asynchronous;
  return std::nullopt;
}

const char* script_name(ByzantineScript s) {
  switch (s) {
    case ByzantineScript::equivocate_preprepare: return "equivocate_preprepare";
    case ByzantineScript::stale_viewchange: return "stale_viewchange";
    case ByzantineScript::invalid_shares: return "invalid_shares";
    case ByzantineScript::silent_collector: return "silent_collector";
    case ByzantineScript::partial_send: return "partial_send";
    case ByzantineScript::withhold_preprepare: return "withhold_preprepare";
  }
  return "unknown";
}

std::optional<ByzantineScript> parse_script(std::string_view name) {
  for (auto s : {ByzantineScript::equivocate_preprepare, ByzantineScript::stale_viewchange,
                 ByzantineScript::invalid_shares, ByzantineScript::silent_collector, ByzantineScript::partial_send,
                 ByzantineScript::withhold_preprepare}) {
    if (name == script_name(s)) return s;
  }
  return std::nullopt;
}

const char* fault_kind_name(FaultSpec::Kind k) {
  switch (k) {
    case FaultSpec::Kind::crash: return "crash";
    case FaultSpec::Kind::slow: return "slow";
    case FaultSpec::Kind::byzantine: return "byzantine";
    case FaultSpec::Kind::drop_acks: return "drop_acks";
  }
  return "unknown";
}

void validate_plan(const SimConfig& config) {
  auto params = derive_cluster(config.f, config.c, static_cast<std::int64_t>(config.window));
  std::set<ReplicaId> byzantine, benign;
  for (const auto& fs : config.faults) {
    if (fs.kind == FaultSpec::Kind::drop_acks) {
      if (fs.replica > params.n) throw PlanViolation(fmt::format("drop_acks names replica {} of {}", fs.replica, params.n));
      if (fs.probability < 0 || fs.probability > 1) throw PlanViolation("drop_acks probability outside [0, 1]");
      continue;
    }
    if (fs.replica < 1 || fs.replica > params.n)
      throw PlanViolation(fmt::format("fault names replica {} outside 1..{}", fs.replica, params.n));
    if (fs.kind == FaultSpec::Kind::byzantine) {
      byzantine.insert(fs.replica);
    } else {
      benign.insert(fs.replica);
    }
  }
  if (!config.strict) return;
  if (byzantine.size() > params.f)
    throw PlanViolation(fmt::format("{} byzantine replicas exceed f = {}", byzantine.size(), params.f));
  std::set<ReplicaId> all = byzantine;
  all.insert(benign.begin(), benign.end());
  if (all.size() > params.f + params.c)
    throw PlanViolation(fmt::format("{} faulty replicas exceed f + c = {}", all.size(), params.f + params.c));
}

SimTime derived_expected_latency(const SimConfig& config) {
  SimTime hop = config.link.base_delay;
  if (config.mode == NetworkMode::asynchronous) {
    SimTime retransmit = config.link.retransmit_timeout ? config.link.retransmit_timeout : 4 * config.link.base_delay;
    hop += config.link.async_ceiling + config.link.drop_budget * retransmit;
  } else {
    hop += config.link.jitter;
  }
  const auto& p = config.protocol;
  return 8 * hop + p.fast_path_timeout + (config.c + 1) * p.stagger_delta + p.batch_timeout;
}

// --- the event loop ----------------------------------------------------------

struct Simulation::Impl {
  struct Deliver {
    Endpoint from, to;
    MessagePtr msg;
  };
  struct Fire {
    Endpoint owner;
    TimerKey key;
    std::uint64_t generation;
  };
  struct FaultStep {
    std::size_t index;
    bool recover;
  };
  struct Submit {
    ClientId client;
  };
  struct Item {
    SimTime time;
    std::uint64_t order;
    std::variant<Deliver, Fire, FaultStep, Submit> what;
    bool operator>(const Item& o) const { return time != o.time ? time > o.time : order > o.order; }
  };

  Impl(const SimConfig& cfg, const ClusterParams& params)
      : config(cfg),
        params(params),
        link_rng(cfg.seed ^ kLinkStream),
        work_rng(cfg.seed ^ kWorkloadStream),
        adv_rng(cfg.seed ^ kAdversaryStream) {
    pub = std::make_shared<const PublicMaterial>(params, cfg.seed, cfg.workload.clients + 1);
    replicas.resize(params.n + 1);
    for (ReplicaId r = 1; r <= params.n; ++r) replicas[r] = std::make_unique<Replica>(r, params, pub, cfg.protocol);
    clients.resize(cfg.workload.clients + 1);
    ClientConfig client_config = cfg.client;
    if (client_config.expected_latency == 0) client_config.expected_latency = derived_expected_latency(cfg);
    for (ClientId c = 1; c <= cfg.workload.clients; ++c)
      clients[c] = std::make_unique<Client>(c, params, pub, client_config);
    issued.assign(cfg.workload.clients + 1, 0);
    retransmit = cfg.link.retransmit_timeout ? cfg.link.retransmit_timeout : 4 * cfg.link.base_delay;
  }

  const SimConfig& config;
  const ClusterParams& params;
  std::shared_ptr<const PublicMaterial> pub;
  std::vector<std::unique_ptr<Replica>> replicas;
  std::vector<std::unique_ptr<Client>> clients;
  std::vector<std::uint64_t> issued;
  std::uint32_t clients_done = 0;

  Rng link_rng, work_rng, adv_rng;
  SimTime retransmit = 0;

  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  std::uint64_t order = 0;
  std::map<std::pair<Endpoint, TimerKey>, std::uint64_t> timers;
  std::uint64_t timer_generation = 0;

  std::set<ReplicaId> crashed;
  std::map<ReplicaId, SimTime> slow;
  std::map<ReplicaId, std::vector<ByzantineScript>> byzantine;
  struct AckDrop {
    ReplicaId replica;
    double probability;
    std::uint64_t limit;
    std::uint64_t dropped = 0;
  };
  std::vector<AckDrop> ack_drops;

  // equivocation bookkeeping
  std::map<ReplicaId, View> last_primary_view;
  std::set<std::pair<ReplicaId, Seq>> forged;

  Trace trace;
  SimTime now = 0;

  void push(SimTime t, decltype(Item::what) what) { queue.push(Item{t, order++, std::move(what)}); }

  void record(TraceRecord r) {
    r.time = now;
    trace.records.push_back(std::move(r));
  }

  // --- outbound pipeline ---------------------------------------------------

  void dispatch(const Endpoint& owner, Effects& fx) {
    if (owner.is_replica()) {
      auto it = byzantine.find(static_cast<ReplicaId>(owner.id));
      if (it != byzantine.end()) {
        for (auto script : it->second) apply_script(static_cast<ReplicaId>(owner.id), script, fx);
      }
    }
    for (const auto& e : fx.events) {
      TraceRecord r;
      r.kind = TraceKind::event;
      r.node = owner;
      r.seq = e.seq;
      r.view = e.view;
      r.event = e;
      record(r);
      if (!owner.is_replica()) on_client_event(e);
    }
    for (const auto& t : fx.timers) {
      auto slot = std::make_pair(owner, t.key);
      if (t.cancel) {
        timers.erase(slot);
        continue;
      }
      auto gen = ++timer_generation;
      timers[slot] = gen;
      push(now + t.delay, Fire{owner, t.key, gen});
    }
    for (const auto& s : fx.sends) {
      for (const auto& to : s.to) send(owner, to, s.msg);
    }
    fx.clear();
  }

  void send(const Endpoint& from, const Endpoint& to, const MessagePtr& msg) {
    TraceRecord r;
    r.kind = TraceKind::send;
    r.node = from;
    r.peer = to;
    r.msg_type = type_of(*msg);
    r.seq = message_seq(*msg).value_or(0);
    r.view = message_view(*msg).value_or(0);
    r.bytes = static_cast<std::uint32_t>(accounted_size(*msg));
    record(r);

    if (std::holds_alternative<ExecuteAck>(*msg) && from.is_replica()) {
      for (auto& d : ack_drops) {
        if (d.replica != 0 && d.replica != from.id) continue;
        if (d.limit != 0 && d.dropped >= d.limit) continue;
        if (adv_rng.unit() < d.probability) {
          ++d.dropped;
          r.kind = TraceKind::drop;
          record(r);
          return;
        }
      }
    }

    SimTime delay = config.link.base_delay;
    if (config.mode == NetworkMode::asynchronous) {
      delay += link_rng.upto(config.link.async_ceiling);
      for (std::uint32_t i = 0; i < config.link.drop_budget; ++i) {
        if (link_rng.unit() >= config.link.drop_probability) break;
        r.kind = TraceKind::drop;
        record(r);
        delay += retransmit;
      }
    } else {
      delay += link_rng.upto(config.link.jitter);
    }
    if (from.is_replica()) {
      if (auto it = slow.find(static_cast<ReplicaId>(from.id)); it != slow.end()) delay += it->second;
    }
    push(now + delay, Deliver{from, to, msg});
  }

  // --- Byzantine scripts ---------------------------------------------------

  SigShare corrupt(SigShare s) {
    s.tag[0] ^= 0x5A;
    return s;
  }

  RequestListPtr alternative(const RequestList& reqs) {
    auto alt = std::make_shared<RequestList>(reqs);
    if (alt->size() > 1) {
      alt->pop_back();
    } else {
      alt->push_back(reqs.front());
    }
    return alt;
  }

  PrePrepare forge_preprepare(ReplicaId self, Seq seq, View view, RequestListPtr reqs) {
    PrePrepare pp;
    pp.seq = seq;
    pp.view = view;
    pp.requests = std::move(reqs);
    auto key = pub->signing_key(SchemeTag::replica_auth, self);
    pp.primary_sig = sign_share(*pub, key, preprepare_sig_digest(seq, view, block_hash(seq, view, *pp.requests)));
    return pp;
  }

  void apply_script(ReplicaId self, ByzantineScript script, Effects& fx) {
    std::vector<Send> out;
    for (auto& s : fx.sends) {
      const ProtocolMessage& m = *s.msg;
      switch (script) {
        case ByzantineScript::equivocate_preprepare: {
          const auto* pp = std::get_if<PrePrepare>(&m);
          if (pp == nullptr) break;
          last_primary_view[self] = std::max(last_primary_view[self], pp->view);
          std::vector<Endpoint> first, second;
          for (const auto& to : s.to) {
            // Self plus the lower half of the rest see the honest block.
            bool lower = to.id == self || first.size() < (s.to.size() + 1) / 2;
            (lower ? first : second).push_back(to);
          }
          if (second.empty()) break;
          auto alt = std::make_shared<const ProtocolMessage>(forge_preprepare(self, pp->seq, pp->view, alternative(*pp->requests)));
          out.push_back({std::move(second), alt});
          s.to = std::move(first);
          break;
        }
        case ByzantineScript::stale_viewchange: {
          const auto* vc = std::get_if<ViewChange>(&m);
          if (vc == nullptr) break;
          ViewChange stale = *vc;
          stale.stable = StableCert{0, kv::genesis_digest(), std::nullopt};
          stale.slots.assign(params.window, ViewChangeSlotEntry{});
          stale.auth = sign_share(*pub, pub->signing_key(SchemeTag::replica_auth, self), stale.signing_digest());
          s.msg = std::make_shared<const ProtocolMessage>(std::move(stale));
          break;
        }
        case ByzantineScript::invalid_shares: {
          ProtocolMessage copy = m;
          bool changed = true;
          if (auto* x = std::get_if<SignShare>(&copy)) {
            if (x->sigma) x->sigma = corrupt(*x->sigma);
            if (x->tau) x->tau = corrupt(*x->tau);
          } else if (auto* c = std::get_if<Commit>(&copy)) {
            c->tau_tau = corrupt(c->tau_tau);
          } else if (auto* st = std::get_if<SignState>(&copy)) {
            st->pi = corrupt(st->pi);
          } else if (auto* cv = std::get_if<CheckpointVote>(&copy)) {
            cv->pi = corrupt(cv->pi);
          } else {
            changed = false;
          }
          if (changed) s.msg = std::make_shared<const ProtocolMessage>(std::move(copy));
          break;
        }
        case ByzantineScript::silent_collector:
          if (std::holds_alternative<FullCommitProof>(m) || std::holds_alternative<FullCommitProofSlow>(m) ||
              std::holds_alternative<FullExecuteProof>(m) || std::holds_alternative<ExecuteAck>(m) ||
              std::holds_alternative<Prepare>(m)) {
            s.to.clear();
          }
          break;
        case ByzantineScript::withhold_preprepare:
          if (std::holds_alternative<PrePrepare>(m)) s.to.clear();
          break;
        case ByzantineScript::partial_send: {
          if (s.to.size() <= 1) break;
          std::vector<Endpoint> kept;
          for (const auto& to : s.to) {
            if (to.id == self && to.is_replica()) {
              kept.push_back(to);
            } else if (adv_rng.unit() < 0.5) {
              kept.push_back(to);
            }
          }
          s.to = std::move(kept);
          break;
        }
      }
    }
    for (auto& s : out) fx.sends.push_back(std::move(s));
  }

  // A deposed equivocating primary answers each new-view pre-prepare with a
  // signed one of its own for the same slot under its old view.
  void stale_replay(ReplicaId self, const Endpoint& from, const ProtocolMessage& m) {
    auto bit = byzantine.find(self);
    if (bit == byzantine.end() ||
        std::find(bit->second.begin(), bit->second.end(), ByzantineScript::equivocate_preprepare) == bit->second.end())
      return;
    auto lit = last_primary_view.find(self);
    if (lit == last_primary_view.end()) return;
    const auto* pp = std::get_if<PrePrepare>(&m);
    if (pp == nullptr || from.id == self || pp->view <= lit->second) return;
    if (!forged.insert({self, pp->seq}).second) return;
    Effects fx;
    std::vector<Endpoint> all;
    for (ReplicaId r = 1; r <= params.n; ++r) all.push_back(Endpoint::replica(r));
    fx.send(std::move(all), forge_preprepare(self, pp->seq, lit->second, alternative(*pp->requests)));
    // Bypass apply_script: these are already the adversary's own messages.
    for (const auto& s : fx.sends) {
      for (const auto& to : s.to) send(Endpoint::replica(self), to, s.msg);
    }
  }

  // --- handlers ---------------------------------------------------------------

  void submit_next(ClientId c) {
    if (issued[c] >= config.workload.ops_per_client) {
      ++clients_done;
      return;
    }
    ++issued[c];
    const auto& w = config.workload;
    auto key = to_bytes(fmt::format("k{}", work_rng.upto(w.key_space ? w.key_space - 1 : 0)));
    Bytes op;
    if (work_rng.unit() < w.put_fraction) {
      auto value = to_bytes(fmt::format("c{}t{}", c, issued[c]));
      value.resize(std::max<std::size_t>(value.size(), w.value_size), '.');
      op = kv::make_put(key, value);
    } else {
      op = kv::make_get(key);
    }
    Effects fx;
    clients[c]->submit(std::move(op), now, fx);
    dispatch(Endpoint::client(c), fx);
  }

  void on_client_event(const NodeEvent& e) {
    if (e.kind != NodeEventKind::completed && e.kind != NodeEventKind::client_failed) return;
    push(now + config.workload.think_time, Submit{e.client});
  }

  void observe(ReplicaId r) {
    const auto& rep = *replicas[r];
    auto& size = trace.meta.max_log_size[r];
    size = std::max<std::uint64_t>(size, rep.log_size());
    auto& span = trace.meta.max_log_span[r];
    if (rep.log_size() > 0) span = std::max<std::uint64_t>(span, rep.log_max_seq() - rep.last_stable());
  }

  void handle(Item& item) {
    now = item.time;
    Effects fx;
    if (auto* d = std::get_if<Deliver>(&item.what)) {
      TraceRecord r;
      r.kind = TraceKind::deliver;
      r.node = d->to;
      r.peer = d->from;
      r.msg_type = type_of(*d->msg);
      r.seq = message_seq(*d->msg).value_or(0);
      r.view = message_view(*d->msg).value_or(0);
      if (d->to.is_replica()) {
        auto id = static_cast<ReplicaId>(d->to.id);
        if (crashed.count(id)) {
          r.kind = TraceKind::drop;
          record(r);
          return;
        }
        record(r);
        stale_replay(id, d->from, *d->msg);
        replicas[id]->on_message(d->from, *d->msg, now, fx);
        dispatch(d->to, fx);
        observe(id);
      } else {
        if (d->to.id < 1 || d->to.id >= clients.size()) return;
        record(r);
        clients[d->to.id]->on_message(d->from, *d->msg, now, fx);
        dispatch(d->to, fx);
      }
    } else if (auto* t = std::get_if<Fire>(&item.what)) {
      auto it = timers.find({t->owner, t->key});
      if (it == timers.end() || it->second != t->generation) return;
      timers.erase(it);
      TraceRecord r;
      r.kind = TraceKind::timer;
      r.node = t->owner;
      r.timer = t->key.kind;
      r.seq = t->key.seq;
      r.view = t->key.view;
      record(r);
      if (t->owner.is_replica()) {
        auto id = static_cast<ReplicaId>(t->owner.id);
        replicas[id]->on_timer(t->key, now, fx);
        dispatch(t->owner, fx);
        observe(id);
      } else {
        clients[t->owner.id]->on_timer(t->key, now, fx);
        dispatch(t->owner, fx);
      }
    } else if (auto* f = std::get_if<FaultStep>(&item.what)) {
      apply_fault(f->index, f->recover);
    } else if (auto* s = std::get_if<Submit>(&item.what)) {
      submit_next(s->client);
    }
  }

  void apply_fault(std::size_t index, bool recover) {
    const auto& fs = config.faults[index];
    TraceRecord r;
    r.kind = TraceKind::fault;
    r.node = Endpoint::replica(fs.replica);
    r.event.path = static_cast<std::uint8_t>(fs.kind);
    r.event.position = recover ? 1 : 0;
    r.view = static_cast<View>(fs.script);
    record(r);
    switch (fs.kind) {
      case FaultSpec::Kind::crash:
        if (recover) {
          crashed.erase(fs.replica);
          Effects fx;
          replicas[fs.replica]->on_recover(now, fx);
          dispatch(Endpoint::replica(fs.replica), fx);
        } else {
          crashed.insert(fs.replica);
          for (auto it = timers.begin(); it != timers.end();) {
            it = it->first.first == Endpoint::replica(fs.replica) ? timers.erase(it) : std::next(it);
          }
        }
        break;
      case FaultSpec::Kind::slow: slow[fs.replica] = fs.extra_delay; break;
      case FaultSpec::Kind::byzantine: byzantine[fs.replica].push_back(fs.script); break;
      case FaultSpec::Kind::drop_acks: ack_drops.push_back({fs.replica, fs.probability, fs.limit}); break;
    }
  }

  Trace run() {
    auto& meta = trace.meta;
    meta.n = params.n;
    meta.f = params.f;
    meta.c = params.c;
    meta.window = params.window;
    meta.seed = config.seed;
    meta.mode = config.mode;
    meta.variant = variant_label(config.protocol);
    meta.clients = config.workload.clients;
    meta.expected_ops = config.workload.clients * config.workload.ops_per_client;
    for (const auto& fs : config.faults) {
      if (fs.kind == FaultSpec::Kind::byzantine) meta.byzantine.insert(fs.replica);
      if (fs.kind == FaultSpec::Kind::crash || fs.kind == FaultSpec::Kind::slow) meta.faulty.insert(fs.replica);
      if (fs.kind == FaultSpec::Kind::drop_acks) meta.ack_drops = true;
    }
    for (ReplicaId r = 1; r <= params.n; ++r) {
      meta.max_log_size[r] = 0;
      meta.max_log_span[r] = 0;
    }

    // Faults at time 0 take effect before any traffic.
    for (std::size_t i = 0; i < config.faults.size(); ++i) {
      const auto& fs = config.faults[i];
      if (fs.at == 0) {
        apply_fault(i, false);
      } else {
        push(fs.at, FaultStep{i, false});
      }
      if (fs.kind == FaultSpec::Kind::crash && fs.recover_at) push(*fs.recover_at, FaultStep{i, true});
    }
    for (ReplicaId r = 1; r <= params.n; ++r) {
      Effects fx;
      replicas[r]->start(0, fx);
      dispatch(Endpoint::replica(r), fx);
    }
    for (ClientId c = 1; c < clients.size(); ++c) push(0, Submit{c});

    while (!queue.empty() && clients_done < config.workload.clients) {
      Item item = queue.top();
      if (item.time > config.horizon) break;
      queue.pop();
      handle(item);
    }
    meta.finished = clients_done >= config.workload.clients;
    meta.end_time = now;
    return std::move(trace);
  }

  static std::string variant_label(const ProtocolConfig& p) {
    for (auto v : {ProtocolVariant::pbft_all_to_all, ProtocolVariant::linear_pbft, ProtocolVariant::fast_path,
                   ProtocolVariant::exec_collector, ProtocolVariant::redundant_c}) {
      ProtocolConfig probe;
      apply_variant(probe, v);
      if (probe.all_to_all == p.all_to_all && probe.fast_path == p.fast_path &&
          probe.exec_collector == p.exec_collector && probe.redundant_collectors == p.redundant_collectors)
        return variant_name(v);
    }
    return "custom";
  }
};

Simulation::Simulation(SimConfig config)
    : config_(std::move(config)),
      params_(derive_cluster(config_.f, config_.c, static_cast<std::int64_t>(config_.window))) {
  validate_plan(config_);
  impl_ = std::make_unique<Impl>(config_, params_);
}

Simulation::~Simulation() = default;

Trace Simulation::run() { return impl_->run(); }

const Replica& Simulation::replica(ReplicaId r) const { return *impl_->replicas.at(r); }
const Client& Simulation::client(ClientId c) const { return *impl_->clients.at(c); }

}  // namespace tsbft::sim
