#include <algorithm>
#include <istream>
#include <ostream>

#include <fmt/format.h>
#include <json.hpp>

#include "tsbft/hash.hpp"
#include "tsbft/simnet.hpp"

namespace tsbft::sim {

namespace {

using nlohmann::json;

void hash_endpoint(Hasher& h, const Endpoint& e) {
  h.u8(static_cast<std::uint8_t>(e.kind)).u64(e.id);
}

std::string endpoint_text(const Endpoint& e) { return fmt::format("{}{}", e.is_replica() ? 'r' : 'c', e.id); }

Endpoint parse_endpoint(const std::string& s) {
  if (s.size() < 2 || (s[0] != 'r' && s[0] != 'c')) throw std::runtime_error("bad endpoint '" + s + "'");
  std::uint64_t id = std::stoull(s.substr(1));
  return s[0] == 'r' ? Endpoint::replica(static_cast<ReplicaId>(id)) : Endpoint::client(id);
}

Digest parse_digest(const std::string& hex) {
  Bytes b = from_hex(hex);
  if (b.size() != 32) throw std::runtime_error("bad digest");
  Digest d;
  std::copy(b.begin(), b.end(), d.begin());
  return d;
}

template <class E>
E parse_enum(const std::string& text, int count, const char* (*name)(E), const char* what) {
  for (int i = 0; i < count; ++i) {
    if (text == name(static_cast<E>(i))) return static_cast<E>(i);
  }
  throw std::runtime_error(fmt::format("unknown {} '{}'", what, text));
}

const char* kind_name_for_parse(TraceKind k) { return trace_kind_name(k); }
const char* timer_name_for_parse(TimerKind k) { return timer_kind_name(k); }
const char* event_name_for_parse(NodeEventKind k) { return node_event_name(k); }
const char* mode_name_for_parse(NetworkMode m) { return mode_name(m); }

}  // namespace

const char* trace_kind_name(TraceKind k) {
  switch (k) {
    case TraceKind::send: return "send";
    case TraceKind::deliver: return "deliver";
    case TraceKind::drop: return "drop";
    case TraceKind::timer: return "timer";
    case TraceKind::event: return "event";
    case TraceKind::fault: return "fault";
  }
  return "unknown";
}

Digest Trace::hash() const {
  Hasher h;
  h.raw("tsbft/trace").u32(kTraceVersion);
  h.u32(meta.n).u32(meta.f).u32(meta.c).u64(meta.window).u64(meta.seed).u8(static_cast<std::uint8_t>(meta.mode));
  h.u64(records.size());
  for (const auto& r : records) {
    h.u64(r.time).u8(static_cast<std::uint8_t>(r.kind));
    hash_endpoint(h, r.node);
    hash_endpoint(h, r.peer);
    h.u8(r.msg_type).u64(r.seq).u64(r.view).u32(r.bytes).u8(static_cast<std::uint8_t>(r.timer));
    const auto& e = r.event;
    h.u8(static_cast<std::uint8_t>(e.kind)).u64(e.seq).u64(e.view).u32(e.position).u8(e.path);
    h.u64(e.client).u64(e.timestamp).digest(e.digest).digest(e.hash).u64(e.latency);
  }
  h.u64(meta.end_time).u8(meta.finished ? 1 : 0);
  return h.finish();
}

// --- NDJSON ---------------------------------------------------------------------

void write_ndjson(const Trace& trace, std::ostream& out) {
  const auto& m = trace.meta;
  json header = {
      {"trace_version", kTraceVersion},
      {"n", m.n},
      {"f", m.f},
      {"c", m.c},
      {"window", m.window},
      {"seed", m.seed},
      {"mode", mode_name(m.mode)},
      {"variant", m.variant},
      {"byzantine", m.byzantine},
      {"faulty", m.faulty},
      {"ack_drops", m.ack_drops},
      {"clients", m.clients},
      {"expected_ops", m.expected_ops},
      {"end_time", m.end_time},
      {"finished", m.finished},
      {"records", trace.records.size()},
  };
  json logs = json::object();
  for (const auto& [r, size] : m.max_log_size) logs[std::to_string(r)] = {size, m.max_log_span.at(r)};
  header["max_log"] = logs;
  out << header.dump() << '\n';
  for (const auto& r : trace.records) {
    json j = {{"t", r.time}, {"k", trace_kind_name(r.kind)}, {"node", endpoint_text(r.node)}};
    switch (r.kind) {
      case TraceKind::send:
      case TraceKind::deliver:
      case TraceKind::drop:
        j["peer"] = endpoint_text(r.peer);
        j["type"] = message_type_name(r.msg_type);
        j["seq"] = r.seq;
        j["view"] = r.view;
        if (r.kind != TraceKind::deliver) j["bytes"] = r.bytes;
        break;
      case TraceKind::timer:
        j["timer"] = timer_kind_name(r.timer);
        j["seq"] = r.seq;
        j["view"] = r.view;
        break;
      case TraceKind::event: {
        const auto& e = r.event;
        j["ev"] = node_event_name(e.kind);
        j["seq"] = e.seq;
        j["view"] = e.view;
        j["pos"] = e.position;
        j["path"] = e.path;
        j["client"] = e.client;
        j["ts"] = e.timestamp;
        j["digest"] = to_hex(e.digest);
        j["hash"] = to_hex(e.hash);
        j["latency"] = e.latency;
        break;
      }
      case TraceKind::fault:
        j["fault"] = fault_kind_name(static_cast<FaultSpec::Kind>(r.event.path));
        j["recover"] = r.event.position != 0;
        j["script"] = r.view;
        break;
    }
    out << j.dump() << '\n';
  }
}

Trace read_ndjson(std::istream& in) {
  Trace trace;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace");
  std::size_t expected = 0;
  try {
    json h = json::parse(line);
    if (!h.contains("trace_version")) throw std::runtime_error("missing trace header");
    int version = h.at("trace_version").get<int>();
    if (version != kTraceVersion)
      throw std::runtime_error(fmt::format("trace version {} unsupported (expected {})", version, kTraceVersion));
    auto& m = trace.meta;
    m.n = h.at("n");
    m.f = h.at("f");
    m.c = h.at("c");
    m.window = h.at("window");
    m.seed = h.at("seed");
    m.mode = parse_enum<NetworkMode>(h.at("mode").get<std::string>(), 3, mode_name_for_parse, "mode");
    m.variant = h.at("variant");
    m.byzantine = h.at("byzantine").get<std::set<ReplicaId>>();
    m.faulty = h.at("faulty").get<std::set<ReplicaId>>();
    m.ack_drops = h.at("ack_drops");
    m.clients = h.at("clients");
    m.expected_ops = h.at("expected_ops");
    m.end_time = h.at("end_time");
    m.finished = h.at("finished");
    expected = h.at("records");
    for (const auto& [key, v] : h.at("max_log").items()) {
      auto r = static_cast<ReplicaId>(std::stoul(key));
      m.max_log_size[r] = v.at(0);
      m.max_log_span[r] = v.at(1);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("bad trace header: ") + e.what());
  }

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      TraceRecord r;
      r.time = j.at("t");
      r.kind = parse_enum<TraceKind>(j.at("k").get<std::string>(), 6, kind_name_for_parse, "record kind");
      r.node = parse_endpoint(j.at("node"));
      switch (r.kind) {
        case TraceKind::send:
        case TraceKind::deliver:
        case TraceKind::drop: {
          r.peer = parse_endpoint(j.at("peer"));
          int type = message_type_index(j.at("type").get<std::string>());
          if (type < 0) throw std::runtime_error("unknown message type");
          r.msg_type = static_cast<std::uint8_t>(type);
          r.seq = j.at("seq");
          r.view = j.at("view");
          if (r.kind != TraceKind::deliver) r.bytes = j.at("bytes");
          break;
        }
        case TraceKind::timer:
          r.timer = parse_enum<TimerKind>(j.at("timer").get<std::string>(), 11, timer_name_for_parse, "timer");
          r.seq = j.at("seq");
          r.view = j.at("view");
          break;
        case TraceKind::event: {
          auto& e = r.event;
          e.kind = parse_enum<NodeEventKind>(j.at("ev").get<std::string>(), 11, event_name_for_parse, "event");
          e.seq = r.seq = j.at("seq");
          e.view = r.view = j.at("view");
          e.position = j.at("pos");
          e.path = j.at("path");
          e.client = j.at("client");
          e.timestamp = j.at("ts");
          e.digest = parse_digest(j.at("digest"));
          e.hash = parse_digest(j.at("hash"));
          e.latency = j.at("latency");
          break;
        }
        case TraceKind::fault: {
          std::string kind = j.at("fault");
          bool found = false;
          for (int i = 0; i < 4; ++i) {
            if (kind == fault_kind_name(static_cast<FaultSpec::Kind>(i))) {
              r.event.path = static_cast<std::uint8_t>(i);
              found = true;
            }
          }
          if (!found) throw std::runtime_error("unknown fault kind");
          r.event.position = j.at("recover").get<bool>() ? 1 : 0;
          r.view = j.at("script");
          break;
        }
      }
      trace.records.push_back(r);
    } catch (const std::exception& e) {
      throw std::runtime_error(fmt::format("trace line {}: {}", lineno, e.what()));
    }
  }
  if (trace.records.size() != expected)
    throw std::runtime_error(fmt::format("trace truncated: {} of {} records", trace.records.size(), expected));
  return trace;
}

// --- oracle -------------------------------------------------------------------------

std::size_t OracleReport::count(const std::string& property) const {
  return static_cast<std::size_t>(
      std::count_if(violations.begin(), violations.end(), [&](const auto& v) { return v.property == property; }));
}

OracleReport oracle_check(const Trace& trace, const OracleOptions& options) {
  OracleReport report;
  const auto& meta = trace.meta;
  auto fail = [&](const char* property, std::size_t index, std::string detail) {
    report.violations.push_back({property, index, std::move(detail)});
  };
  auto honest = [&](const Endpoint& e) { return e.is_replica() && !meta.byzantine.count(static_cast<ReplicaId>(e.id)); };

  struct First {
    Digest value;
    std::size_t index;
    std::uint64_t node;
  };
  std::map<Seq, First> committed, executed;
  std::map<std::uint64_t, std::set<std::pair<ClientId, Timestamp>>> applied;
  std::map<std::pair<ClientId, Timestamp>, std::pair<Seq, Digest>> results;
  std::map<std::uint64_t, Seq> stable;
  std::vector<std::size_t> completions;
  std::set<std::pair<ClientId, Timestamp>> completed;

  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const auto& r = trace.records[i];
    if (r.kind != TraceKind::event) continue;
    const auto& e = r.event;
    if (e.kind == NodeEventKind::completed) {
      completions.push_back(i);
      continue;
    }
    if (!honest(r.node)) continue;
    switch (e.kind) {
      case NodeEventKind::commit: {
        auto [it, fresh] = committed.emplace(e.seq, First{e.digest, i, r.node.id});
        if (!fresh && it->second.value != e.digest)
          fail("agreement", i,
               fmt::format("seq {}: r{} committed {} but r{} committed {}", e.seq, r.node.id, to_hex(e.digest).substr(0, 16),
                           it->second.node, to_hex(it->second.value).substr(0, 16)));
        break;
      }
      case NodeEventKind::conflict:
        fail("agreement", i, fmt::format("seq {}: r{} saw commit proofs for two blocks", e.seq, r.node.id));
        break;
      case NodeEventKind::execute: {
        auto [it, fresh] = executed.emplace(e.seq, First{e.digest, i, r.node.id});
        if (!fresh && it->second.value != e.digest)
          fail("exec-consistency", i, fmt::format("seq {}: r{} and r{} disagree on the state digest", e.seq, r.node.id,
                                                  it->second.node));
        break;
      }
      case NodeEventKind::executed_op: {
        if (e.path != 0) break;  // duplicate, state untouched
        std::pair<ClientId, Timestamp> key{e.client, e.timestamp};
        if (!applied[r.node.id].insert(key).second)
          fail("dedup", i, fmt::format("r{} executed client {} timestamp {} twice", r.node.id, e.client, e.timestamp));
        results.emplace(key, std::make_pair(e.seq, e.digest));
        break;
      }
      case NodeEventKind::stable: {
        auto& last = stable[r.node.id];
        if (e.seq <= last)
          fail("stable-monotone", i, fmt::format("r{} stable went from {} to {}", r.node.id, last, e.seq));
        last = e.seq;
        break;
      }
      case NodeEventKind::state_transfer: {
        // A snapshot installs ls directly; it must not go backwards either.
        if (e.seq < stable[r.node.id])
          fail("stable-monotone", i, fmt::format("r{} state transfer to {} below ls", r.node.id, e.seq));
        break;
      }
      default:
        break;
    }
  }

  bool single_ack = options.check_single_ack.value_or(
      meta.byzantine.empty() && meta.faulty.empty() && !meta.ack_drops && meta.mode == NetworkMode::synchronous &&
      (meta.variant == variant_name(ProtocolVariant::exec_collector) ||
       meta.variant == variant_name(ProtocolVariant::redundant_c)));
  for (auto i : completions) {
    const auto& e = trace.records[i].event;
    std::pair<ClientId, Timestamp> key{e.client, e.timestamp};
    if (!completed.insert(key).second)
      fail("completion", i, fmt::format("client {} timestamp {} completed twice", e.client, e.timestamp));
    auto it = results.find(key);
    if (it == results.end()) {
      fail("completion", i, fmt::format("client {} timestamp {} completed without an honest execution", e.client, e.timestamp));
    } else if (it->second.first != e.seq || it->second.second != e.digest) {
      fail("completion", i, fmt::format("client {} timestamp {} completed with a value no honest replica produced",
                                        e.client, e.timestamp));
    }
    if (single_ack && e.position != 1)
      fail("single-ack", i, fmt::format("client {} timestamp {} needed {} messages", e.client, e.timestamp, e.position));
  }

  if (options.check_window) {
    for (const auto& [r, size] : meta.max_log_size) {
      if (meta.byzantine.count(r)) continue;
      if (size > meta.window) fail("window", 0, fmt::format("r{} held {} slots", r, size));
      if (meta.max_log_span.at(r) > meta.window)
        fail("window", 0, fmt::format("r{} held a slot {} above ls", r, meta.max_log_span.at(r)));
    }
  }

  std::set<ReplicaId> troubled = meta.byzantine;
  troubled.insert(meta.faulty.begin(), meta.faulty.end());
  bool liveness =
      options.check_liveness.value_or(meta.mode != NetworkMode::asynchronous && troubled.size() <= meta.f);
  if (liveness) {
    if (!meta.finished || completed.size() != meta.expected_ops)
      fail("liveness", trace.records.size(),
           fmt::format("{} of {} ops completed by t={}", completed.size(), meta.expected_ops, meta.end_time));
  }
  return report;
}

// --- statistics ---------------------------------------------------------------------

double MessageStats::messages_per_block() const {
  return committed_blocks ? static_cast<double>(total_count) / static_cast<double>(committed_blocks) : 0.0;
}

double MessageStats::bytes_per_block() const {
  return committed_blocks ? static_cast<double>(total_bytes) / static_cast<double>(committed_blocks) : 0.0;
}

MessageStats message_stats(const Trace& trace) {
  MessageStats stats;
  std::set<Seq> committed;
  for (const auto& r : trace.records) {
    if (r.kind == TraceKind::event && r.event.kind == NodeEventKind::commit && r.node.is_replica() &&
        !trace.meta.byzantine.count(static_cast<ReplicaId>(r.node.id)))
      committed.insert(r.event.seq);
  }
  stats.committed_blocks = committed.size();
  for (const auto& r : trace.records) {
    if (r.kind != TraceKind::send || r.seq == 0 || !committed.count(r.seq)) continue;
    std::string type = message_type_name(r.msg_type);
    auto& b = stats.per_block[r.seq];
    ++b.count_by_type[type];
    b.bytes_by_type[type] += r.bytes;
    ++b.count;
    b.bytes += r.bytes;
    ++stats.count_by_type[type];
    ++stats.total_count;
    stats.total_bytes += r.bytes;
  }
  return stats;
}

RunSummary summarize(const Trace& trace) {
  RunSummary s;
  std::set<Seq> committed;
  std::set<View> views;
  std::vector<SimTime> latencies;
  std::uint64_t commits = 0, fast = 0, client_messages = 0;
  int prepare_type = message_type_index("prepare");
  for (const auto& r : trace.records) {
    if (r.kind == TraceKind::send && r.msg_type == prepare_type) ++s.prepares;
    if (r.kind != TraceKind::event) continue;
    const auto& e = r.event;
    bool honest = r.node.is_replica() && !trace.meta.byzantine.count(static_cast<ReplicaId>(r.node.id));
    switch (e.kind) {
      case NodeEventKind::completed:
        ++s.ops;
        latencies.push_back(e.latency);
        client_messages += e.position;
        s.client_messages_max = std::max(s.client_messages_max, e.position);
        break;
      case NodeEventKind::client_failed: ++s.failed_ops; break;
      case NodeEventKind::commit:
        if (!honest) break;
        committed.insert(e.seq);
        ++commits;
        if (e.path == static_cast<std::uint8_t>(CommitPath::fast)) ++fast;
        break;
      case NodeEventKind::view_installed:
        if (honest) views.insert(e.view);
        break;
      default: break;
    }
  }
  s.committed_blocks = committed.size();
  s.view_changes = views.size();
  s.fast_fraction = commits ? static_cast<double>(fast) / static_cast<double>(commits) : 0.0;
  if (s.ops) s.client_messages_mean = static_cast<double>(client_messages) / static_cast<double>(s.ops);
  if (!latencies.empty()) {
    std::sort(latencies.begin(), latencies.end());
    double sum = 0;
    for (auto l : latencies) sum += static_cast<double>(l);
    s.latency_mean = sum / static_cast<double>(latencies.size());
    s.latency_median = static_cast<double>(latencies[(latencies.size() - 1) / 2]);
    std::size_t p99 = (latencies.size() * 99 + 99) / 100;
    s.latency_p99 = static_cast<double>(latencies[std::min(latencies.size(), std::max<std::size_t>(p99, 1)) - 1]);
  }
  return s;
}

}  // namespace tsbft::sim
