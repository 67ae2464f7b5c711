#include "tsbft/harness.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <condition_variable>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

namespace tsbft::harness {

using sim::ByzantineScript;
using sim::FaultSpec;
using sim::TraceKind;
using sim::TraceRecord;

namespace {

std::string locate(const std::string& message, const std::string& origin, int line, int column,
                   const std::string& excerpt) {
  if (origin.empty()) return message;
  std::string out = origin;
  if (line > 0) out += fmt::format(":{}:{}", line, column > 0 ? column : 1);
  out += ": " + message;
  if (!excerpt.empty()) {
    out += "\n  " + excerpt;
    if (column > 0) out += "\n  " + std::string(static_cast<std::size_t>(column - 1), ' ') + "^";
  }
  return out;
}

// Parses YAML nodes into the scenario while remembering where each value
// came from.
class Reader {
 public:
  Reader(std::string origin, const std::string& text) : origin_(std::move(origin)) {
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) lines_.push_back(line);
  }

  [[noreturn]] void fail(const YAML::Mark& mark, const std::string& message) const {
    int line = mark.line >= 0 ? mark.line + 1 : -1;
    int column = mark.column >= 0 ? mark.column + 1 : -1;
    std::string excerpt;
    if (line > 0 && static_cast<std::size_t>(line) <= lines_.size()) excerpt = lines_[static_cast<std::size_t>(line - 1)];
    throw ScenarioError(message, origin_, line, column, excerpt);
  }
  [[noreturn]] void fail(const YAML::Node& node, const std::string& message) const { fail(node.Mark(), message); }

  void expect_map(const YAML::Node& node, const std::string& what) const {
    if (!node.IsMap()) fail(node, what + " must be a mapping");
  }

  // Rejects keys outside `allowed`, reporting the offending key.
  void check_keys(const YAML::Node& map, std::initializer_list<std::string_view> allowed,
                  const std::string& section) const {
    for (const auto& kv : map) {
      auto key = kv.first.as<std::string>();
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        fail(kv.first, fmt::format("unknown key '{}' in {}", key, section));
      }
    }
  }

  std::string str(const YAML::Node& node, const std::string& what) const {
    if (!node.IsScalar()) fail(node, what + " must be a scalar");
    return node.Scalar();
  }

  std::uint64_t u64(const YAML::Node& node, const std::string& what) const {
    auto text = str(node, what);
    std::uint64_t value = 0;
    std::string digits;
    for (char ch : text) {
      if (ch != '_' && ch != '\'') digits += ch;
    }
    auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (digits.empty() || ec != std::errc{} || end != digits.data() + digits.size()) {
      fail(node, fmt::format("{} must be a non-negative integer, got '{}'", what, text));
    }
    return value;
  }

  std::uint32_t u32(const YAML::Node& node, const std::string& what) const {
    auto v = u64(node, what);
    if (v > 0xFFFFFFFFu) fail(node, what + " is out of range");
    return static_cast<std::uint32_t>(v);
  }

  double real(const YAML::Node& node, const std::string& what) const {
    str(node, what);
    try {
      return node.as<double>();
    } catch (const YAML::Exception&) {
      fail(node, fmt::format("{} must be a number, got '{}'", what, node.Scalar()));
    }
  }

  double fraction(const YAML::Node& node, const std::string& what) const {
    double v = real(node, what);
    if (!(v >= 0.0 && v <= 1.0)) fail(node, what + " must lie in [0, 1]");
    return v;
  }

  bool boolean(const YAML::Node& node, const std::string& what) const {
    str(node, what);
    try {
      return node.as<bool>();
    } catch (const YAML::Exception&) {
      fail(node, fmt::format("{} must be true or false, got '{}'", what, node.Scalar()));
    }
  }

  // "auto" leaves the oracle default in place.
  std::optional<bool> tristate(const YAML::Node& node, const std::string& what) const {
    if (node.IsScalar() && node.Scalar() == "auto") return std::nullopt;
    return boolean(node, what);
  }

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::vector<std::string> lines_;
};

// Applies `fn` to each present key of `map`.
template <class Fn>
void each(const YAML::Node& map, Fn&& fn) {
  for (const auto& kv : map) fn(kv.first.as<std::string>(), kv.second);
}

void read_cluster(const Reader& rd, const YAML::Node& node, sim::SimConfig& cfg) {
  rd.expect_map(node, "cluster");
  rd.check_keys(node, {"f", "c", "window"}, "cluster");
  each(node, [&](const std::string& key, const YAML::Node& v) {
    if (key == "f") cfg.f = rd.u32(v, "cluster.f");
    if (key == "c") cfg.c = rd.u32(v, "cluster.c");
    if (key == "window") cfg.window = rd.u64(v, "cluster.window");
  });
}

void read_link(const Reader& rd, const YAML::Node& node, sim::LinkConfig& link) {
  rd.expect_map(node, "sim.link");
  rd.check_keys(node,
                {"base_delay", "jitter", "async_ceiling", "drop_probability", "drop_budget", "retransmit_timeout"},
                "sim.link");
  each(node, [&](const std::string& key, const YAML::Node& v) {
    if (key == "base_delay") link.base_delay = rd.u64(v, "base_delay");
    if (key == "jitter") link.jitter = rd.u64(v, "jitter");
    if (key == "async_ceiling") link.async_ceiling = rd.u64(v, "async_ceiling");
    if (key == "drop_probability") link.drop_probability = rd.fraction(v, "drop_probability");
    if (key == "drop_budget") link.drop_budget = rd.u32(v, "drop_budget");
    if (key == "retransmit_timeout") link.retransmit_timeout = rd.u64(v, "retransmit_timeout");
  });
  if (link.base_delay == 0) rd.fail(node, "sim.link.base_delay must be positive");
}

void read_sim(const Reader& rd, const YAML::Node& node, sim::SimConfig& cfg) {
  rd.expect_map(node, "sim");
  rd.check_keys(node, {"seed", "mode", "horizon", "strict", "link"}, "sim");
  each(node, [&](const std::string& key, const YAML::Node& v) {
    if (key == "seed") cfg.seed = rd.u64(v, "sim.seed");
    if (key == "horizon") cfg.horizon = rd.u64(v, "sim.horizon");
    if (key == "strict") cfg.strict = rd.boolean(v, "sim.strict");
    if (key == "link") read_link(rd, v, cfg.link);
    if (key == "mode") {
      auto mode = sim::parse_mode(rd.str(v, "sim.mode"));
      if (!mode) rd.fail(v, "sim.mode must be synchronous, common or asynchronous");
      cfg.mode = *mode;
    }
  });
}

void read_protocol(const Reader& rd, const YAML::Node& node, ProtocolConfig& p) {
  rd.expect_map(node, "protocol");
  rd.check_keys(node,
                {"fast_path_timeout", "stagger_delta", "view_change_timeout", "batch_timeout",
                 "share_forward_timeout", "checkpoint_timeout", "catch_up_timeout", "max_batch"},
                "protocol");
  each(node, [&](const std::string& key, const YAML::Node& v) {
    if (key == "fast_path_timeout") p.fast_path_timeout = rd.u64(v, key);
    if (key == "stagger_delta") p.stagger_delta = rd.u64(v, key);
    if (key == "view_change_timeout") p.view_change_timeout = rd.u64(v, key);
    if (key == "batch_timeout") p.batch_timeout = rd.u64(v, key);
    if (key == "share_forward_timeout") p.share_forward_timeout = rd.u64(v, key);
    if (key == "checkpoint_timeout") p.checkpoint_timeout = rd.u64(v, key);
    if (key == "catch_up_timeout") p.catch_up_timeout = rd.u64(v, key);
    if (key == "max_batch") p.max_batch = rd.u32(v, key);
  });
  if (p.view_change_timeout == 0) rd.fail(node, "protocol.view_change_timeout must be positive");
  if (p.max_batch == 0) rd.fail(node, "protocol.max_batch must be positive");
}

void read_client(const Reader& rd, const YAML::Node& node, ClientConfig& c) {
  rd.expect_map(node, "client");
  rd.check_keys(node, {"expected_latency", "retry_budget"}, "client");
  each(node, [&](const std::string& key, const YAML::Node& v) {
    if (key == "expected_latency") c.expected_latency = rd.u64(v, key);
    if (key == "retry_budget") c.retry_budget = rd.u32(v, key);
  });
}

void read_workload(const Reader& rd, const YAML::Node& node, sim::SimConfig& cfg) {
  rd.expect_map(node, "workload");
  rd.check_keys(node,
                {"clients", "ops_per_client", "put_fraction", "key_space", "value_size", "think_time",
                 "batch_target"},
                "workload");
  auto& w = cfg.workload;
  each(node, [&](const std::string& key, const YAML::Node& v) {
    if (key == "clients") w.clients = rd.u32(v, key);
    if (key == "ops_per_client") w.ops_per_client = rd.u64(v, key);
    if (key == "put_fraction") w.put_fraction = rd.fraction(v, key);
    if (key == "key_space") w.key_space = rd.u32(v, key);
    if (key == "value_size") w.value_size = rd.u32(v, key);
    if (key == "think_time") w.think_time = rd.u64(v, key);
    if (key == "batch_target") {
      cfg.protocol.max_batch = rd.u32(v, key);
      if (cfg.protocol.max_batch == 0) rd.fail(v, "workload.batch_target must be positive");
    }
  });
  if (w.clients == 0) rd.fail(node, "workload.clients must be positive");
  if (w.key_space == 0) rd.fail(node, "workload.key_space must be positive");
}

ReplicaSelector read_selector(const Reader& rd, const YAML::Node& node) {
  ReplicaSelector sel;
  if (node.IsSequence()) {
    for (const auto& item : node) sel.ids.push_back(rd.u32(item, "replica id"));
    if (sel.ids.empty()) rd.fail(node, "replicas list is empty");
    return sel;
  }
  auto text = rd.str(node, "replicas");
  static const std::pair<const char*, ReplicaSelector::Kind> named[] = {
      {"primary", ReplicaSelector::Kind::primary},
      {"first_f", ReplicaSelector::Kind::first_f},
      {"last_f", ReplicaSelector::Kind::last_f},
      {"last_c", ReplicaSelector::Kind::last_c},
      {"last_c_plus_1", ReplicaSelector::Kind::last_c_plus_1},
  };
  for (auto [name, kind] : named) {
    if (text == name) {
      sel.kind = kind;
      return sel;
    }
  }
  sel.ids.push_back(rd.u32(node, "replicas (an id, a list, or one of primary, first_f, last_f, last_c, last_c_plus_1)"));
  return sel;
}

FaultTemplate read_fault(const Reader& rd, const YAML::Node& node) {
  rd.expect_map(node, "fault");
  rd.check_keys(node, {"kind", "replicas", "at", "recover_at", "extra_delay", "script", "probability", "limit"},
                "fault");
  FaultTemplate ft;
  ft.line = node.Mark().line + 1;
  if (!node["kind"]) rd.fail(node, "fault needs a kind");
  auto kind = rd.str(node["kind"], "kind");
  bool found = false;
  for (auto k : {FaultSpec::Kind::crash, FaultSpec::Kind::slow, FaultSpec::Kind::byzantine, FaultSpec::Kind::drop_acks}) {
    if (kind == sim::fault_kind_name(k)) {
      ft.spec.kind = k;
      found = true;
    }
  }
  if (!found) rd.fail(node["kind"], "fault kind must be crash, slow, byzantine or drop_acks");

  const bool drop = ft.spec.kind == FaultSpec::Kind::drop_acks;
  if (node["replicas"]) {
    ft.replicas = read_selector(rd, node["replicas"]);
  } else if (drop) {
    ft.replicas.ids = {0};
  } else {
    rd.fail(node, "fault needs replicas");
  }
  auto only_for = [&](const char* key, FaultSpec::Kind k) {
    if (node[key] && ft.spec.kind != k) {
      rd.fail(node[key], fmt::format("'{}' applies to {} faults only", key, sim::fault_kind_name(k)));
    }
  };
  only_for("recover_at", FaultSpec::Kind::crash);
  only_for("extra_delay", FaultSpec::Kind::slow);
  only_for("script", FaultSpec::Kind::byzantine);
  only_for("probability", FaultSpec::Kind::drop_acks);
  only_for("limit", FaultSpec::Kind::drop_acks);

  if (node["at"]) ft.spec.at = rd.u64(node["at"], "at");
  if (node["recover_at"]) {
    ft.spec.recover_at = rd.u64(node["recover_at"], "recover_at");
    if (*ft.spec.recover_at <= ft.spec.at) rd.fail(node["recover_at"], "recover_at must follow at");
  }
  if (node["extra_delay"]) ft.spec.extra_delay = rd.u64(node["extra_delay"], "extra_delay");
  if (ft.spec.kind == FaultSpec::Kind::slow && ft.spec.extra_delay == 0) rd.fail(node, "slow fault needs extra_delay");
  if (ft.spec.kind == FaultSpec::Kind::byzantine) {
    if (!node["script"]) rd.fail(node, "byzantine fault needs a script");
    auto script = sim::parse_script(rd.str(node["script"], "script"));
    if (!script) rd.fail(node["script"], "unknown byzantine script");
    ft.spec.script = *script;
  }
  if (node["probability"]) ft.spec.probability = rd.fraction(node["probability"], "probability");
  if (node["limit"]) ft.spec.limit = rd.u64(node["limit"], "limit");
  return ft;
}

void read_assertions(const Reader& rd, const YAML::Node& node, Assertions& a) {
  rd.expect_map(node, "assert");
  rd.check_keys(node,
                {"oracle", "liveness", "single_ack", "window_bound", "all_ops_complete", "fast_fraction_min",
                 "view_changes_min", "prepares_max", "client_messages_max"},
                "assert");
  each(node, [&](const std::string& key, const YAML::Node& v) {
    if (key == "oracle") a.oracle = rd.boolean(v, key);
    if (key == "liveness") a.oracle_options.check_liveness = rd.tristate(v, key);
    if (key == "single_ack") a.oracle_options.check_single_ack = rd.tristate(v, key);
    if (key == "window_bound") a.oracle_options.check_window = rd.boolean(v, key);
    if (key == "all_ops_complete") a.all_ops_complete = rd.boolean(v, key);
    if (key == "fast_fraction_min") a.fast_fraction_min = rd.fraction(v, key);
    if (key == "view_changes_min") a.view_changes_min = rd.u64(v, key);
    if (key == "prepares_max") a.prepares_max = rd.u64(v, key);
    if (key == "client_messages_max") a.client_messages_max = rd.u32(v, key);
  });
}

void read_output(const Reader& rd, const YAML::Node& node, Scenario& s) {
  rd.expect_map(node, "output");
  rd.check_keys(node, {"csv", "trace"}, "output");
  if (node["csv"]) s.output_csv = rd.str(node["csv"], "output.csv");
  if (node["trace"]) s.output_trace = rd.str(node["trace"], "output.trace");
}

}  // namespace

ScenarioError::ScenarioError(const std::string& message, std::string origin, int line, int column, std::string excerpt)
    : std::runtime_error(locate(message, origin, line, column, excerpt)),
      origin_(std::move(origin)),
      line_(line),
      column_(column) {}

std::vector<ReplicaId> ReplicaSelector::resolve(const ClusterParams& params) const {
  std::vector<ReplicaId> out;
  auto range = [&](std::uint32_t from, std::uint32_t count) {
    for (std::uint32_t i = 0; i < count; ++i) out.push_back(from + i);
  };
  switch (kind) {
    case Kind::list: return ids;
    case Kind::primary: out.push_back(primary_of(0, params)); break;
    case Kind::first_f: range(1, params.f); break;
    case Kind::last_f: range(params.n - params.f + 1, params.f); break;
    case Kind::last_c: range(params.n - params.c + 1, params.c); break;
    case Kind::last_c_plus_1: range(params.n - params.c, params.c + 1); break;
  }
  return out;
}

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  Reader rd(origin, text);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    rd.fail(e.mark, e.msg);
  }
  if (!root.IsMap()) throw ScenarioError("scenario must be a mapping", origin, 1, 1);
  rd.check_keys(root,
                {"version", "id", "description", "cluster", "variant", "sim", "protocol", "client", "workload",
                 "faults", "assert", "output"},
                "scenario");

  Scenario s;
  s.origin = origin;
  if (!root["version"]) rd.fail(root, "missing 'version'");
  s.version = static_cast<int>(rd.u32(root["version"], "version"));
  if (s.version != kScenarioVersion) {
    rd.fail(root["version"], fmt::format("unsupported scenario version {} (expected {})", s.version, kScenarioVersion));
  }
  if (!root["id"]) rd.fail(root, "missing 'id'");
  s.id = rd.str(root["id"], "id");
  if (!std::regex_match(s.id, std::regex("[A-Za-z0-9_.-]+"))) rd.fail(root["id"], "id must match [A-Za-z0-9_.-]+");
  if (root["description"]) s.description = rd.str(root["description"], "description");

  if (root["cluster"]) read_cluster(rd, root["cluster"], s.config);
  if (root["sim"]) read_sim(rd, root["sim"], s.config);
  if (root["protocol"]) read_protocol(rd, root["protocol"], s.config.protocol);
  if (root["client"]) read_client(rd, root["client"], s.config.client);
  if (root["workload"]) read_workload(rd, root["workload"], s.config);
  if (root["variant"]) {
    auto v = parse_variant(rd.str(root["variant"], "variant"));
    if (!v) rd.fail(root["variant"], "unknown variant");
    s.variant = *v;
  }
  if (root["faults"]) {
    const auto& faults = root["faults"];
    if (!faults.IsSequence()) rd.fail(faults, "faults must be a list");
    for (const auto& f : faults) s.faults.push_back(read_fault(rd, f));
  }
  if (root["assert"]) read_assertions(rd, root["assert"], s.assertions);
  if (root["output"]) read_output(rd, root["output"], s);

  try {
    instantiate(s, default_point(s));
  } catch (const ScenarioError& e) {
    const auto& where = root["faults"] ? root["faults"] : root["cluster"] ? root["cluster"] : root;
    rd.fail(where, e.what());
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot open scenario file", path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.string());
}

RunPoint default_point(const Scenario& s) {
  return RunPoint{s.config.seed, s.config.f, s.config.c, s.variant};
}

RunPoint with_cluster_size(RunPoint p, std::uint32_t n) {
  std::uint32_t base = 2 * p.c + 1;
  if (n < base + 3 || (n - base) % 3 != 0) {
    throw ScenarioError(fmt::format("n={} is not 3f+2c+1 for c={} and some f >= 1", n, p.c));
  }
  p.f = (n - base) / 3;
  return p;
}

sim::SimConfig instantiate(const Scenario& s, const RunPoint& p) {
  sim::SimConfig cfg = s.config;
  cfg.seed = p.seed;
  cfg.f = p.f;
  cfg.c = p.c;
  apply_variant(cfg.protocol, p.variant);
  ClusterParams params;
  try {
    params = derive_cluster(p.f, p.c, static_cast<std::int64_t>(cfg.window));
  } catch (const std::exception& e) {
    throw ScenarioError(fmt::format("invalid cluster: {}", e.what()));
  }
  cfg.faults.clear();
  for (const auto& ft : s.faults) {
    for (ReplicaId r : ft.replicas.resolve(params)) {
      auto spec = ft.spec;
      spec.replica = r;
      cfg.faults.push_back(spec);
    }
  }
  if (cfg.strict) {
    try {
      sim::validate_plan(cfg);
    } catch (const sim::PlanViolation& e) {
      throw ScenarioError(fmt::format("fault plan outside the model at n={}: {}", params.n, e.what()));
    }
  }
  return cfg;
}

// --- metrics ----------------------------------------------------------------

namespace {

const char* const kBaseColumns[] = {
    "scenario", "variant", "seed", "n", "f", "c", "passed", "committed_blocks", "ops", "failed_ops",
    "latency_mean", "latency_median", "latency_p99", "messages_per_block", "bytes_per_block", "view_changes",
    "fast_fraction", "prepares", "client_messages_mean", "client_messages_max", "trace_hash",
};

std::string real(double v) { return fmt::format("{:.3f}", v); }

}  // namespace

std::vector<std::string> csv_columns() {
  std::vector<std::string> cols(std::begin(kBaseColumns), std::end(kBaseColumns));
  for (std::size_t t = 0; t < kMessageTypeCount; ++t) cols.push_back(fmt::format("per_block_{}", message_type_name(t)));
  return cols;
}

void write_csv_header(std::ostream& out) {
  auto cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

void write_csv_row(const MetricsRow& row, std::ostream& out) {
  const auto& s = row.summary;
  const auto& m = row.messages;
  std::vector<std::string> cells = {
      row.scenario,
      row.variant,
      std::to_string(row.seed),
      std::to_string(row.n),
      std::to_string(row.f),
      std::to_string(row.c),
      row.passed ? "1" : "0",
      std::to_string(s.committed_blocks),
      std::to_string(s.ops),
      std::to_string(s.failed_ops),
      real(s.latency_mean),
      real(s.latency_median),
      real(s.latency_p99),
      real(m.messages_per_block()),
      real(m.bytes_per_block()),
      std::to_string(s.view_changes),
      real(s.fast_fraction),
      std::to_string(s.prepares),
      real(s.client_messages_mean),
      std::to_string(s.client_messages_max),
      row.trace_hash,
  };
  for (std::size_t t = 0; t < kMessageTypeCount; ++t) {
    auto it = m.count_by_type.find(message_type_name(t));
    double count = it == m.count_by_type.end() ? 0.0 : static_cast<double>(it->second);
    cells.push_back(real(m.committed_blocks ? count / static_cast<double>(m.committed_blocks) : 0.0));
  }
  for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
  out << '\n';
}

RunResult run_point(const Scenario& s, const RunPoint& p) {
  auto cfg = instantiate(s, p);
  RunResult out;
  {
    sim::Simulation simulation(cfg);
    out.trace = simulation.run();
  }
  const auto& a = s.assertions;
  auto& row = out.row;
  row.scenario = s.id;
  row.variant = variant_name(p.variant);
  row.seed = p.seed;
  row.n = out.trace.meta.n;
  row.f = p.f;
  row.c = p.c;
  row.summary = sim::summarize(out.trace);
  row.messages = sim::message_stats(out.trace);
  row.trace_hash = to_hex(out.trace.hash());

  if (a.oracle) {
    out.oracle = sim::oracle_check(out.trace, a.oracle_options);
    for (const auto& v : out.oracle.violations) {
      out.failures.push_back(fmt::format("oracle {} at record {}: {}", v.property, v.index, v.detail));
    }
  }
  const auto& sum = row.summary;
  if (a.all_ops_complete && sum.ops != out.trace.meta.expected_ops) {
    out.failures.push_back(fmt::format("completed {} of {} ops", sum.ops, out.trace.meta.expected_ops));
  }
  if (a.fast_fraction_min && sum.fast_fraction < *a.fast_fraction_min) {
    out.failures.push_back(fmt::format("fast_fraction {:.3f} < {:.3f}", sum.fast_fraction, *a.fast_fraction_min));
  }
  if (a.view_changes_min && sum.view_changes < *a.view_changes_min) {
    out.failures.push_back(fmt::format("view_changes {} < {}", sum.view_changes, *a.view_changes_min));
  }
  if (a.prepares_max && sum.prepares > *a.prepares_max) {
    out.failures.push_back(fmt::format("prepares {} > {}", sum.prepares, *a.prepares_max));
  }
  if (a.client_messages_max && sum.client_messages_max > *a.client_messages_max) {
    out.failures.push_back(
        fmt::format("client received {} messages for one op > {}", sum.client_messages_max, *a.client_messages_max));
  }
  row.passed = out.failures.empty();
  return out;
}

// --- sweeps -----------------------------------------------------------------

std::vector<RunPoint> SweepPlan::points(const Scenario& s) const {
  auto base = default_point(s);
  std::vector<ProtocolVariant> vs = variants.empty() ? std::vector<ProtocolVariant>{base.variant} : variants;
  std::vector<std::uint64_t> ss = seeds.empty() ? std::vector<std::uint64_t>{base.seed} : seeds;
  std::vector<RunPoint> out;
  for (auto v : vs) {
    std::vector<RunPoint> clusters;
    if (sizes.empty()) {
      clusters.push_back(base);
    } else {
      for (auto n : sizes) clusters.push_back(with_cluster_size(base, n));
    }
    for (auto cl : clusters) {
      for (auto seed : ss) {
        RunPoint p = cl;
        p.variant = v;
        p.seed = seed;
        out.push_back(p);
      }
    }
  }
  return out;
}

void add_sweep_axis(SweepPlan& plan, const std::string& spec) {
  auto eq = spec.find('=');
  if (eq == std::string::npos) throw ScenarioError(fmt::format("sweep axis '{}' is not key=values", spec));
  auto key = spec.substr(0, eq);
  auto values = spec.substr(eq + 1);
  auto number = [&](const std::string& text) {
    std::uint64_t v = 0;
    auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc{} || end != text.data() + text.size()) {
      throw ScenarioError(fmt::format("sweep axis '{}': '{}' is not a non-negative integer", spec, text));
    }
    return v;
  };
  std::vector<std::string> items;
  std::stringstream ss(values);
  for (std::string item; std::getline(ss, item, ',');) items.push_back(item);
  if (items.empty()) throw ScenarioError(fmt::format("sweep axis '{}' has no values", spec));

  if (key == "n") {
    for (const auto& i : items) plan.sizes.push_back(static_cast<std::uint32_t>(number(i)));
  } else if (key == "seeds" || key == "seed") {
    for (const auto& i : items) {
      auto dots = i.find("..");
      if (dots == std::string::npos) {
        plan.seeds.push_back(number(i));
        continue;
      }
      auto lo = number(i.substr(0, dots)), hi = number(i.substr(dots + 2));
      if (hi < lo) throw ScenarioError(fmt::format("sweep axis '{}': empty range", spec));
      for (auto s = lo; s <= hi; ++s) plan.seeds.push_back(s);
    }
  } else if (key == "variant" || key == "variants") {
    for (const auto& i : items) {
      auto v = parse_variant(i);
      if (!v) throw ScenarioError(fmt::format("sweep axis '{}': unknown variant '{}'", spec, i));
      plan.variants.push_back(*v);
    }
  } else {
    throw ScenarioError(fmt::format("unknown sweep axis '{}' (use n, seeds or variant)", key));
  }
}

std::size_t run_sweep(const Scenario& s, const std::vector<RunPoint>& points, const SweepOptions& options,
                      const std::function<void(const RunPoint&, RunResult&)>& on_result) {
  struct Slot {
    std::optional<RunResult> result;
    std::exception_ptr error;
    bool done = false;
  };
  std::vector<Slot> slots(points.size());
  std::mutex mu;
  std::condition_variable ready;
  std::size_t next = 0;
  bool stopped = false;

  auto stop_requested = [&] { return options.stop && options.stop->load(); };
  auto worker = [&] {
    for (;;) {
      std::size_t index;
      {
        std::lock_guard lock(mu);
        if (stopped || next >= points.size()) return;
        if (stop_requested()) {
          stopped = true;
          ready.notify_all();
          return;
        }
        index = next++;
      }
      Slot local;
      try {
        local.result = run_point(s, points[index]);
        if (!options.keep_traces) local.result->trace.records = {};
      } catch (...) {
        local.error = std::current_exception();
      }
      local.done = true;
      std::lock_guard lock(mu);
      slots[index] = std::move(local);
      ready.notify_all();
    }
  };

  unsigned jobs = std::max(1u, std::min<unsigned>(options.jobs, static_cast<unsigned>(points.size())));
  if (jobs == 1) {
    std::size_t done = 0;
    for (; done < points.size() && !stop_requested(); ++done) {
      auto result = run_point(s, points[done]);
      if (!options.keep_traces) result.trace.records = {};
      on_result(points[done], result);
    }
    return done;
  }
  std::vector<std::thread> threads;
  for (unsigned j = 0; j < jobs; ++j) threads.emplace_back(worker);

  std::size_t emitted = 0;
  std::exception_ptr first_error;
  for (; emitted < points.size(); ++emitted) {
    std::unique_lock lock(mu);
    ready.wait(lock, [&] { return slots[emitted].done || (stopped && emitted >= next); });
    if (!slots[emitted].done) break;
    Slot slot = std::move(slots[emitted]);
    lock.unlock();
    if (slot.error) {
      first_error = slot.error;
      std::lock_guard stop_lock(mu);
      stopped = true;
      break;
    }
    on_result(points[emitted], *slot.result);
  }
  {
    std::lock_guard lock(mu);
    stopped = true;
  }
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return emitted;
}

// --- replay -----------------------------------------------------------------

namespace {

std::string endpoint(const Endpoint& e) { return fmt::format("{}{}", e.is_replica() ? 'r' : 'c', e.id); }

bool touches(const TraceRecord& r, const Endpoint& e) { return r.node == e || (r.msg_type != sim::kNoMessage && r.peer == e); }

}  // namespace

std::optional<TraceKind> parse_trace_kind(std::string_view name) {
  for (auto k : {TraceKind::send, TraceKind::deliver, TraceKind::drop, TraceKind::timer, TraceKind::event,
                 TraceKind::fault}) {
    if (name == sim::trace_kind_name(k)) return k;
  }
  return std::nullopt;
}

bool ReplayFilter::matches(const TraceRecord& r) const {
  if (kind && r.kind != *kind) return false;
  if (replica && !touches(r, Endpoint::replica(*replica))) return false;
  if (client) {
    bool mine = touches(r, Endpoint::client(*client)) || (r.kind == TraceKind::event && r.event.client == *client &&
                                                          r.event.kind == NodeEventKind::executed_op);
    if (!mine) return false;
  }
  if (seq) {
    Seq s = r.kind == TraceKind::event ? r.event.seq : r.seq;
    if (r.kind == TraceKind::fault || s != *seq) return false;
  }
  return true;
}

void print_trace(const sim::Trace& trace, const ReplayFilter& filter, std::ostream& out) {
  const auto& m = trace.meta;
  out << fmt::format("# n={} f={} c={} window={} seed={} mode={} variant={} records={} end={} finished={}\n", m.n,
                     m.f, m.c, m.window, m.seed, sim::mode_name(m.mode), m.variant, trace.records.size(), m.end_time,
                     m.finished ? "yes" : "no");
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const auto& r = trace.records[i];
    if (!filter.matches(r)) continue;
    std::string line = fmt::format("{:>7} {:>12} {:<7} {:<4}", i, r.time, sim::trace_kind_name(r.kind), endpoint(r.node));
    switch (r.kind) {
      case TraceKind::send:
      case TraceKind::deliver:
      case TraceKind::drop:
        line += fmt::format(" {} {:<4} {:<20} seq={} view={}", r.kind == TraceKind::deliver ? "<-" : "->",
                            endpoint(r.peer), r.msg_type == sim::kNoMessage ? "-" : message_type_name(r.msg_type),
                            r.seq, r.view);
        if (r.kind == TraceKind::send) line += fmt::format(" bytes={}", r.bytes);
        break;
      case TraceKind::timer:
        line += fmt::format(" {} seq={} view={}", timer_kind_name(r.timer), r.seq, r.view);
        break;
      case TraceKind::event: {
        const auto& e = r.event;
        line += fmt::format(" {} seq={} view={}", node_event_name(e.kind), e.seq, e.view);
        switch (e.kind) {
          case NodeEventKind::commit:
            line += fmt::format(" path={} hash={}", commit_path_name(static_cast<CommitPath>(e.path)),
                                to_hex(e.hash).substr(0, 16));
            break;
          case NodeEventKind::executed_op:
            line += fmt::format(" client={} ts={} pos={}{}", e.client, e.timestamp, e.position,
                                e.path ? " duplicate" : "");
            break;
          case NodeEventKind::completed:
            line += fmt::format(" client={} ts={} messages={} latency={}", e.client, e.timestamp, e.position,
                                e.latency);
            break;
          case NodeEventKind::client_failed: line += fmt::format(" client={} ts={}", e.client, e.timestamp); break;
          case NodeEventKind::rejected:
            line += fmt::format(" reason={}", reject_reason_name(static_cast<RejectReason>(e.path)));
            break;
          default: break;
        }
        break;
      }
      case TraceKind::fault: {
        auto kind = static_cast<FaultSpec::Kind>(r.event.path);
        line += fmt::format(" {}{}", sim::fault_kind_name(kind), r.event.position ? " recover" : "");
        if (kind == FaultSpec::Kind::byzantine) {
          line += fmt::format(" {}", sim::script_name(static_cast<ByzantineScript>(r.view)));
        }
        break;
      }
    }
    out << line << '\n';
  }
}

}  // namespace tsbft::harness
