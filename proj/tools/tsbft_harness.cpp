// Command-line front-end: run and sweep scenarios, replay traces.
//
// Log verbosity comes from TSBFT_LOG (trace, debug, info, warn, error, off).

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "tsbft/harness.hpp"

namespace fs = std::filesystem;
using namespace tsbft;
using namespace tsbft::harness;

namespace {

constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("tsbft");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("TSBFT_LOG")) {
    auto level = spdlog::level::from_str(env);
    if (level == spdlog::level::off && std::string_view(env) != "off") {
      spdlog::warn("TSBFT_LOG={} is not a level; keeping warn", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ScenarioError("cannot write " + path.string());
  return out;
}

void report(const RunResult& r) {
  for (const auto& f : r.failures) spdlog::error("{} seed={} n={}: {}", r.row.scenario, r.row.seed, r.row.n, f);
}

struct RunArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string variant;
  std::string out_dir;
  std::string trace_path;
};

int cmd_run(const RunArgs& args) {
  auto s = load_scenario(args.scenario);
  auto point = default_point(s);
  if (args.seed) point.seed = *args.seed;
  if (!args.variant.empty()) {
    auto v = parse_variant(args.variant);
    if (!v) throw ScenarioError("unknown variant '" + args.variant + "'");
    point.variant = *v;
  }
  spdlog::info("run {} seed={} variant={}", s.id, point.seed, variant_name(point.variant));
  auto result = run_point(s, point);
  spdlog::info("{} records, {} blocks, {} ops", result.trace.records.size(), result.row.summary.committed_blocks,
               result.row.summary.ops);

  write_csv_header(std::cout);
  write_csv_row(result.row, std::cout);
  if (!args.out_dir.empty()) {
    fs::path dir(args.out_dir);
    auto csv = open_output(dir / (s.output_csv.empty() ? s.id + ".csv" : s.output_csv));
    write_csv_header(csv);
    write_csv_row(result.row, csv);
    if (!s.output_trace.empty()) {
      auto out = open_output(dir / s.output_trace);
      sim::write_ndjson(result.trace, out);
    }
  }
  if (!args.trace_path.empty()) {
    auto out = open_output(args.trace_path);
    sim::write_ndjson(result.trace, out);
  }
  report(result);
  return result.ok() ? 0 : kExitFailed;
}

struct SweepArgs {
  std::string scenario;
  std::vector<std::string> vary;
  unsigned jobs = 1;
  std::string csv_path;
};

int cmd_sweep(const SweepArgs& args) {
  auto s = load_scenario(args.scenario);
  SweepPlan plan;
  for (const auto& axis : args.vary) add_sweep_axis(plan, axis);
  auto points = plan.points(s);
  // Resolve every point first so a bad size fails before any run.
  for (const auto& p : points) instantiate(s, p);

  std::ofstream file;
  if (!args.csv_path.empty()) file = open_output(args.csv_path);
  auto emit_header = [&](std::ostream& o) {
    write_csv_header(o);
    o.flush();
  };
  emit_header(std::cout);
  if (file.is_open()) emit_header(file);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::size_t failed = 0;
  SweepOptions options;
  options.jobs = args.jobs;
  options.stop = &g_stop;
  auto done = run_sweep(s, points, options, [&](const RunPoint&, RunResult& r) {
    write_csv_row(r.row, std::cout);
    std::cout.flush();
    if (file.is_open()) {
      write_csv_row(r.row, file);
      file.flush();
    }
    if (!r.ok()) ++failed;
    report(r);
  });
  if (done < points.size()) {
    spdlog::warn("sweep interrupted after {} of {} runs", done, points.size());
    return kExitFailed;
  }
  spdlog::info("{} runs, {} failed", done, failed);
  return failed ? kExitFailed : 0;
}

struct ReplayArgs {
  std::string trace;
  std::optional<ReplicaId> replica;
  std::optional<ClientId> client;
  std::optional<Seq> seq;
  std::string kind;
  bool ndjson = false;
};

int cmd_replay(const ReplayArgs& args) {
  std::ifstream in(args.trace, std::ios::binary);
  if (!in) throw ScenarioError("cannot open trace " + args.trace);
  sim::Trace trace;
  try {
    trace = sim::read_ndjson(in);
  } catch (const std::exception& e) {
    throw ScenarioError(e.what(), args.trace);
  }
  if (args.ndjson) {
    sim::write_ndjson(trace, std::cout);
    return 0;
  }
  ReplayFilter filter;
  filter.replica = args.replica;
  filter.client = args.client;
  filter.seq = args.seq;
  if (!args.kind.empty()) {
    filter.kind = parse_trace_kind(args.kind);
    if (!filter.kind) throw ScenarioError("unknown record kind '" + args.kind + "'");
  }
  print_trace(trace, filter, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Scenario runner for the replication simulator"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run one scenario and print its metrics row");
  run_cmd->add_option("scenario", run.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", run.seed, "Override the scenario seed");
  run_cmd->add_option("--variant", run.variant, "Protocol variant (pbft_all_to_all, linear_pbft, fast_path, exec_collector, redundant_c)");
  run_cmd->add_option("--out", run.out_dir, "Directory for the CSV and trace outputs");
  run_cmd->add_option("--trace", run.trace_path, "Write the NDJSON trace here");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a scenario over cluster sizes, seeds or variants");
  sweep_cmd->add_option("scenario", sweep.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--vary", sweep.vary, "Axis: n=4,13,25 | seeds=1..100 | variant=a,b (repeatable)")
      ->required();
  sweep_cmd->add_option("--jobs,-j", sweep.jobs, "Parallel runs")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--csv", sweep.csv_path, "Also write rows to this file");

  ReplayArgs replay;
  auto* replay_cmd = app.add_subcommand("replay", "Pretty-print a recorded trace");
  replay_cmd->add_option("trace", replay.trace, "NDJSON trace")->required();
  replay_cmd->add_option("--replica", replay.replica, "Only records involving this replica");
  replay_cmd->add_option("--client", replay.client, "Only records involving this client");
  replay_cmd->add_option("--seq", replay.seq, "Only records for this sequence number");
  replay_cmd->add_option("--kind", replay.kind, "Only send, deliver, drop, timer, event or fault records");
  replay_cmd->add_flag("--ndjson", replay.ndjson, "Re-emit the trace as NDJSON instead");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return cmd_run(run);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep);
    if (replay_cmd->parsed()) return cmd_replay(replay);
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailed;
  }
  return 0;
}
