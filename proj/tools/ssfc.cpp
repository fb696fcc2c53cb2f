// ssfc: order calculator, permutation tracer and controller experiment runner.

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ssfc/experiments.hpp"
#include "ssfc/fcc_http.hpp"
#include "ssfc/scenario.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

struct Address {
  std::string host = "127.0.0.1";
  int port = 8080;
};

// Accepts "host:port", ":port" or "port".
Address parse_address(const std::string& text) {
  Address a;
  const auto colon = text.rfind(':');
  std::string port = text;
  if (colon != std::string::npos) {
    if (colon > 0) a.host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    a.port = std::stoi(port, &used);
    if (used != port.size() || a.port < 0 || a.port > 65535) throw std::invalid_argument(port);
  } catch (const std::exception&) {
    throw ssfc::Error(ssfc::ErrorCode::invalid_argument, "bad address '" + text + "', expected host:port");
  }
  return a;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("ssfc");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("SSFC_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to "off"
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
    else spdlog::warn("SSFC_LOG: unknown level '{}', keeping 'warn'", env);
  }
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ssfc::Error(ssfc::ErrorCode::invalid_argument, "cannot write " + path.string());
  out << content;
}

int cmd_table1(const std::string& path, bool sorted) {
  const auto sc = ssfc::load_scenario(path);
  std::cout << ssfc::render_order_table(ssfc::order_table(sc), sorted);
  return 0;
}

int cmd_trace(const std::string& path, bool legacy) {
  const auto sc = ssfc::load_scenario(path);
  if (sc.topology.function_count() == 0)
    throw ssfc::ScenarioError({sc.source.string() + ": topology attaches no functions"});
  const auto checks = ssfc::trace_orders(sc.topology, legacy ? ssfc::ReconfigMode::legacy : ssfc::ReconfigMode::epoch_counter);
  std::cout << ssfc::render_trace_matrix(checks);
  for (const auto& c : checks)
    if (!c.pass) return 1;
  return 0;
}

struct RunArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  bool realtime = false;
  std::string serve;
  std::string out_dir;
  std::string static_dir;
  bool keep_serving = false;
};

int cmd_run(const RunArgs& args) {
  const auto sc = ssfc::load_scenario(args.scenario);
  std::unique_ptr<ssfc::FccServer> server;

  ssfc::RunOptions opt;
  opt.seed = args.seed;
  opt.realtime = args.realtime;
  opt.on_event = [](const std::string& line) { spdlog::debug("{}", line); };
  if (!args.serve.empty()) {
    const auto addr = parse_address(args.serve);
    opt.on_controller = [&, addr](ssfc::FccController& controller) {
      server = std::make_unique<ssfc::FccServer>(controller, args.static_dir);
      const int port = server->start(addr.host, addr.port);
      spdlog::info("FCC API listening on http://{}:{}/api/status", addr.host, port);
      std::cerr << "listening on " << addr.host << ":" << port << "\n";
    };
  }
  if (args.keep_serving) {
    opt.keep_running = [] { return !g_stop.load(); };
    opt.stop = [] { return g_stop.load(); };
  }

  const auto art = ssfc::run_scenario(sc, opt);
  if (server) server->stop();

  if (!args.out_dir.empty()) {
    const std::filesystem::path dir(args.out_dir);
    std::filesystem::create_directories(dir);
    std::string log;
    for (const auto& line : art.event_log) log += line + "\n";
    write_file(dir / "events.log", log);
    write_file(dir / "timeline.csv", ssfc::timeline_csv(art.timeline));
    write_file(dir / "summary.json", art.summary.dump(2) + "\n");
    write_file(dir / "probes.trace", art.trace_log);
    spdlog::info("wrote events.log, timeline.csv, summary.json, probes.trace to {}", dir.string());
  }
  for (const auto& line : art.event_log) std::cout << line << "\n";
  std::cout << art.summary.dump(2) << "\n";
  return art.probe_mismatches == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Security service function chain ordering toolkit"};
  app.require_subcommand(1);

  std::string table_path;
  bool sorted = false;
  auto* table1 = app.add_subcommand("table1", "Rank every chain order of a scenario by total instance count");
  table1->add_option("scenario", table_path, "Scenario file or directory")->required();
  table1->add_flag("--sorted", sorted, "List rows by rank instead of declaration order");

  std::string trace_path;
  bool legacy = false;
  auto* trace = app.add_subcommand("trace", "Install and probe every permutation of the topology");
  trace->add_option("scenario", trace_path, "Scenario file or directory")->required();
  trace->add_flag("--legacy", legacy, "Use epoch-agnostic flow rules");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run an attack scenario against the controller");
  run->add_option("scenario", run_args.scenario, "Scenario file or directory")->required();
  run->add_option("--seed", run_args.seed, "Override the scenario seed");
  run->add_flag("--realtime", run_args.realtime, "Pace ticks with the wall clock");
  run->add_option("--serve", run_args.serve, "Expose the controller API on host:port while running");
  run->add_option("--out", run_args.out_dir, "Write events.log, timeline.csv, summary.json and probes.trace here");
  run->add_option("--static", run_args.static_dir, "Directory served at / next to the API");

  RunArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run a scenario in real time behind the controller API until interrupted");
  serve->add_option("scenario", serve_args.scenario, "Scenario file or directory")->required();
  serve->add_option("--addr", serve_args.serve, "host:port to listen on")->required();
  serve->add_option("--seed", serve_args.seed, "Override the scenario seed");
  serve->add_option("--static", serve_args.static_dir, "Directory served at / next to the API");
  serve->add_option("--out", serve_args.out_dir, "Write run artifacts here on exit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*table1) return cmd_table1(table_path, sorted);
    if (*trace) return cmd_trace(trace_path, legacy);
    if (*run) return cmd_run(run_args);
    if (*serve) {
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      serve_args.realtime = true;
      serve_args.keep_serving = true;
      return cmd_run(serve_args);
    }
  } catch (const ssfc::ScenarioError& e) {
    for (const auto& d : e.diagnostics()) std::cerr << d << "\n";
    return 2;
  } catch (const ssfc::Error& e) {
    std::cerr << "error: " << ssfc::to_string(e.code()) << ": " << e.what() << "\n";
    return e.code() == ssfc::ErrorCode::scenario_invalid ? 2 : 1;
  }
  return 1;
}
