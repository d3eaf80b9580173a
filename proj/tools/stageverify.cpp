#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "stageverify/angle.hpp"
#include "stageverify/canonical_json.hpp"
#include "stageverify/live.hpp"
#include "stageverify/plan.hpp"
#include "stageverify/replay.hpp"
#include "stageverify/session.hpp"
#include "stageverify/simulate.hpp"

using namespace sv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

enum Exit : int { kOk = 0, kErrors = 1, kInvalid = 2, kRuntime = 3 };

// invalid input and runtime failure are told apart by exception type
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot read {}", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  if (path == "-") {
    std::cout << bytes << std::flush;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << bytes)) throw RuntimeFailure(fmt::format("cannot write {}", path));
}

json read_json(const std::string& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw InputError(fmt::format("{}: not valid JSON", path));
  return j;
}

AssemblyPlan plan_arg(const std::string& path) {
  AssemblyPlan plan = path == "builtin" ? builtin_hdd_plan() : load_plan(path);
  auto diags = validate_plan(plan);
  if (!diags.empty()) {
    std::string msg = fmt::format("{}: {} plan diagnostics", path, diags.size());
    for (const auto& d : diags)
      msg += fmt::format("\n  {}: {}: {}", d.stage_id, to_string(d.rule), d.message);
    throw InputError(msg);
  }
  return plan;
}

struct LoadedConfig {
  ThresholdConfig cfg;
  std::shared_ptr<const WindowClassifier> classifier;
};

LoadedConfig config_arg(const std::string& path) {
  LoadedConfig out;
  out.classifier = default_classifier();
  if (path.empty()) return out;
  const json j = read_json(path);
  out.cfg = config_from_json(j);
  if (auto t = j.find("templates"); t != j.end()) {
    if (!t->is_string()) throw InputError("'templates' must be a path");
    fs::path tp = t->get<std::string>();
    if (tp.is_relative()) tp = fs::path(path).parent_path() / tp;
    out.classifier = std::make_shared<const TemplateClassifier>(load_templates(tp.string()));
  }
  return out;
}

std::string config_defaults() {
  std::string s = "Config defaults (override any subset in a JSON file; \"templates\" names a "
                  "template set file):\n";
  const json defaults = to_json(ThresholdConfig{});
  for (const auto& [k, v] : defaults.items())
    s += fmt::format("  {} = {}\n", k, v.dump());
  return s;
}

int cmd_verify(const std::string& plan_path, const std::string& replay_path,
               const std::string& config_path, std::string report_path,
               const std::string& events_path, bool strict) {
  const auto plan = plan_arg(plan_path);
  const auto cfg = config_arg(config_path);
  const auto run = run_replay(read_file(replay_path), plan, cfg.cfg, cfg.classifier);
  const auto& r = run.report;

  if (report_path.empty()) report_path = replay_path + ".report.json";
  write_file(report_path, report_bytes(r));
  if (!events_path.empty()) {
    std::string lines;
    for (const auto& e : run.log) lines += canonical_dump(to_json(e)) + "\n";
    write_file(events_path, lines);
  }

  fmt::print("{}/{} stages, {} errors, {:.1f} s ({})\n", r.stages_completed, r.stages.size(),
             r.error_count, static_cast<double>(r.total_ms) / 1000.0, to_string(r.outcome));
  const json summary = {{"outcome", std::string(to_string(r.outcome))},
                        {"stages_completed", r.stages_completed},
                        {"stages", r.stages.size()},
                        {"error_count", r.error_count},
                        {"total_ms", r.total_ms},
                        {"session_id", r.session_id},
                        {"report", report_path}};
  fmt::print("RESULT {}\n", canonical_dump(summary));
  if (r.outcome != Outcome::Complete) return kErrors;
  if (strict && r.error_count > 0) return kErrors;
  return kOk;
}

int cmd_simulate(const std::string& plan_path, const std::string& scenario,
                 std::uint64_t seed, const std::string& out, std::optional<int> fault_stage) {
  const auto plan = plan_arg(plan_path);
  const auto sc = parse_scenario(scenario);
  SimulationOptions opts;
  opts.fault_stage = fault_stage;
  const auto sim = simulate_scenario(plan, sc, seed, opts);
  write_file(out, write_replay(sim.records));
  if (out != "-")
    fmt::print("{} records, {:.1f} s simulated -> {}\n", sim.records.size(),
               static_cast<double>(sim.truth.end_ms) / 1000.0, out);
  return kOk;
}

std::atomic<bool> g_terminate{false};
extern "C" void on_signal(int) { g_terminate = true; }

int cmd_serve(const std::string& plan_path, const std::string& listen,
              const std::string& screw_listen, const std::string& stream_listen,
              const std::string& config_path, const std::string& report_path) {
  const auto plan = plan_arg(plan_path);
  const auto cfg = config_arg(config_path);
  const auto http = parse_host_port(listen);
  const auto screw = parse_host_port(screw_listen);
  const auto stream = parse_host_port(stream_listen);

  LiveOptions opts;
  opts.http_host = http.host;
  opts.http_port = http.port;
  opts.screw_host = screw.host;
  opts.screw_port = screw.port;
  opts.stream_host = stream.host;
  opts.stream_port = stream.port;
  opts.report_path = report_path;
  opts.log = [](const std::string& line) { fmt::print(stderr, "{}\n", line); };

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  LiveSession session(plan, cfg.cfg, opts, cfg.classifier);
  try {
    session.start();
  } catch (const BindError& e) {
    throw RuntimeFailure(e.what());
  }
  fmt::print("listening http={} screw={} stream={}\n", session.http_port(),
             session.screw_port(), session.stream_port());
  std::fflush(stdout);
  while (!g_terminate) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  const auto r = session.stop();
  fmt::print("{}/{} stages, {} errors ({})\n", r.stages_completed, r.stages.size(),
             r.error_count, to_string(r.outcome));
  return kOk;
}

int cmd_plan_validate(const std::string& path) {
  const auto plan = plan_arg(path);
  fmt::print("{}: {} stages, {} holes, valid\n", plan.plan_id, plan.size(), plan.holes.size());
  return kOk;
}

int cmd_report_render(const std::string& path, const std::string& format) {
  const auto report = report_from_json(read_json(path));
  std::cout << (format == "md" ? render_markdown(report) : report_bytes(report));
  return kOk;
}

int cmd_angle_calibrate(const std::string& ref, const std::string& out, double threshold) {
  const auto img = read_pgm(ref);
  const auto desc = make_reference(img, threshold, fs::path(ref).filename().string());
  write_file(out, to_json(desc).dump(2) + "\n");
  fmt::print("theta_ref {:.2f} deg, skew {:+d} -> {}\n", desc.theta_ref_deg, desc.skew_sign,
             out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Assembly stage verification engine"};
  app.require_subcommand(1);
  app.footer(config_defaults());

  std::string plan_path = "builtin", replay_path, config_path, report_path, events_path;
  std::string scenario, out, listen = "0.0.0.0:7700", screw_listen = "0.0.0.0:7701";
  std::string stream_listen = "0.0.0.0:7702", serve_report = "stageverify-report.json";
  std::string format = "json", ref;
  std::uint64_t seed = 1;
  std::optional<int> fault_stage;
  double threshold = kDefaultBinThreshold;
  bool strict = false;
  std::function<int()> action;

  auto* verify = app.add_subcommand("verify", "Run a recorded replay through the verifier");
  verify->add_option("--plan", plan_path, "Plan JSON, or 'builtin'")->capture_default_str();
  verify->add_option("--replay", replay_path, "Replay JSONL")->required();
  verify->add_option("--config", config_path, "Threshold config JSON");
  verify->add_option("--report", report_path, "Report output (default <replay>.report.json)");
  verify->add_option("--events", events_path, "Also write the event log as JSONL");
  verify->add_flag("--strict", strict, "Exit 1 if any error was detected");
  verify->callback([&] {
    action = [&] {
      return cmd_verify(plan_path, replay_path, config_path, report_path, events_path, strict);
    };
  });

  auto* simulate = app.add_subcommand("simulate", "Generate a scripted replay");
  simulate->add_option("--plan", plan_path, "Plan JSON, or 'builtin'")->capture_default_str();
  simulate->add_option("--scenario", scenario, "happy | cheat-screw | wrong-part | skip-attempt")
      ->required();
  simulate->add_option("--seed", seed, "Random seed")->capture_default_str();
  simulate->add_option("--fault-stage", fault_stage, "Stage that receives the fault");
  simulate->add_option("--out", out, "Output replay path, or '-'")->required();
  simulate->callback([&] {
    action = [&] { return cmd_simulate(plan_path, scenario, seed, out, fault_stage); };
  });

  auto* serve = app.add_subcommand("serve", "Run a live session");
  serve->add_option("--plan", plan_path, "Plan JSON, or 'builtin'")->capture_default_str();
  serve->add_option("--listen", listen, "HTTP state/events/control endpoint")
      ->capture_default_str();
  serve->add_option("--screw-listen", screw_listen, "Screw camera link endpoint")
      ->capture_default_str();
  serve->add_option("--stream-listen", stream_listen, "Local observation stream endpoint")
      ->capture_default_str();
  serve->add_option("--config", config_path, "Threshold config JSON");
  serve->add_option("--report", serve_report, "Report written when the session ends")
      ->capture_default_str();
  serve->callback([&] {
    action = [&] {
      return cmd_serve(plan_path, listen, screw_listen, stream_listen, config_path,
                       serve_report);
    };
  });

  auto* plan_cmd = app.add_subcommand("plan", "Assembly plan tools");
  plan_cmd->require_subcommand(1);
  std::string validate_path;
  auto* validate = plan_cmd->add_subcommand("validate", "Check a plan and list every diagnostic");
  validate->add_option("path", validate_path, "Plan JSON, or 'builtin'")->required();
  validate->callback([&] { action = [&] { return cmd_plan_validate(validate_path); }; });

  auto* report_cmd = app.add_subcommand("report", "Operation report tools");
  report_cmd->require_subcommand(1);
  std::string render_path;
  auto* render = report_cmd->add_subcommand("render", "Print a report as JSON or Markdown");
  render->add_option("path", render_path, "Report JSON")->required();
  render->add_option("--format", format, "json | md")
      ->check(CLI::IsMember({"json", "md"}))
      ->capture_default_str();
  render->callback([&] { action = [&] { return cmd_report_render(render_path, format); }; });

  auto* angle_cmd = app.add_subcommand("angle", "Orientation tools");
  angle_cmd->require_subcommand(1);
  auto* calibrate =
      angle_cmd->add_subcommand("calibrate", "Record the 0-degree reference pose");
  calibrate->add_option("--ref", ref, "Reference image (binary PGM)")->required();
  calibrate->add_option("--out", out, "Reference descriptor JSON")->required();
  calibrate->add_option("--threshold", threshold, "Binarization threshold")
      ->capture_default_str();
  calibrate->callback(
      [&] { action = [&] { return cmd_angle_calibrate(ref, out, threshold); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }

  try {
    return action();
  } catch (const ReplayFormatError& e) {
    fmt::print(stderr, "error: replay {}\n", e.what());
    return kInvalid;
  } catch (const AmbiguousOrientation& e) {
    fmt::print(stderr, "error: AmbiguousOrientation: {}\n", e.what());
    return kInvalid;
  } catch (const EmptyMask& e) {
    fmt::print(stderr, "error: EmptyMask: {}\n", e.what());
    return kInvalid;
  } catch (const InputError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kInvalid;
  } catch (const ValidationError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kInvalid;
  } catch (const FeatureLengthMismatch& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kInvalid;
  } catch (const json::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kInvalid;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kRuntime;
  }
}
