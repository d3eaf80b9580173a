#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include <httplib.h>

#include "stageverify/live.hpp"
#include "stageverify/simulate.hpp"

using namespace sv;
using nlohmann::json;

namespace {

const Simulation& happy() {
  static const Simulation sim = simulate_scenario(builtin_hdd_plan(), Scenario::Happy, 1);
  return sim;
}

LiveOptions ephemeral(double speed) {
  LiveOptions o;
  o.http_host = o.screw_host = o.stream_host = "127.0.0.1";
  o.http_port = o.screw_port = o.stream_port = 0;
  o.speed = speed;
  return o;
}

json get_json(httplib::Client& c, const std::string& path) {
  auto res = c.Get(path);
  REQUIRE(res);
  REQUIRE(res->status == 200);
  return json::parse(res->body);
}

std::pair<int, json> post(httplib::Client& c, const std::string& body) {
  auto res = c.Post("/control", body, "application/json");
  REQUIRE(res);
  return {res->status, json::parse(res->body, nullptr, false)};
}

bool has_type(const std::vector<LoggedEvent>& log, std::string_view type) {
  return std::any_of(log.begin(), log.end(),
                     [&](const LoggedEvent& e) { return event_type(e.event) == type; });
}

}  // namespace

TEST_CASE("control command parsing") {
  CHECK(control_from_json({{"command", "Pause"}}).kind == ControlCommand::Kind::Pause);
  const auto ack = control_from_json({{"command", "AcknowledgeGuidance"}, {"event_id", 7}});
  CHECK(ack.kind == ControlCommand::Kind::AcknowledgeGuidance);
  CHECK(ack.event_id == 7);
  CHECK(control_from_json(to_json(ack)) == ack);
  CHECK_THROWS_AS(control_from_json({{"command", "Rewind"}}), ValidationError);
  CHECK_THROWS_AS(control_from_json({{"command", "AcknowledgeGuidance"}}), ValidationError);
  CHECK_THROWS_AS(control_from_json({{"command", "AcknowledgeGuidance"}, {"event_id", -1}}), ValidationError);
  CHECK_THROWS_AS(control_from_json({{"command", "Pause"}, {"event_id", 3}}), ValidationError);
  CHECK_THROWS_AS(control_from_json({{"command", "Pause"}, {"extra", 1}}), ValidationError);
  CHECK_THROWS_AS(control_from_json(json::array()), ValidationError);
}

TEST_CASE("pause emits nothing and resume continues") {
  LiveEngine e(builtin_hdd_plan(), {}, nullptr, "s");
  e.begin(0);
  CHECK(e.control({ControlCommand::Kind::Pause}, 0).status == 200);
  CHECK(e.control({ControlCommand::Kind::Pause}, 0).status == 200);
  for (TimeMs t = 33; t <= 30000; t += 33) CHECK(e.tick(t).empty());
  CHECK(e.state_json()["paused"] == true);
  CHECK(e.control({ControlCommand::Kind::Resume}, 30000).status == 200);
  CHECK(e.state_json()["paused"] == false);
  std::vector<LoggedEvent> ev;
  for (TimeMs t = 30000; t <= 36000 && ev.empty(); t += 33) ev = e.tick(t);
  // the null-action timer restarts from the paused clock
  REQUIRE_FALSE(ev.empty());
  CHECK(ev.front().t_ms >= 30000 + ThresholdConfig{}.null_window_ms - 33);
}

TEST_CASE("acknowledgment and end-of-session rules") {
  LiveEngine e(builtin_hdd_plan(), {}, nullptr, "s");
  e.begin(0);
  std::uint64_t guidance_id = 0;
  for (TimeMs t = 33; t <= 6000 && !guidance_id; t += 33)
    for (const auto& ev : e.tick(t))
      if (std::holds_alternative<Guidance>(ev.event)) guidance_id = ev.event_id;
  REQUIRE(guidance_id > 0);
  using K = ControlCommand::Kind;
  CHECK(e.control({K::AcknowledgeGuidance, 1}, 6000).status == 409);
  CHECK(e.control({K::AcknowledgeGuidance, 999}, 6000).status == 409);
  CHECK(e.control({K::AcknowledgeGuidance, guidance_id}, 6000).status == 200);
  CHECK(e.control({K::AcknowledgeGuidance, guidance_id}, 6100).status == 200);
  CHECK(e.acknowledgments().size() == 1);
  CHECK(e.control({K::AbortSession}, 6200).status == 200);
  CHECK(e.ended());
  CHECK(e.outcome() == Outcome::Aborted);
  CHECK(e.control({K::Resume}, 6300).status == 409);
  CHECK(e.control({K::AbortSession}, 6300).status == 409);
  const auto rep = e.report();
  CHECK(rep.outcome == Outcome::Aborted);
  CHECK(rep.acknowledgments.size() == 1);
}

TEST_CASE("meta for another plan is rejected") {
  LiveEngine e(builtin_hdd_plan(), {}, nullptr, "s");
  e.begin(0);
  CHECK_THROWS_AS(e.stream_record(0, ReplayMeta{1, "other", 33}, 0), ValidationError);
}

TEST_CASE("losing the screw camera mid-fastening reports CameraOffline in time") {
  const auto plan = builtin_hdd_plan();
  const ThresholdConfig cfg;
  const auto& recs = happy().records;
  LiveEngine e(plan, cfg, nullptr, "s");
  const TimeMs t0 = *record_time(recs[1]);
  e.begin(t0);

  std::size_t next = 0;
  bool killed = false;
  TimeMs last_holes = -1, in_screw_since = -1;
  std::optional<TimeMs> offline_at;
  for (TimeMs t = t0 + cfg.tick_ms; t < t0 + 400'000 && !offline_at; t += cfg.tick_ms) {
    for (; next < recs.size(); ++next) {
      const auto rt = record_time(recs[next]);
      if (rt && *rt > t) break;
      if (const auto* h = std::get_if<link::Holes>(&recs[next])) {
        if (!killed) {
          e.screw_holes(*h, *rt);
          last_holes = *rt;
        }
      } else {
        e.stream_record(0, recs[next], rt.value_or(t0));
      }
    }
    for (const auto& ev : e.tick(t)) {
      if (const auto* g = std::get_if<Guidance>(&ev.event); g && g->text_key == "guidance.camera_offline") {
        REQUIRE(killed);
        offline_at = ev.t_ms;
      }
    }
    const auto& st = e.orchestrator().state();
    if (!killed && st.phase == Phase::ScrewAssembly) {
      if (in_screw_since < 0) in_screw_since = t;
      if (t - in_screw_since >= 500) killed = true;
    }
  }
  REQUIRE(killed);
  REQUIRE(offline_at.has_value());
  CHECK(*offline_at - last_holes > cfg.hole_ttl_ms);
  CHECK(*offline_at - last_holes <= cfg.hole_ttl_ms + cfg.tick_ms);
  CHECK(e.orchestrator().state().phase == Phase::ScrewAssembly);
}

TEST_CASE("event hub") {
  EventHub hub;
  CHECK(hub.wait_after(0, std::chrono::milliseconds(10)).empty());
  std::jthread producer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    hub.publish({{1, 0, StageEntered{1}}, {2, 5, StageCompleted{1, 5}}});
  });
  const auto got = hub.wait_after(0, std::chrono::seconds(5));
  CHECK(got.size() == 2);
  CHECK(hub.wait_after(1, std::chrono::milliseconds(1)).size() == 1);
  hub.close();
  CHECK(hub.closed());
}

TEST_CASE("HTTP surface") {
  LiveSession s(builtin_hdd_plan(), {}, ephemeral(10.0));
  s.start();
  httplib::Client c("127.0.0.1", s.http_port());
  c.set_read_timeout(5, 0);

  auto st = get_json(c, "/state");
  CHECK(st["stage_ordinal"] == 1);
  CHECK(st["paused"] == false);
  CHECK(st["holes"].size() == 13);
  CHECK(st["holes"]["E1"] == "Unknown");

  CHECK(get_json(c, "/report")["outcome"] == "InProgress");

  // the first published event is StageEntered(1) with id 1
  std::string sse;
  auto res = c.Get("/events", [&](const char* data, std::size_t n) {
    sse.append(data, n);
    return sse.find("\n\n") == std::string::npos;
  });
  CHECK(sse.rfind("id: 1\nevent: StageEntered\ndata: ", 0) == 0);
  const auto data_at = sse.find("data: ") + 6;
  CHECK(json::parse(sse.substr(data_at, sse.find('\n', data_at) - data_at))["ordinal"] == 1);

  // with no input the null-action guidance arrives within about five seconds
  std::uint64_t guidance_id = 0;
  for (int i = 0; i < 100 && !guidance_id; ++i) {
    for (const auto& e : s.events().all())
      if (std::holds_alternative<Guidance>(e.event)) guidance_id = e.event_id;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  REQUIRE(guidance_id > 0);

  std::string resumed;
  c.Get("/events?last_event_id=1", [&](const char* data, std::size_t n) {
    resumed.append(data, n);
    return resumed.find("\n\n") == std::string::npos;
  });
  CHECK(resumed.rfind("id: 2\n", 0) == 0);

  auto [code, body] = post(c, R"({"command":"Pause"})");
  CHECK(code == 200);
  CHECK(body["paused"] == true);
  CHECK(get_json(c, "/state")["paused"] == true);
  CHECK(post(c, R"({"command":"Resume"})").first == 200);
  CHECK(get_json(c, "/state")["paused"] == false);

  CHECK(post(c, "{\"command\":\"AcknowledgeGuidance\",\"event_id\":" + std::to_string(guidance_id) + "}").first == 200);
  CHECK(post(c, R"({"command":"AcknowledgeGuidance","event_id":1})").first == 409);
  CHECK(post(c, R"({"command":"AcknowledgeGuidance","event_id":100000})").first == 409);
  CHECK(post(c, "{not json").first == 400);
  CHECK(post(c, R"({"command":"Rewind"})").first == 400);

  CHECK(post(c, R"({"command":"AbortSession"})").first == 200);
  CHECK(s.wait_ended(std::chrono::seconds(5)));
  CHECK(post(c, R"({"command":"Pause"})").first == 409);
  const auto rep = get_json(c, "/report");
  CHECK(rep["outcome"] == "Aborted");
  CHECK(rep["acknowledgments"].size() == 1);
  CHECK(s.stop().outcome == Outcome::Aborted);
}

TEST_CASE("second bind on the same port fails") {
  LiveSession a(builtin_hdd_plan(), {}, ephemeral(1.0));
  a.start();
  auto o = ephemeral(1.0);
  o.http_port = a.http_port();
  LiveSession b(builtin_hdd_plan(), {}, o);
  CHECK_THROWS_AS(b.start(), BindError);
  a.stop();
}

TEST_CASE("live happy session over TCP") {
  const double speed = 20.0;
  const auto& sim = happy();
  LiveSession* session = nullptr;
  std::atomic<bool> complete_before_report{false};
  std::atomic<int> reports{0};
  auto opts = ephemeral(speed);
  const auto path = std::filesystem::temp_directory_path() / "sv_live_report.json";
  std::filesystem::remove(path);
  opts.report_path = path.string();
  opts.on_report = [&](const OperationReport& r) {
    ++reports;
    complete_before_report = r.outcome == Outcome::Complete &&
                             has_type(session->events().all(), "AssemblyComplete") &&
                             std::filesystem::exists(path);
  };
  LiveSession s(builtin_hdd_plan(), {}, opts);
  session = &s;
  s.start();

  SteadyClock node_clock(speed);
  std::jthread camera([&](std::stop_token st) {
    auto t = tcp_connect("127.0.0.1", s.screw_port());
    run_camera_node(*t, node_clock, replay_holes_source(sim.records), {}, st);
  });
  std::jthread stream([&](std::stop_token st) {
    auto t = tcp_connect("127.0.0.1", s.stream_port());
    stream_records(*t, sim.records, node_clock, st);
  });

  // the stage ordinal advances while the session runs
  httplib::Client c("127.0.0.1", s.http_port());
  int first = get_json(c, "/state")["stage_ordinal"];
  int later = first;
  for (int i = 0; i < 200 && later == first; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    later = get_json(c, "/state")["stage_ordinal"];
  }
  CHECK(later > first);

  REQUIRE(s.wait_ended(std::chrono::seconds(60)));
  const auto rep = s.stop();
  CHECK(rep.outcome == Outcome::Complete);
  CHECK(rep.stages_completed == 21);
  CHECK(rep.error_count == 0);
  CHECK(reports == 1);
  CHECK(complete_before_report);
  const auto ids = s.events().all();
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(ids[i].event_id == i + 1);
  std::filesystem::remove(path);
}
