#include "stageverify/session.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <openssl/evp.h>

namespace sv {

using nlohmann::json;

namespace {

TimeMs snap(TimeMs t, TimeMs tick) {
  if (t <= 0) return 0;
  return (t / tick) * tick;
}

template <class Deque>
const typename Deque::value_type* newest_fresh(const Deque& q, TimeMs tick, TimeMs ttl) {
  for (auto it = q.rbegin(); it != q.rend(); ++it) {
    if (it->t_ms > tick) continue;
    return tick - it->t_ms <= ttl ? &*it : nullptr;
  }
  return nullptr;
}

}  // namespace

FusedObservation fuse_tick(const FusionBuffers& b, TimeMs now_ms, const ThresholdConfig& cfg) {
  FusedObservation obs;
  obs.tick_ms = snap(now_ms, cfg.tick_ms);
  const TimeMs tick = obs.tick_ms;

  if (const auto* f = newest_fresh(b.detections, tick, cfg.det_ttl_ms)) {
    obs.detections = *f;
    obs.stale.detections = false;
    for (const auto& d : f->detections) {
      auto it = b.depth.find(d.part);
      if (d.depth_mm && it != b.depth.end()) obs.depth_mm[d.part] = it->second;
    }
  }

  for (const auto& [source, q] : b.acf) {
    const auto* a = newest_fresh(q, tick, cfg.acf_ttl_ms);
    if (!a) continue;
    if (!obs.acf) {
      obs.acf = *a;
      continue;
    }
    for (auto act : kAllActions) obs.acf->set(act, std::max(obs.acf->get(act), a->get(act)));
    obs.acf->t_ms = std::max(obs.acf->t_ms, a->t_ms);
  }
  obs.stale.acf = !obs.acf.has_value();

  if (const auto* a = newest_fresh(b.angles, tick, cfg.angle_ttl_ms)) {
    obs.angle = *a;
    obs.stale.angle = false;
  }

  for (const auto& [id, track] : b.holes.holes)
    if (track.state != HoleState::Unknown) obs.holes.emplace(id, track.state);
  obs.stale.holes = obs.holes.empty();

  for (const auto& [index, h] : b.hands)
    if (h.t_ms <= tick && tick - h.t_ms <= cfg.acf_ttl_ms && !h.points.empty())
      obs.hand_wrists.emplace_back(h.points.front().x, h.points.front().y);
  return obs;
}

json to_json(const LoggedEvent& e) {
  json j = to_json(e.event);
  j["event_id"] = e.event_id;
  j["t_ms"] = e.t_ms;
  return j;
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Complete: return "Complete";
    case Outcome::Aborted: return "Aborted";
    case Outcome::InProgress: return "InProgress";
  }
  return "?";
}

namespace {

Outcome parse_outcome(std::string_view s) {
  for (auto o : {Outcome::Complete, Outcome::Aborted, Outcome::InProgress})
    if (to_string(o) == s) return o;
  throw ValidationError(fmt::format("unknown outcome '{}'", s));
}

bool starts_correction(ErrorKind k) {
  return k == ErrorKind::WrongPart || k == ErrorKind::WrongPlacement ||
         k == ErrorKind::WrongAngle || k == ErrorKind::ScrewNotTightened;
}

}  // namespace

OperationReport build_report(const AssemblyPlan& plan, const std::vector<LoggedEvent>& log,
                             std::string session_id, TimeMs started_ms, TimeMs ended_ms,
                             Outcome outcome, const std::vector<Acknowledgment>& acks) {
  OperationReport r;
  r.session_id = std::move(session_id);
  r.plan_id = plan.plan_id;
  r.started_ms = started_ms;
  r.ended_ms = ended_ms;
  r.total_ms = ended_ms - started_ms;
  r.outcome = outcome;
  r.acknowledgments = acks;
  for (const auto& st : plan.stages) {
    StageRecord rec;
    rec.ordinal = st.ordinal;
    rec.id = st.id;
    r.stages.push_back(std::move(rec));
  }

  auto record = [&](int ordinal) -> StageRecord& {
    return r.stages.at(static_cast<std::size_t>(ordinal - 1));
  };
  int current = 0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& ev = log[i].event;
    if (const auto* e = std::get_if<StageEntered>(&ev)) {
      current = e->ordinal;
      record(current).attempts = std::max(record(current).attempts, 1);
    } else if (const auto* c = std::get_if<StageCompleted>(&ev)) {
      auto& rec = record(c->ordinal);
      rec.completed = true;
      rec.duration_ms = c->duration_ms;
      ++r.stages_completed;
    } else if (const auto* err = std::get_if<ErrorDetected>(&ev)) {
      ReportError re{err->kind, log[i].t_ms, {}};
      if (i + 1 < log.size())
        if (const auto* g = std::get_if<Guidance>(&log[i + 1].event))
          re.guidance_key = g->text_key;
      auto& rec = record(current);
      rec.errors.push_back(std::move(re));
      if (starts_correction(err->kind)) ++rec.attempts;
      ++r.error_count;
    }
  }
  return r;
}

json to_json(const OperationReport& r) {
  json stages = json::array();
  for (const auto& s : r.stages) {
    json errors = json::array();
    for (const auto& e : s.errors)
      errors.push_back({{"kind", std::string(to_string(e.kind))},
                        {"t_ms", e.t_ms},
                        {"guidance_key", e.guidance_key}});
    stages.push_back({{"ordinal", s.ordinal},
                      {"id", s.id},
                      {"completed", s.completed},
                      {"duration_ms", s.duration_ms},
                      {"attempts", s.attempts},
                      {"errors", errors}});
  }
  json acks = json::array();
  for (const auto& a : r.acknowledgments)
    acks.push_back({{"event_id", a.event_id}, {"t_ms", a.t_ms}});
  return {{"schema", 1},
          {"session_id", r.session_id},
          {"plan_id", r.plan_id},
          {"started_ms", r.started_ms},
          {"ended_ms", r.ended_ms},
          {"outcome", std::string(to_string(r.outcome))},
          {"totals",
           {{"stages_completed", r.stages_completed},
            {"error_count", r.error_count},
            {"total_ms", r.total_ms}}},
          {"stages", stages},
          {"acknowledgments", acks}};
}

OperationReport report_from_json(const json& j) {
  try {
    if (j.at("schema").get<int>() != 1) throw ValidationError("unsupported report schema");
    OperationReport r;
    r.session_id = j.at("session_id").get<std::string>();
    r.plan_id = j.at("plan_id").get<std::string>();
    r.started_ms = j.at("started_ms").get<TimeMs>();
    r.ended_ms = j.at("ended_ms").get<TimeMs>();
    r.outcome = parse_outcome(j.at("outcome").get<std::string>());
    const auto& t = j.at("totals");
    r.stages_completed = t.at("stages_completed").get<int>();
    r.error_count = t.at("error_count").get<int>();
    r.total_ms = t.at("total_ms").get<TimeMs>();
    for (const auto& s : j.at("stages")) {
      StageRecord rec;
      rec.ordinal = s.at("ordinal").get<int>();
      rec.id = s.at("id").get<std::string>();
      rec.completed = s.at("completed").get<bool>();
      rec.duration_ms = s.at("duration_ms").get<TimeMs>();
      rec.attempts = s.at("attempts").get<int>();
      for (const auto& e : s.at("errors"))
        rec.errors.push_back({parse_error_kind(e.at("kind").get<std::string>()),
                              e.at("t_ms").get<TimeMs>(),
                              e.at("guidance_key").get<std::string>()});
      r.stages.push_back(std::move(rec));
    }
    for (const auto& a : j.at("acknowledgments"))
      r.acknowledgments.push_back(
          {a.at("event_id").get<std::uint64_t>(), a.at("t_ms").get<TimeMs>()});
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("report: {}", e.what()));
  }
}

std::string report_bytes(const OperationReport& r) { return to_json(r).dump(2) + "\n"; }

namespace {

std::string seconds(TimeMs ms) { return fmt::format("{:.1f}", static_cast<double>(ms) / 1000.0); }

}  // namespace

std::string render_markdown(const OperationReport& r) {
  std::string out;
  out += "# Operation report\n\n";
  out += fmt::format("- Session: `{}`\n", r.session_id);
  out += fmt::format("- Plan: `{}`\n", r.plan_id);
  out += fmt::format("- Outcome: {}\n", to_string(r.outcome));
  out += fmt::format("- Stages completed: {}/{}\n", r.stages_completed, r.stages.size());
  out += fmt::format("- Errors: {}\n", r.error_count);
  out += fmt::format("- Total time: {} s\n\n", seconds(r.total_ms));

  out += "| # | Stage | Status | Duration (s) | Attempts | Errors |\n";
  out += "|---|-------|--------|--------------|----------|--------|\n";
  for (const auto& s : r.stages) {
    std::string errs;
    for (const auto& e : s.errors) {
      if (!errs.empty()) errs += ", ";
      errs += to_string(e.kind);
    }
    out += fmt::format("| {} | {} | {} | {} | {} | {} |\n", s.ordinal, s.id,
                       s.completed ? "done" : (s.attempts > 0 ? "open" : "pending"),
                       s.completed ? seconds(s.duration_ms) : "-", s.attempts, errs);
  }

  if (r.error_count > 0) {
    out += "\n## Errors\n\n";
    out += "| Stage | Time (s) | Kind | Guidance |\n";
    out += "|-------|----------|------|----------|\n";
    for (const auto& s : r.stages)
      for (const auto& e : s.errors)
        out += fmt::format("| {} | {} | {} | {} |\n", s.ordinal,
                           seconds(e.t_ms - r.started_ms), to_string(e.kind), e.guidance_key);
  }
  if (!r.acknowledgments.empty()) {
    out += "\n## Acknowledged guidance\n\n";
    for (const auto& a : r.acknowledgments)
      out += fmt::format("- event {} at {} s\n", a.event_id, seconds(a.t_ms - r.started_ms));
  }
  return out;
}

Orchestrator::Orchestrator(AssemblyPlan plan, ThresholdConfig cfg,
                           std::shared_ptr<const WindowClassifier> classifier,
                           GestureConfig gesture)
    : plan_(std::move(plan)),
      cfg_(cfg),
      classifier_(classifier ? std::move(classifier) : default_classifier()),
      gesture_cfg_(std::move(gesture)) {
  validate(cfg_);
}

void Orchestrator::begin(TimeMs t_ms) {
  const TimeMs t = snap(t_ms, cfg_.tick_ms);
  auto r = start(plan_, t);
  state_ = std::move(r.state);
  started_ = true;
  started_ms_ = t;
  last_tick_ = t;
  std::vector<LoggedEvent> ignored;
  append(t, std::move(r.events), ignored);
}

void Orchestrator::ingest(const DetectionFrame& f) {
  std::map<PartClass, const Detection*> best;
  for (const auto& d : f.detections) {
    if (!d.depth_mm) continue;
    auto& slot = best[d.part];
    if (!slot || d.conf > slot->conf) slot = &d;
  }
  for (const auto& [part, d] : best) {
    auto it = depth_tracks_.try_emplace(part, cfg_.depth_window, cfg_.depth_alpha).first;
    if (auto v = it->second.push(*d->depth_mm)) buffers_.depth[part] = *v;
  }
  buffers_.detections.push_back(f);
}

void Orchestrator::ingest(const HandRecord& h) {
  if (static_cast<int>(h.points.size()) != gesture_cfg_.keypoints)
    throw FeatureLengthMismatch(fmt::format("hand has {} keypoints, expected {}",
                                            h.points.size(), gesture_cfg_.keypoints));
  buffers_.hands[h.hand_index] = h;
  auto& win = windows_.try_emplace(h.hand_index, gesture_cfg_).first->second;

  // a gap in the hand stream starts a fresh gesture
  const TimeMs gap = std::max<TimeMs>(100, 3 * cfg_.tick_ms);
  auto last = last_hand_t_.find(h.hand_index);
  if (last != last_hand_t_.end() && h.t_ms - last->second > gap) win.reset();
  last_hand_t_[h.hand_index] = h.t_ms;

  HandFrame normalized;
  try {
    normalized = normalize_hand(HandFrame{h.t_ms, h.points});
  } catch (const DegenerateHand&) {
    win.reset();
    return;
  }
  if (!win.push(normalized)) return;
  const auto done = done_heuristic(normalized, gesture_cfg_);
  auto acf = classify_window(win, *classifier_, done.is_done ? done.conf : 0.0);
  acf.t_ms = h.t_ms;
  buffers_.acf[h.hand_index].push_back(acf);
}

void Orchestrator::ingest(const ObjAngle& a) { buffers_.angles.push_back(a); }

void Orchestrator::ingest(const link::Holes& h) {
  pending_holes_.insert(pending_holes_.end(), h.reports.begin(), h.reports.end());
}

void Orchestrator::ingest(const ActionConfidence& a) {
  buffers_.acf[kDirectAcfSource].push_back(a);
}

void Orchestrator::ingest(const ReplayRecord& r) {
  std::visit(
      [this](const auto& rec) {
        if constexpr (!std::is_same_v<std::decay_t<decltype(rec)>, ReplayMeta>) ingest(rec);
      },
      r);
}

void Orchestrator::prune(TimeMs now) {
  const TimeMs horizon =
      now - std::max({cfg_.det_ttl_ms, cfg_.acf_ttl_ms, cfg_.angle_ttl_ms}) - cfg_.tick_ms;
  auto drop = [&](auto& q) {
    while (q.size() > 1 && q.front().t_ms < horizon) q.pop_front();
  };
  drop(buffers_.detections);
  drop(buffers_.angles);
  for (auto& [_, q] : buffers_.acf) drop(q);
}

void Orchestrator::append(TimeMs t, std::vector<VerifierEvent> events,
                          std::vector<LoggedEvent>& out) {
  for (auto& e : events) {
    LoggedEvent le{log_.size() + 1, t, std::move(e)};
    log_.push_back(le);
    out.push_back(std::move(le));
  }
}

std::vector<LoggedEvent> Orchestrator::tick(TimeMs now_ms) {
  if (!started_) begin(now_ms);
  const TimeMs t = snap(now_ms, cfg_.tick_ms);
  if (t <= last_tick_) return {};
  if (paused_) paused_total_ += t - last_tick_;
  last_tick_ = t;

  buffers_.holes = aggregate_holes(std::move(buffers_.holes), t, pending_holes_, cfg_);
  pending_holes_.clear();
  last_obs_ = fuse_tick(buffers_, t, cfg_);
  prune(t);
  if (paused_ || finished()) return {};

  // the verifier runs on a clock that stands still while paused
  FusedObservation obs = last_obs_;
  obs.tick_ms = t - paused_total_;
  auto r = step(state_, obs, plan_, cfg_);
  state_ = std::move(r.state);
  std::vector<LoggedEvent> out;
  append(t, std::move(r.events), out);
  return out;
}

std::shared_ptr<const WindowClassifier> default_classifier() {
  static const auto clf =
      std::make_shared<const TemplateClassifier>(synthetic::reference_templates());
  return clf;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
  return out;
}

ReplayRun run_replay(std::string_view replay_bytes, const AssemblyPlan& plan,
                     const ThresholdConfig& cfg,
                     std::shared_ptr<const WindowClassifier> classifier,
                     const std::function<void(const Orchestrator&)>& on_tick) {
  const auto records = read_replay(replay_bytes);
  const auto& meta = std::get<ReplayMeta>(records.front());
  if (meta.plan_id != plan.plan_id)
    throw ReplayFormatError(1, ReplayErrorReason::FieldRange,
                            fmt::format("replay is for plan '{}', not '{}'", meta.plan_id,
                                        plan.plan_id));
  ThresholdConfig run_cfg = cfg;
  run_cfg.tick_ms = meta.tick_ms;

  Orchestrator orch(plan, run_cfg, std::move(classifier));
  TimeMs first = 0, last = 0;
  if (records.size() > 1) {
    first = *record_time(records[1]);
    last = *record_time(records.back());
  }
  orch.begin(first);

  std::size_t next = 1;
  for (TimeMs t = orch.started_ms() + run_cfg.tick_ms;
       t <= last + run_cfg.tick_ms && !orch.finished(); t += run_cfg.tick_ms) {
    for (; next < records.size() && *record_time(records[next]) <= t; ++next) {
      try {
        orch.ingest(records[next]);
      } catch (const FeatureLengthMismatch& e) {
        throw ReplayFormatError(next + 1, ReplayErrorReason::FieldRange, e.what());
      }
    }
    orch.tick(t);
    if (on_tick) on_tick(orch);
  }

  ReplayRun run;
  run.log = orch.log();
  run.report = build_report(plan, run.log, "sha256:" + sha256_hex(replay_bytes),
                            orch.started_ms(), orch.last_tick_ms(),
                            orch.finished() ? Outcome::Complete : Outcome::Aborted);
  return run;
}

}  // namespace sv
