#include "fuzz.hpp"

#include <algorithm>
#include <random>
#include <vector>

#include <fmt/format.h>

namespace sv::fuzz {

namespace {

enum class Mode { Noise, Helpful, Silence, Distractor };

class Generator {
 public:
  Generator(const AssemblyPlan& plan, std::uint64_t seed, const Options& opts)
      : plan_(plan), rng_(seed), opts_(opts) {
    for (const auto& [id, _] : plan.holes) world_[id] = HoleState::Empty;
  }

  FusedObservation next(const VerifierState& st) {
    if (remaining_ <= 0) pick_mode();
    --remaining_;
    ++seg_tick_;
    t_ += chance(0.05) ? 33 * uniform_int(2, 10) : 33;

    FusedObservation obs;
    obs.tick_ms = t_;
    const auto& stage = plan_.stage(st.stage_ordinal);
    switch (mode_) {
      case Mode::Noise: noise(obs); break;
      case Mode::Silence: break;
      case Mode::Helpful: helpful(obs, st, stage); break;
      case Mode::Distractor: distractor(obs, st, stage); break;
    }
    if (mode_ != Mode::Silence) report_holes(obs);
    obs.stale.detections = !obs.detections;
    obs.stale.acf = !obs.acf;
    obs.stale.angle = !obs.angle;
    obs.stale.holes = obs.holes.empty();
    return obs;
  }

 private:
  bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng_); }
  int uniform_int(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng_); }

  void pick_mode() {
    const double r = uniform(0, 1);
    mode_ = r < 0.25 ? Mode::Noise : r < 0.75 ? Mode::Helpful : r < 0.85 ? Mode::Silence
                                                                          : Mode::Distractor;
    remaining_ = uniform_int(5, 60);
    seg_tick_ = 0;
  }

  Detection det(PartClass p, double x, double y, double conf) {
    Detection d;
    d.part = p;
    d.cx = std::clamp(x, 0.0, 1.0);
    d.cy = std::clamp(y, 0.0, 1.0);
    d.w = 0.08;
    d.h = 0.08;
    d.conf = conf;
    return d;
  }

  void add(FusedObservation& obs, const Detection& d) {
    if (!obs.detections) obs.detections = DetectionFrame{obs.tick_ms, {}};
    obs.detections->detections.push_back(d);
  }

  ActionConfidence acf(double big, double small, double tight, double done) {
    return {big, small, tight, done, t_};
  }

  void noise(FusedObservation& obs) {
    const int n = uniform_int(0, 4);
    for (int i = 0; i < n; ++i) {
      const auto p = kAllParts[static_cast<std::size_t>(uniform_int(0, 9))];
      add(obs, det(p, uniform(0, 1), uniform(0, 1), uniform(0, 1)));
      if (chance(0.5)) obs.depth_mm[p] = uniform(500, 800);
    }
    if (chance(0.7)) obs.acf = acf(uniform(0, 1), uniform(0, 1), uniform(0, 1), uniform(0, 1));
    if (chance(0.5)) obs.angle = ObjAngle{uniform(0, 359.9), uniform(0, 1), t_};
    for (int i = uniform_int(0, 2); i > 0; --i) obs.hand_wrists.emplace_back(uniform(0, 1), uniform(0, 1));
    if (chance(0.1)) {
      // a random hole flips, never to Assembled in cheat mode
      auto it = std::next(world_.begin(), uniform_int(0, static_cast<int>(world_.size()) - 1));
      const int top = opts_.cheat ? 1 : 2;
      it->second = static_cast<HoleState>(uniform_int(0, top));
    }
  }

  void place_at_target(FusedObservation& obs, const StageSpec& s, PartClass part) {
    const auto* placement = plan_.placement_of(part);
    const Region target = placement && placement->target ? *placement->target : Region{0.5, 0.5, 0.1, 0.1};
    add(obs, det(part, target.cx + uniform(-0.3, 0.3) * target.w,
                 target.cy + uniform(-0.3, 0.3) * target.h, uniform(0.7, 1.0)));
    if (placement && placement->expected_depth_mm)
      obs.depth_mm[part] = *placement->expected_depth_mm + uniform(-8, 8);
    if (s.angle && part == s.part) obs.angle = ObjAngle{canonicalize_angle(s.angle->expected_deg + uniform(-4, 4)), 0.9, t_};
  }

  void helpful(FusedObservation& obs, const VerifierState& st, const StageSpec& s) {
    switch (s.kind) {
      case StageKind::PartPlacement: {
        if (st.phase == Phase::PartVerification) {
          place_at_target(obs, s, *s.part);
          if (chance(0.3)) obs.acf = acf(0.1, 0.1, 0.05, 0.1);
        } else {
          const double x = uniform(0.05, 0.95), y = uniform(0.05, 0.95);
          add(obs, det(*s.part, x, y, uniform(0.6, 1.0)));
          obs.hand_wrists.emplace_back(x + uniform(-0.05, 0.05), y + uniform(-0.05, 0.05));
          const bool big = s.grasp == Action::CatchBig;
          obs.acf = acf(big ? 0.95 : 0.1, big ? 0.1 : 0.95, 0.05, 0.05);
        }
        break;
      }
      case StageKind::ScrewFastening: {
        // tighten in bursts; the target hole seats partway through
        const bool tightening = (seg_tick_ % 30) < 20;
        obs.acf = acf(0.05, tightening ? 0.3 : 0.9, tightening ? 0.95 : 0.1, 0.05);
        if (tightening && (seg_tick_ % 30) == 8) {
          for (const auto& h : s.holes) {
            if (std::find(st.holes_done.begin(), st.holes_done.end(), h) == st.holes_done.end()) {
              world_[h] = opts_.cheat ? HoleState::InProcess : HoleState::Assembled;
              break;
            }
          }
        }
        break;
      }
      case StageKind::Verification:
        for (auto p : s.verify_parts) place_at_target(obs, s, p);
        if (!opts_.cheat)
          for (const auto& h : s.holes) world_[h] = HoleState::Assembled;
        break;
      case StageKind::Completion: break;
    }
  }

  void distractor(FusedObservation& obs, const VerifierState& st, const StageSpec& s) {
    if (s.kind == StageKind::PartPlacement && st.phase != Phase::PartVerification) {
      // a later stage's part in hand with its catch action
      for (int k = st.stage_ordinal; k < static_cast<int>(plan_.size()); ++k) {
        const auto& later = plan_.stages[static_cast<std::size_t>(k)];
        if (later.kind == StageKind::PartPlacement && later.part != s.part) {
          const double x = uniform(0.1, 0.9), y = uniform(0.1, 0.9);
          add(obs, det(*later.part, x, y, 0.9));
          obs.hand_wrists.emplace_back(x, y);
          const bool big = later.grasp == Action::CatchBig;
          obs.acf = acf(big ? 0.95 : 0.1, big ? 0.1 : 0.95, 0.05, 0.05);
          return;
        }
      }
    }
    if (s.part) {
      // released well outside the target
      add(obs, det(*s.part, uniform(0, 1), uniform(0, 1), 0.9));
      obs.depth_mm[*s.part] = uniform(500, 800);
      if (s.angle) obs.angle = ObjAngle{uniform(0, 359.9), 0.9, t_};
      return;
    }
    // a tightening motion with nothing happening at the hole
    obs.acf = acf(0.05, 0.2, (seg_tick_ % 20) < 12 ? 0.95 : 0.1, 0.05);
  }

  void report_holes(FusedObservation& obs) {
    for (const auto& [id, state] : world_) {
      if (chance(0.05)) continue;  // dropped report: Unknown this tick
      obs.holes[id] = state;
    }
  }

  const AssemblyPlan& plan_;
  std::mt19937_64 rng_;
  Options opts_;
  std::map<std::string, HoleState> world_;
  Mode mode_ = Mode::Noise;
  int remaining_ = 0;
  int seg_tick_ = 0;
  TimeMs t_ = 0;
};

std::uint64_t mix(std::uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void accumulate(Summary& s, const SequenceResult& r, long long index) {
  ++s.sequences;
  s.screw_stages_completed += r.screw_stages_completed;
  s.max_ordinal = std::max(s.max_ordinal, r.max_ordinal);
  s.ordinal_sum += r.max_ordinal;
  s.errors += r.errors;
  if (!r.ok()) {
    ++s.violations;
    if (s.first_failure < 0 || index < s.first_failure) s.first_failure = index;
  }
}

}  // namespace

SequenceResult run_sequence(const AssemblyPlan& plan, const ThresholdConfig& cfg,
                            std::uint64_t seed, const Options& opts) {
  SequenceResult res;
  Generator gen(plan, seed, opts);
  auto r = start(plan, 0);
  VerifierState st = r.state;
  int completed_upto = 0;
  bool error_since_entry = false;

  auto fail = [&](bool& flag, std::string why) {
    if (flag) res.failure = std::move(why);
    flag = false;
  };

  for (int i = 0; i < opts.ticks && st.phase != Phase::Final; ++i) {
    const auto obs = gen.next(st);
    auto out = step(st, obs, plan, cfg);

    const int before = st.stage_ordinal, after = out.state.stage_ordinal;
    if (after < before || after > before + 1)
      fail(res.monotonic, fmt::format("tick {}: ordinal {} -> {}", i, before, after));

    for (std::size_t e = 0; e < out.events.size(); ++e) {
      const auto& ev = out.events[e];
      if (std::holds_alternative<StageEntered>(ev)) error_since_entry = false;
      if (const auto* c = std::get_if<StageCompleted>(&ev)) {
        if (c->ordinal != completed_upto + 1)
          fail(res.no_skip, fmt::format("tick {}: completed {} after {}", i, c->ordinal,
                                        completed_upto));
        completed_upto = c->ordinal;
        if (plan.stage(c->ordinal).kind == StageKind::ScrewFastening)
          ++res.screw_stages_completed;
      }
      if (std::holds_alternative<ErrorDetected>(ev)) {
        ++res.errors;
        error_since_entry = true;
        if (e + 1 >= out.events.size() || !std::holds_alternative<Guidance>(out.events[e + 1]))
          fail(res.paired, fmt::format("tick {}: error without guidance", i));
      }
    }
    if (after > completed_upto + 1)
      fail(res.no_skip, fmt::format("tick {}: at {} with only {} completed", i, after,
                                    completed_upto));
    const auto ph = out.state.phase;
    if ((ph == Phase::PartAssemblyCorrection || ph == Phase::ScrewAssemblyCorrection) &&
        !error_since_entry)
      fail(res.correction_sound, fmt::format("tick {}: correction without error", i));

    st = std::move(out.state);
    res.max_ordinal = std::max(res.max_ordinal, st.stage_ordinal);
  }
  return res;
}

Summary run_serial(const AssemblyPlan& plan, const ThresholdConfig& cfg, int n,
                   std::uint64_t base_seed, const Options& opts) {
  Summary s;
  for (int i = 0; i < n; ++i)
    accumulate(s, run_sequence(plan, cfg, mix(base_seed + static_cast<std::uint64_t>(i)), opts), i);
  return s;
}

Summary run_parallel(const AssemblyPlan& plan, const ThresholdConfig& cfg, int n,
                     std::uint64_t base_seed, const Options& opts) {
  std::vector<SequenceResult> results(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 16)
  for (int i = 0; i < n; ++i)
    results[static_cast<std::size_t>(i)] =
        run_sequence(plan, cfg, mix(base_seed + static_cast<std::uint64_t>(i)), opts);
  Summary s;
  for (int i = 0; i < n; ++i) accumulate(s, results[static_cast<std::size_t>(i)], i);
  return s;
}

}  // namespace sv::fuzz
