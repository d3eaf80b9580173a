#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stageverify/plan.hpp"
#include "stageverify/replay.hpp"

namespace sv {

enum class Scenario : std::uint8_t { Happy, CheatScrew, WrongPart, SkipAttempt };

std::string_view to_string(Scenario s);
/// "happy", "cheat-screw", "wrong-part", "skip-attempt"; throws ValidationError.
Scenario parse_scenario(std::string_view s);

struct SimulationOptions {
  /// Stage that receives the injected fault; chosen from the plan when unset.
  std::optional<int> fault_stage;
  /// Part grabbed by mistake in the wrong-part scenario.
  std::optional<PartClass> wrong_part;
  TimeMs frame_ms = 33;
  TimeMs hole_report_ms = 100;
};

/// What the scripted operator actually did, for closed-loop checks.
struct ScenarioTruth {
  /// Index ordinal-1: earliest time at which the stage's conditions were
  /// legitimately established.
  std::vector<TimeMs> earliest_complete_ms;
  int fault_stage = 0;
  std::optional<PartClass> fault_part;
  TimeMs end_ms = 0;
};

struct Simulation {
  std::vector<ReplayRecord> records;
  ScenarioTruth truth;
};

/// Deterministic for a given (plan, scenario, seed, options).
Simulation simulate_scenario(const AssemblyPlan& plan, Scenario scenario, std::uint64_t seed,
                             const SimulationOptions& opts = {});

}  // namespace sv
