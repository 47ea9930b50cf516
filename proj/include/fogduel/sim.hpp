#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace fogduel {

// Bumped whenever any rule below changes; stored in every episode record and
// checkpoint so replay data never mixes rule sets.
inline constexpr std::string_view kRulesVersion = "fogduel-v1";

enum class MacroAction : std::uint8_t {
  kProduceWorker = 0,
  kProduceA = 1,
  kProduceB = 2,
  kProduceC = 3,
  kBuildBase = 4,
  kBuildDefense = 5,
  kUpgradeTech = 6,
  kScout = 7,
  kAttack = 8,
  kWait = 9,
};
inline constexpr int kNumActions = 10;

std::string_view action_name(MacroAction a);
inline int to_index(MacroAction a) { return static_cast<int>(a); }
MacroAction action_from_index(int index);

enum class ScriptedPolicyId : std::uint8_t {
  kRusher = 0,
  kEconomist = 1,
  kTurtleTech = 2,
  kRandomLegal = 3,
};
inline constexpr int kNumScriptedPolicies = 4;

std::string_view policy_name(ScriptedPolicyId p);
// Throws std::invalid_argument for unknown names.
ScriptedPolicyId policy_from_name(std::string_view name);

enum class UnitType : std::uint8_t { kA = 0, kB = 1, kC = 2 };
inline constexpr int kNumUnitTypes = 3;

struct PlayerState {
  std::int64_t minerals = 0;
  std::int32_t workers = 0;
  std::array<std::int32_t, kNumUnitTypes> army{};
  std::int32_t bases = 0;
  std::int32_t defenses = 0;
  std::int32_t tech = 0;

  std::int32_t army_total() const { return army[0] + army[1] + army[2]; }
  bool operator==(const PlayerState&) const = default;
};

enum class Side : std::uint8_t { kAgent = 0, kOpponent = 1 };
enum class Winner : std::uint8_t { kNone = 0, kAgent = 1, kOpponent = 2 };

// Tunable constants of the duel. The defaults are the versioned rule set;
// the only reason to construct anything else is mutation testing.
struct Rules {
  std::int32_t max_ticks = 200;
  std::int32_t workers_per_base = 8;
  std::int32_t scout_ticks = 3;

  std::int32_t cost_worker = 20;
  std::int32_t cost_a = 8;
  std::int32_t cost_b = 8;
  std::int32_t cost_c = 12;
  std::int32_t cost_base = 120;
  std::int32_t cost_defense = 30;
  std::int32_t cost_tech = 60;
  std::int32_t cost_scout = 5;

  // Combat: one enemy unit removed per `unit_kill_power` of opposing power,
  // one defense per `defense_kill_power` of power left over after the army.
  std::int32_t unit_kill_power = 4;
  std::int32_t defense_kill_power = 6;
  std::int32_t defense_power = 3;
  std::int32_t counter_multiplier = 2;

  std::int32_t start_minerals = 50;
  std::int32_t start_workers = 4;

  bool operator==(const Rules&) const = default;
};

struct GameState {
  std::int32_t tick = 0;
  std::array<PlayerState, 2> players{};
  std::array<std::int32_t, 2> scout_timers{};
  std::int32_t last_combat_tick = -1;
  bool terminal = false;
  Winner winner = Winner::kNone;

  const PlayerState& agent() const { return players[0]; }
  const PlayerState& opponent() const { return players[1]; }
  bool operator==(const GameState&) const = default;
};

// What the agent sees. `enemy` is zeroed unless `enemy_visible`.
struct ObservationFrame {
  std::int32_t tick = 0;
  PlayerState own{};
  bool enemy_visible = false;
  PlayerState enemy{};
  std::int32_t last_combat_tick = -1;

  bool operator==(const ObservationFrame&) const = default;
};

struct StepResult {
  ObservationFrame obs{};
  bool terminal = false;
  Winner winner = Winner::kNone;
  double score_agent = 0.0;
  double score_opponent = 0.0;
  bool illegal = false;
  MacroAction applied = MacroAction::kWait;
  MacroAction opponent_action = MacroAction::kWait;

  bool operator==(const StepResult&) const = default;
};

// Thrown when an operation is called outside its contract (e.g. stepping a
// finished episode). State is left untouched.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

double game_score(const PlayerState& p);

// Bitmask over MacroAction indices.
using ActionMask = std::uint16_t;
inline bool mask_has(ActionMask m, MacroAction a) {
  return (m >> to_index(a)) & 1u;
}
std::vector<MacroAction> mask_to_actions(ActionMask m);

ActionMask legal_mask(const PlayerState& p, const Rules& rules = {});
std::vector<MacroAction> legal_actions(const ObservationFrame& obs,
                                       const Rules& rules = {});

MacroAction scripted_act(ScriptedPolicyId policy, const GameState& state,
                         std::uint64_t seed, const Rules& rules = {});

struct CombatOutcome {
  PlayerState first;
  PlayerState second;
};

// One raid: `attacker` into `defender` (defenses count, bases can fall).
CombatOutcome resolve_raid(const PlayerState& attacker,
                           const PlayerState& defender, const Rules& rules);
// Both sides attacked on the same tick: armies meet in the field, no
// defenses or bases involved.
CombatOutcome resolve_field_battle(const PlayerState& a, const PlayerState& b,
                                   const Rules& rules);

ObservationFrame observe(const GameState& state);

class Env {
 public:
  explicit Env(Rules rules = {}) : rules_(rules) {}

  ObservationFrame reset(std::uint64_t seed, ScriptedPolicyId opponent);
  StepResult step(MacroAction action);

  const GameState& state() const { return state_; }
  const Rules& rules() const { return rules_; }
  ScriptedPolicyId opponent() const { return opponent_; }
  std::uint64_t seed() const { return seed_; }

 private:
  Rules rules_;
  GameState state_{};
  ScriptedPolicyId opponent_ = ScriptedPolicyId::kRusher;
  std::uint64_t seed_ = 0;
  bool started_ = false;
};

GameState initial_state(const Rules& rules = {});

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace fogduel
