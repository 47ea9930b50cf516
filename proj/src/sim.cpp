#include "fogduel/sim.hpp"

#include <algorithm>
#include <string>

namespace fogduel {

namespace {

constexpr std::array<std::string_view, kNumActions> kActionNames = {
    "ProduceWorker", "ProduceA",     "ProduceB",    "ProduceC", "BuildBase",
    "BuildDefense",  "UpgradeTech",  "Scout",       "Attack",   "Wait"};

constexpr std::array<std::string_view, kNumScriptedPolicies> kPolicyNames = {
    "Rusher", "Economist", "TurtleTech", "RandomLegal"};

// Removal priority when a side loses units.
constexpr std::array<int, 3> kDefenderRemovalOrder = {1, 2, 0};  // B, C, A
constexpr std::array<int, 3> kAttackerRemovalOrder = {0, 1, 2};  // A, B, C

std::int32_t cost_of(MacroAction a, const Rules& r) {
  switch (a) {
    case MacroAction::kProduceWorker: return r.cost_worker;
    case MacroAction::kProduceA: return r.cost_a;
    case MacroAction::kProduceB: return r.cost_b;
    case MacroAction::kProduceC: return r.cost_c;
    case MacroAction::kBuildBase: return r.cost_base;
    case MacroAction::kBuildDefense: return r.cost_defense;
    case MacroAction::kUpgradeTech: return r.cost_tech;
    case MacroAction::kScout: return r.cost_scout;
    case MacroAction::kAttack:
    case MacroAction::kWait: return 0;
  }
  return 0;
}

// Most numerous unit type, lowest index on ties; -1 for an empty army.
int majority_type(const std::array<std::int32_t, kNumUnitTypes>& army) {
  int best = -1;
  std::int32_t best_count = 0;
  for (int u = 0; u < kNumUnitTypes; ++u) {
    if (army[u] > best_count) {
      best = u;
      best_count = army[u];
    }
  }
  return best;
}

// A beats B, B beats C, C beats A.
bool counters(int unit, int enemy_unit) {
  return enemy_unit >= 0 && enemy_unit == (unit + 1) % kNumUnitTypes;
}

std::int64_t army_power(const std::array<std::int32_t, kNumUnitTypes>& army,
                        const std::array<std::int32_t, kNumUnitTypes>& enemy,
                        const Rules& r) {
  const int target = majority_type(enemy);
  std::int64_t power = 0;
  for (int u = 0; u < kNumUnitTypes; ++u) {
    power += static_cast<std::int64_t>(army[u]) *
             (counters(u, target) ? r.counter_multiplier : 1);
  }
  return power;
}

std::int64_t remove_units(std::array<std::int32_t, kNumUnitTypes>& army,
                          std::int64_t count,
                          const std::array<int, 3>& order) {
  std::int64_t removed = 0;
  for (int u : order) {
    const std::int64_t take = std::min<std::int64_t>(army[u], count - removed);
    army[u] -= static_cast<std::int32_t>(take);
    removed += take;
  }
  return removed;
}

void pay(PlayerState& p, MacroAction a, const Rules& r) {
  p.minerals -= cost_of(a, r);
}

void complete(PlayerState& p, MacroAction a) {
  switch (a) {
    case MacroAction::kProduceWorker: ++p.workers; break;
    case MacroAction::kProduceA: ++p.army[0]; break;
    case MacroAction::kProduceB: ++p.army[1]; break;
    case MacroAction::kProduceC: ++p.army[2]; break;
    case MacroAction::kBuildBase: ++p.bases; break;
    case MacroAction::kBuildDefense: ++p.defenses; break;
    case MacroAction::kUpgradeTech: p.tech = std::min(p.tech + 1, 2); break;
    default: break;
  }
}

bool affordable(const PlayerState& p, MacroAction a, const Rules& r) {
  return mask_has(legal_mask(p, r), a);
}

// Seeded per-opponent thresholds so that a fixed policy meets some variety
// across episodes.
std::int32_t seeded_range(std::uint64_t seed, std::uint64_t salt,
                          std::int32_t lo, std::int32_t hi) {
  const std::uint64_t h = splitmix64(seed ^ (salt * 0x9E3779B97F4A7C15ULL));
  return lo + static_cast<std::int32_t>(h % static_cast<std::uint64_t>(hi - lo + 1));
}

// Attacks once a wave is ready and keeps fighting until the wave is spent,
// then rebuilds from nothing.
MacroAction rusher(const GameState& s, std::uint64_t seed, const Rules& r) {
  const PlayerState& me = s.opponent();
  const std::int32_t wave = seeded_range(seed, 1, 4, 7);
  const bool fighting = s.last_combat_tick >= 0 && s.last_combat_tick == s.tick - 1;
  if (me.army_total() >= wave || (fighting && me.army_total() > 0)) {
    return MacroAction::kAttack;
  }
  if (affordable(me, MacroAction::kProduceA, r)) return MacroAction::kProduceA;
  return MacroAction::kWait;
}

// True when `raids` back-to-back raids by the agent's current army could
// clear every defender and defense.
bool exposed(const GameState& s, const Rules& r, int raids) {
  const PlayerState& me = s.opponent();
  const std::int64_t threat = raids * army_power(s.agent().army, me.army, r);
  return threat >= static_cast<std::int64_t>(me.army_total()) * r.unit_kill_power +
                       static_cast<std::int64_t>(me.defenses) * r.defense_kill_power;
}

MacroAction guard_unit(const PlayerState& me, const Rules& r) {
  for (MacroAction a : {MacroAction::kProduceC, MacroAction::kBuildDefense,
                        MacroAction::kProduceA}) {
    if (affordable(me, a, r)) return a;
  }
  return MacroAction::kWait;
}

MacroAction economist(const GameState& s, std::uint64_t seed,
                      const Rules& r) {
  const PlayerState& me = s.opponent();
  const std::int32_t wave = seeded_range(seed, 3, 16, 22);
  const std::int32_t army_tick = seeded_range(seed, 4, 40, 60);
  if (me.army_total() >= wave) return MacroAction::kAttack;
  if (s.agent().army_total() > 0 && exposed(s, r, 1)) return guard_unit(me, r);
  if (me.workers < me.bases * r.workers_per_base &&
      affordable(me, MacroAction::kProduceWorker, r)) {
    return MacroAction::kProduceWorker;
  }
  if (me.bases < 3 && me.workers >= me.bases * r.workers_per_base) {
    return affordable(me, MacroAction::kBuildBase, r) ? MacroAction::kBuildBase
                                                      : MacroAction::kWait;
  }
  if (s.tick >= army_tick && affordable(me, MacroAction::kProduceA, r)) {
    return MacroAction::kProduceA;
  }
  return MacroAction::kWait;
}

// One base, two tech levels, a ring of defenses, then waves of C.
MacroAction turtle_tech(const GameState& s, std::uint64_t seed,
                        const Rules& r) {
  const PlayerState& me = s.opponent();
  const std::int32_t wave = seeded_range(seed, 5, 10, 14);
  if (me.army[2] >= wave) return MacroAction::kAttack;
  if (s.agent().army_total() > 0 && exposed(s, r, 2)) return guard_unit(me, r);
  auto want = [&](MacroAction a) {
    return affordable(me, a, r) ? a : MacroAction::kWait;
  };
  if (me.defenses < 2) return want(MacroAction::kBuildDefense);
  if (me.workers < 6) return want(MacroAction::kProduceWorker);
  if (me.tech < 1) return want(MacroAction::kUpgradeTech);
  if (me.tech < 2) return want(MacroAction::kUpgradeTech);
  if (me.workers < r.workers_per_base) return want(MacroAction::kProduceWorker);
  if (me.defenses < 4) return want(MacroAction::kBuildDefense);
  return want(MacroAction::kProduceC);
}

MacroAction random_legal(const GameState& s, std::uint64_t seed,
                         const Rules& r) {
  const auto legal = mask_to_actions(legal_mask(s.opponent(), r));
  const std::uint64_t h =
      splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(s.tick) + 11));
  return legal[h % legal.size()];
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string_view action_name(MacroAction a) {
  return kActionNames[static_cast<std::size_t>(to_index(a))];
}

MacroAction action_from_index(int index) {
  if (index < 0 || index >= kNumActions) {
    throw std::out_of_range("macro action index out of range: " +
                            std::to_string(index));
  }
  return static_cast<MacroAction>(index);
}

std::string_view policy_name(ScriptedPolicyId p) {
  return kPolicyNames[static_cast<std::size_t>(p)];
}

ScriptedPolicyId policy_from_name(std::string_view name) {
  for (int i = 0; i < kNumScriptedPolicies; ++i) {
    if (kPolicyNames[i] == name) return static_cast<ScriptedPolicyId>(i);
  }
  throw std::invalid_argument("unknown scripted policy: " + std::string(name));
}

double game_score(const PlayerState& p) {
  return 50.0 * p.bases + 10.0 * p.defenses + 5.0 * p.workers +
         8.0 * p.army[0] + 8.0 * p.army[1] + 12.0 * p.army[2] +
         static_cast<double>(p.minerals);
}

std::vector<MacroAction> mask_to_actions(ActionMask m) {
  std::vector<MacroAction> out;
  for (int i = 0; i < kNumActions; ++i) {
    if ((m >> i) & 1u) out.push_back(static_cast<MacroAction>(i));
  }
  return out;
}

ActionMask legal_mask(const PlayerState& p, const Rules& r) {
  ActionMask m = 0;
  auto allow = [&m](MacroAction a) {
    m = static_cast<ActionMask>(m | (1u << to_index(a)));
  };
  const auto min = p.minerals;
  if (min >= r.cost_worker) allow(MacroAction::kProduceWorker);
  if (min >= r.cost_a) allow(MacroAction::kProduceA);
  if (min >= r.cost_b && p.tech >= 1) allow(MacroAction::kProduceB);
  if (min >= r.cost_c && p.tech >= 2) allow(MacroAction::kProduceC);
  if (min >= r.cost_base) allow(MacroAction::kBuildBase);
  if (min >= r.cost_defense) allow(MacroAction::kBuildDefense);
  if (min >= r.cost_tech && p.tech < 2) allow(MacroAction::kUpgradeTech);
  if (min >= r.cost_scout) allow(MacroAction::kScout);
  if (p.army_total() > 0) allow(MacroAction::kAttack);
  allow(MacroAction::kWait);
  return m;
}

std::vector<MacroAction> legal_actions(const ObservationFrame& obs,
                                       const Rules& rules) {
  return mask_to_actions(legal_mask(obs.own, rules));
}

MacroAction scripted_act(ScriptedPolicyId policy, const GameState& state,
                         std::uint64_t seed, const Rules& rules) {
  if (state.terminal) {
    throw ContractViolation("scripted_act called on a terminal state");
  }
  switch (policy) {
    case ScriptedPolicyId::kRusher: return rusher(state, seed, rules);
    case ScriptedPolicyId::kEconomist: return economist(state, seed, rules);
    case ScriptedPolicyId::kTurtleTech: return turtle_tech(state, seed, rules);
    case ScriptedPolicyId::kRandomLegal: return random_legal(state, seed, rules);
  }
  return MacroAction::kWait;
}

CombatOutcome resolve_raid(const PlayerState& attacker,
                           const PlayerState& defender, const Rules& r) {
  CombatOutcome out{attacker, defender};
  const std::int64_t att_power = army_power(attacker.army, defender.army, r);
  const std::int64_t def_power = army_power(defender.army, attacker.army, r) +
                                 static_cast<std::int64_t>(r.defense_power) *
                                     defender.defenses;

  const std::int64_t removed = remove_units(
      out.second.army, att_power / r.unit_kill_power, kDefenderRemovalOrder);
  const std::int64_t residual = att_power - removed * r.unit_kill_power;
  const std::int64_t defenses_lost = std::min<std::int64_t>(
      defender.defenses, residual / r.defense_kill_power);
  out.second.defenses -= static_cast<std::int32_t>(defenses_lost);

  remove_units(out.first.army, def_power / r.unit_kill_power,
               kAttackerRemovalOrder);

  if (out.second.army_total() == 0 && out.second.defenses == 0 &&
      out.second.bases > 0) {
    --out.second.bases;
  }
  return out;
}

CombatOutcome resolve_field_battle(const PlayerState& a, const PlayerState& b,
                                   const Rules& r) {
  CombatOutcome out{a, b};
  const std::int64_t a_power = army_power(a.army, b.army, r);
  const std::int64_t b_power = army_power(b.army, a.army, r);
  remove_units(out.second.army, a_power / r.unit_kill_power,
               kAttackerRemovalOrder);
  remove_units(out.first.army, b_power / r.unit_kill_power,
               kAttackerRemovalOrder);
  return out;
}

GameState initial_state(const Rules& rules) {
  GameState s;
  for (auto& p : s.players) {
    p.minerals = rules.start_minerals;
    p.workers = rules.start_workers;
    p.bases = 1;
  }
  return s;
}

ObservationFrame observe(const GameState& state) {
  ObservationFrame obs;
  obs.tick = state.tick;
  obs.own = state.agent();
  obs.last_combat_tick = state.last_combat_tick;
  const bool fought_last_tick =
      state.last_combat_tick >= 0 && state.last_combat_tick == state.tick - 1;
  obs.enemy_visible = state.scout_timers[0] > 0 || fought_last_tick;
  if (obs.enemy_visible) obs.enemy = state.opponent();
  return obs;
}

ObservationFrame Env::reset(std::uint64_t seed, ScriptedPolicyId opponent) {
  seed_ = seed;
  opponent_ = opponent;
  state_ = initial_state(rules_);
  started_ = true;
  return observe(state_);
}

StepResult Env::step(MacroAction action) {
  if (!started_) throw ContractViolation("step called before reset");
  if (state_.terminal) throw ContractViolation("step called on a terminal episode");

  GameState next = state_;
  PlayerState& me = next.players[0];
  PlayerState& op = next.players[1];

  const bool illegal = !mask_has(legal_mask(me, rules_), action);
  const MacroAction mine = illegal ? MacroAction::kWait : action;
  const MacroAction theirs = scripted_act(opponent_, state_, seed_, rules_);

  pay(me, mine, rules_);
  pay(op, theirs, rules_);

  for (PlayerState* p : {&me, &op}) {
    p->minerals += std::min(p->workers, p->bases * rules_.workers_per_base);
  }

  complete(me, mine);
  complete(op, theirs);

  const std::array<MacroAction, 2> chosen = {mine, theirs};
  for (int side = 0; side < 2; ++side) {
    auto& timer = next.scout_timers[side];
    timer = chosen[side] == MacroAction::kScout ? rules_.scout_ticks
                                                : std::max(0, timer - 1);
  }

  const bool agent_attacks = mine == MacroAction::kAttack;
  const bool opponent_attacks = theirs == MacroAction::kAttack;
  if (agent_attacks && opponent_attacks) {
    auto out = resolve_field_battle(me, op, rules_);
    me = out.first;
    op = out.second;
  } else if (agent_attacks) {
    auto out = resolve_raid(me, op, rules_);
    me = out.first;
    op = out.second;
  } else if (opponent_attacks) {
    auto out = resolve_raid(op, me, rules_);
    op = out.first;
    me = out.second;
  }
  if (agent_attacks || opponent_attacks) next.last_combat_tick = state_.tick;

  next.tick += 1;
  if (me.bases == 0) {
    next.terminal = true;
    next.winner = Winner::kOpponent;
  } else if (op.bases == 0) {
    next.terminal = true;
    next.winner = Winner::kAgent;
  } else if (next.tick >= rules_.max_ticks) {
    next.terminal = true;
  }

  state_ = next;

  StepResult result;
  result.obs = observe(state_);
  result.terminal = state_.terminal;
  result.winner = state_.winner;
  result.score_agent = game_score(me);
  result.score_opponent = game_score(op);
  result.illegal = illegal;
  result.applied = mine;
  result.opponent_action = theirs;
  return result;
}

}  // namespace fogduel
