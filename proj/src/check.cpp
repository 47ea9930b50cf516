#include <sstream>

#include "fogduel/bytes.hpp"
#include "fogduel/runtime.hpp"
#include "fogduel/verify.hpp"

namespace fogduel {

namespace {

void put_player(ByteWriter& w, const PlayerState& p) {
  w.put(p.minerals);
  w.put(p.workers);
  for (auto a : p.army) w.put(a);
  w.put(p.bases);
  w.put(p.defenses);
  w.put(p.tech);
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

std::string hex(std::uint64_t v) {
  std::ostringstream s;
  s << "0x" << std::hex << v;
  return s.str();
}

}  // namespace

// Frozen from the fogduel-v1 rules; any rule change must update it together
// with the rules version.
const std::uint64_t kGoldenTraceHash = 0xa5cc0329df7665ccULL;

std::uint64_t golden_trace_hash(const Rules& rules) {
  ByteWriter w;
  Env env(rules);
  for (int opp = 0; opp < kNumScriptedPolicies; ++opp) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      ObservationFrame obs = env.reset(seed, static_cast<ScriptedPolicyId>(opp));
      for (;;) {
        // A fixed pseudo-random agent that builds up and attacks in waves.
        const auto legal = legal_actions(obs, rules);
        const std::uint64_t h = splitmix64(seed * 7919 + static_cast<std::uint64_t>(obs.tick));
        MacroAction a = legal[h % legal.size()];
        if (obs.own.army_total() >= 6 && h % 3 == 0) a = MacroAction::kAttack;
        const StepResult r = env.step(a);
        const GameState& s = env.state();
        w.put(s.tick);
        put_player(w, s.players[0]);
        put_player(w, s.players[1]);
        w.put(s.scout_timers[0]);
        w.put(s.scout_timers[1]);
        w.put(s.last_combat_tick);
        w.put<std::uint8_t>(r.obs.enemy_visible);
        w.put(static_cast<std::uint8_t>(r.winner));
        w.put(r.score_agent);
        w.put(r.score_opponent);
        w.put<std::uint8_t>(r.illegal);
        w.put(static_cast<std::uint8_t>(r.applied));
        w.put(static_cast<std::uint8_t>(r.opponent_action));
        obs = r.obs;
        if (r.terminal) break;
      }
    }
  }
  return fnv1a(w.bytes());
}

std::vector<CheckResult> run_checks(const Rules& rules) {
  std::vector<CheckResult> out;
  auto record = [&](std::string name, bool ok, std::string detail) {
    out.push_back({std::move(name), ok, std::move(detail)});
  };

  const std::uint64_t golden = golden_trace_hash(rules);
  record("env golden trace", golden == kGoldenTraceHash,
         golden == kGoldenTraceHash ? "scripted episodes reproduce the frozen trace"
                                    : "trace hash " + hex(golden) + " differs from the frozen rules");

  const std::string fifo = verify::replay_interleavings(2000, 11);
  record("replay sum tree and FIFO eviction", fifo.empty(),
         fifo.empty() ? "2000 random operations consistent" : fifo);

  const auto chi = verify::replay_chi_square(64, 4, 20000, 12);
  record("replay sampling distribution", chi.passed(),
         "chi-square " + fmt(chi.statistic) + " < " + fmt(chi.critical_99));

  const double fd = verify::finite_diff_max_error(8, 13);
  record("net finite differences", fd < 1e-4, "max relative error " + fmt(fd));

  const double tgt = verify::target_max_error(200, 14);
  record("learner target oracle", tgt <= 1e-12, "max error " + fmt(tgt));

  const double rew = verify::reward_max_error(10000, 15);
  record("learner reward identities", rew <= 1e-12, "max error " + fmt(rew));

  const std::string eps = verify::epsilon_schedule();
  record("actor epsilon schedule", eps.empty(), eps.empty() ? "endpoints exact, strictly decreasing" : eps);

  {
    Env env;
    ActorConfig ac;
    const auto rec = run_episode(env, QNetParams::init_uniform(5), ac, 5);
    const bool ok = decode_record(encode_record(rec)) == rec;
    record("actor record round trip", ok, ok ? "encode/decode is lossless" : "decoded record differs");
  }
  return out;
}

}  // namespace fogduel
