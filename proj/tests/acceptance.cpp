// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// on the command line to run a subset, e.g. `fogduel_acceptance 1 2 6`.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fogduel/runtime.hpp"
#include "fogduel/verify.hpp"

using namespace fogduel;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::string list(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += (out.empty() ? "" : " ") + fmt(x, 3);
  return out;
}

double aggregate(const EvalTable& t) {
  int games = 0;
  int wins = 0;
  for (const auto& r : t) {
    games += r.games;
    wins += r.wins;
  }
  return games ? static_cast<double>(wins) / games : 0.0;
}

fs::path work_root() {
  if (const char* root = std::getenv("FOGDUEL_OUTPUT_ROOT"); root && *root) {
    return fs::path(root) / "acceptance";
  }
  return fs::temp_directory_path() / ("fogduel_acceptance_" + std::to_string(::getpid()));
}

// Shared settings of the learning runs. The faster target sync and early
// stopping are explained in the README.
RunConfig learning_config(const fs::path& dir, std::uint64_t seed) {
  RunConfig c;
  c.mode = RunMode::kDeterministic;
  c.seed = seed;
  c.output_dir = dir.string();
  c.learner.target_sync_period = 250;
  c.eval_every_rounds = 25;
  c.eval_games = 50;
  c.metrics_every_rounds = 25;
  c.checkpoint_every_steps = 0;
  return c;
}

const std::vector<ScriptedPolicyId> kMix = {
    ScriptedPolicyId::kRusher, ScriptedPolicyId::kEconomist,
    ScriptedPolicyId::kTurtleTech, ScriptedPolicyId::kRandomLegal};

Outcome formula_exactness() {
  const double err = verify::reward_max_error(10000, 101);
  return {err <= 1e-12, "10000 triples, max error " + fmt(err)};
}

Outcome target_exactness() {
  const double err = verify::target_max_error(1000, 102);
  return {err <= 1e-12, "1000 instances, max error " + fmt(err)};
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const double err = verify::finite_diff_max_error(50, 103);
  const double secs = seconds_since(t0);
  return {err < 1e-4 && secs < 60.0,
          "50 instances, max relative error " + fmt(err) + " in " + fmt(secs) + " s"};
}

Outcome replay_distribution() {
  const auto chi = verify::replay_chi_square(64, 4, 100000, 104);
  const std::string fifo = verify::replay_interleavings(10000, 105);
  return {chi.passed() && fifo.empty(),
          "chi-square " + fmt(chi.statistic) + " < " + fmt(chi.critical_99) +
              (fifo.empty() ? ", 10000 interleavings consistent" : ", " + fifo)};
}

Outcome epsilon_schedule() {
  const std::string e = verify::epsilon_schedule();
  return {e.empty(), e.empty() ? "endpoints exact, strictly decreasing" : e};
}

Outcome determinism(const fs::path& root) {
  const auto t0 = Clock::now();
  auto config = [&](const char* name) {
    RunConfig c;
    c.mode = RunMode::kDeterministic;
    c.seed = 6;
    c.output_dir = (root / name).string();
    c.budget.train_steps = 2000;
    c.checkpoint_every_steps = 500;
    c.eval_every_rounds = 100;
    c.eval_games = 10;
    return c;
  };
  const TrainSummary a = train(config("a"));
  const TrainSummary b = train(config("b"));
  const double secs = seconds_since(t0);

  std::vector<std::string> files = {"metrics.jsonl", "report.json", "checkpoint.bin"};
  for (int s = 500; s < 2000; s += 500) files.push_back("checkpoint_" + std::to_string(s) + ".bin");
  for (const auto& f : files) {
    const std::string x = slurp(fs::path(a.run_dir) / f);
    if (x.empty() || x != slurp(fs::path(b.run_dir) / f)) {
      return {false, f + " differs or is missing"};
    }
  }
  const bool steps = a.train_steps == 2000 && b.train_steps == 2000;
  return {steps && secs < 600.0,
          std::to_string(files.size()) + " files byte-identical after " +
              std::to_string(a.train_steps) + " steps, " + fmt(secs) + " s for both runs"};
}

Outcome learning_smoke(const fs::path& root) {
  std::vector<double> finals;
  bool within_budget = true;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    RunConfig c = learning_config(root / ("seed_" + std::to_string(seed)), seed);
    c.actors = 8;
    c.opponents = {ScriptedPolicyId::kRusher};
    c.budget.train_steps = 1000000;
    c.budget.wall_seconds = 1200.0;
    c.stop_at_win_rate = 0.96;
    const TrainSummary s = train(c);
    within_budget = within_budget && s.wall_seconds <= 1200.0 + 60.0;
    const EvalTable t = evaluate_params(s.final_params, s.recurrence, c.opponents, 200,
                                        900 + seed);
    finals.push_back(t[0].win_rate());
    std::printf("      seed %llu: %llu steps, %.0f s, 200-game win rate %.3f\n",
                static_cast<unsigned long long>(seed),
                static_cast<unsigned long long>(s.train_steps), s.wall_seconds,
                t[0].win_rate());
  }
  const double m = median3(finals);
  return {m >= 0.9 && within_budget, "median " + fmt(m) + " over seeds [" + list(finals) + "]"};
}

struct AblationCase {
  AblationVariant variant;
  std::vector<ScriptedPolicyId> opponents;
  std::uint64_t train_steps;
  bool strict;  // variant must be strictly worse, otherwise no better
};

// Each seed trains a baseline and a variant on the same seeds and budget.
// A run's win rate pools every evaluation in its last quarter; the criterion
// is the median over seeds of the paired difference, variant - baseline.
Outcome ablation_direction(const fs::path& root, const AblationCase& ac) {
  std::vector<double> base;
  std::vector<double> var;
  std::vector<double> diff;
  double slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    RunConfig c = learning_config(
        root / std::string(variant_name(ac.variant)) / ("seed_" + std::to_string(seed)), seed);
    c.opponents = ac.opponents;
    c.budget.train_steps = ac.train_steps;
    const auto t0 = Clock::now();
    const AblationReport r = ablate(c, ac.variant, 200);
    const double secs = seconds_since(t0);
    slowest = std::max(slowest, secs);
    base.push_back(aggregate(r.baseline_late));
    var.push_back(aggregate(r.variant_late));
    diff.push_back(var.back() - base.back());
    std::printf("      %s seed %llu: baseline %.3f, variant %.3f (last snapshot %.3f vs %.3f), "
                "pair %.0f s\n",
                std::string(variant_name(ac.variant)).c_str(),
                static_cast<unsigned long long>(seed), base.back(), var.back(),
                aggregate(r.baseline_final), aggregate(r.variant_final), secs);
  }
  const double md = median3(diff);
  const bool direction = ac.strict ? md < 0.0 : md <= 0.0;
  return {direction && slowest <= 45.0 * 60.0,
          std::string(variant_name(ac.variant)) + " median paired difference " + fmt(md) +
              (ac.strict ? " < 0" : " <= 0") + " (medians " + fmt(median3(var)) + " vs " +
              fmt(median3(base)) + "), slowest pair " + fmt(slowest) + " s"};
}

Outcome ablation_directions(const fs::path& root) {
  const std::vector<AblationCase> cases = {
      {AblationVariant::kSignRewardOnly, {ScriptedPolicyId::kTurtleTech}, 8000, true},
      {AblationVariant::kNoLstm, kMix, 8000, false},
      {AblationVariant::kHighExploration, kMix, 8000, false},
  };
  Outcome out{true, ""};
  for (const auto& ac : cases) {
    const Outcome o = ablation_direction(root, ac);
    out.passed = out.passed && o.passed;
    out.detail += (out.detail.empty() ? "" : "; ") + o.detail;
  }
  return out;
}

// Progress is counted in episodes per actor: every actor plays at the same
// rate in the distributed setting, so this is the shared clock of both arms.
Outcome actor_scaling(const fs::path& root) {
  constexpr double kBudgetSeconds = 600.0;
  constexpr double kNever = 1e18;
  std::vector<double> reach8;
  std::vector<double> reach2;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (int n : {8, 2}) {
      RunConfig c = learning_config(
          root / ("n" + std::to_string(n) + "_seed_" + std::to_string(seed)), seed);
      c.actors = n;
      c.opponents = {ScriptedPolicyId::kTurtleTech};
      c.budget.train_steps = 1000000;
      c.budget.wall_seconds = kBudgetSeconds;
      c.stop_at_win_rate = 0.5;
      const TrainSummary s = train(c);
      const auto hit = first_reaching(s, ScriptedPolicyId::kTurtleTech, 0.5);
      const double per_actor = hit ? static_cast<double>(hit->episodes) / n : kNever;
      (n == 8 ? reach8 : reach2).push_back(per_actor);
      if (hit) {
        std::printf("      N=%d seed %llu: 50%% after %llu episodes (%.0f per actor), %.0f s\n", n,
                    static_cast<unsigned long long>(seed),
                    static_cast<unsigned long long>(hit->episodes), per_actor, s.wall_seconds);
      } else {
        std::printf("      N=%d seed %llu: below 50%% after %llu episodes, %.0f s\n", n,
                    static_cast<unsigned long long>(seed),
                    static_cast<unsigned long long>(s.episodes), s.wall_seconds);
      }
    }
  }
  const double m8 = median3(reach8);
  const double m2 = median3(reach2);
  auto show = [&](double v) { return v >= kNever ? std::string("never") : fmt(v, 6); };
  return {m8 < kNever && m8 <= m2,
          "median episodes per actor to 50%: N=8 " + show(m8) + ", N=2 " + show(m2)};
}

}  // namespace

int main(int argc, char** argv) {
  std::setvbuf(stdout, nullptr, _IOLBF, 0);
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  const fs::path root = work_root();
  fs::remove_all(root);
  fs::create_directories(root);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"formula exactness", formula_exactness},
      {"target exactness", target_exactness},
      {"gradient correctness", gradient_correctness},
      {"replay distribution", replay_distribution},
      {"epsilon schedule", epsilon_schedule},
      {"determinism", [&] { return determinism(root / "determinism"); }},
      {"learning smoke test", [&] { return learning_smoke(root / "smoke"); }},
      {"ablation directions", [&] { return ablation_directions(root / "ablation"); }},
      {"actor scaling direction", [&] { return actor_scaling(root / "scaling"); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!wanted.empty() && !wanted.count(number)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s  %d %s: %s (%.1f s)\n", o.passed ? "PASS" : "FAIL", number,
                criteria[i].first.c_str(), o.detail.c_str(), seconds_since(t0));
    if (!o.passed) ++failed;
  }
  fs::remove_all(root);
  return failed == 0 ? 0 : 1;
}
