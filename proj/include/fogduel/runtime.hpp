#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fogduel/actor.hpp"
#include "fogduel/learner.hpp"
#include "fogduel/replay.hpp"
#include "fogduel/sim.hpp"

namespace fogduel {

enum class RunMode : std::uint8_t { kDeterministic = 0, kConcurrent = 1 };

struct Ablations {
  bool no_lstm = false;
  bool sign_reward_only = false;
  bool high_exploration = false;  // eps 0.7, alpha 11

  bool operator==(const Ablations&) const = default;
};

// Every limit is optional except train_steps; whichever is hit first ends
// the run. A zero budget produces an empty run.
struct Budget {
  std::uint64_t train_steps = 20000;
  std::optional<std::uint64_t> episodes;
  std::optional<double> wall_seconds;
};

struct RunConfig {
  int actors = 8;
  std::vector<ScriptedPolicyId> opponents = {
      ScriptedPolicyId::kRusher, ScriptedPolicyId::kEconomist,
      ScriptedPolicyId::kTurtleTech, ScriptedPolicyId::kRandomLegal};
  std::uint64_t seed = 1;
  LearnerConfig learner;
  double epsilon_base = 0.4;
  double alpha = 7.0;
  Ablations ablations;
  RunMode mode = RunMode::kConcurrent;
  std::string output_dir = "run";

  Budget budget;
  int train_steps_per_round = 4;
  std::size_t replay_capacity = 4096;  // sequences per opponent
  std::size_t warmup_sequences = 256;
  std::size_t queue_high_water = 1024;
  int metrics_every_rounds = 10;
  std::uint64_t checkpoint_every_steps = 5000;

  // Periodic greedy evaluation during training; 0 disables it.
  int eval_every_rounds = 0;
  int eval_games = 50;
  // Stop once every opponent's evaluation win rate reaches this.
  std::optional<double> stop_at_win_rate;

  // Effective settings after ablation switches are applied.
  LearnerConfig effective_learner() const;
  ActorConfig actor_config(int index) const;

  // One message per violated constraint.
  std::vector<std::string> violations() const;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

nlohmann::json to_json(const RunConfig& cfg);
// Unknown keys and type errors are reported together with range violations.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
std::uint64_t config_hash(const RunConfig& cfg);

// Resolves a relative output directory against $FOGDUEL_OUTPUT_ROOT when set.
std::filesystem::path resolve_output_dir(const std::string& dir);

struct EvalRow {
  ScriptedPolicyId opponent = ScriptedPolicyId::kRusher;
  int games = 0;
  int wins = 0;
  double win_rate() const { return games ? static_cast<double>(wins) / games : 0.0; }
};
using EvalTable = std::vector<EvalRow>;

nlohmann::json to_json(const EvalTable& table);

// Greedy games on seeds derived from `seed`, independent of any training.
EvalTable evaluate_params(const QNetParams& params, Recurrence recurrence,
                          const std::vector<ScriptedPolicyId>& opponents,
                          int games, std::uint64_t seed);

struct EvalPoint {
  std::uint64_t round = 0;
  std::uint64_t episodes = 0;
  std::uint64_t train_steps = 0;
  EvalTable table;
};

struct TrainSummary {
  std::filesystem::path run_dir;
  std::uint64_t rounds = 0;
  std::uint64_t episodes = 0;
  std::uint64_t train_steps = 0;
  std::uint64_t stale_episodes = 0;
  double wall_seconds = 0.0;
  bool stopped_on_win_rate = false;
  std::vector<EvalPoint> evals;
  QNetParams final_params;
  Recurrence recurrence = Recurrence::kLstm;
};

// Runs to budget and writes config.json, metrics.jsonl, checkpoints and
// report.json into the run directory.
TrainSummary train(const RunConfig& config);

// First evaluation point at which `opponent` reaches `threshold`.
std::optional<EvalPoint> first_reaching(const TrainSummary& s,
                                        ScriptedPolicyId opponent,
                                        double threshold);

// Wins and games summed over the evaluation points that fall in the last
// `fraction` of the run's train steps. Greedy win rates swing between
// neighbouring snapshots, so this is steadier than the last one alone.
EvalTable late_win_rates(const TrainSummary& s, double fraction = 0.25);

enum class AblationVariant : std::uint8_t {
  kNoLstm = 0,
  kSignRewardOnly = 1,
  kHighExploration = 2,
};
AblationVariant variant_from_name(std::string_view name);
std::string_view variant_name(AblationVariant v);

struct AblationReport {
  TrainSummary baseline;
  TrainSummary variant;
  EvalTable baseline_final;
  EvalTable variant_final;
  EvalTable baseline_late;
  EvalTable variant_late;
};

// Baseline and variant share seeds and budget; runs land in
// <output_dir>/baseline and <output_dir>/<variant>.
AblationReport ablate(const RunConfig& config, AblationVariant variant,
                      int final_eval_games);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Fast verification suite. `rules` lets the mutation harness run the same
// checks against a modified rule set.
std::vector<CheckResult> run_checks(const Rules& rules = {});

// Hash over every StepResult of fixed scripted episodes.
std::uint64_t golden_trace_hash(const Rules& rules = {});
extern const std::uint64_t kGoldenTraceHash;

}  // namespace fogduel
