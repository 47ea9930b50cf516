#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fogduel/features.hpp"
#include "fogduel/learner.hpp"
#include "fogduel/runtime.hpp"

using namespace fogduel;
using nlohmann::json;

namespace {

constexpr int kExitVerification = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCrash = 3;

std::vector<ScriptedPolicyId> parse_opponents(const std::string& list) {
  std::vector<ScriptedPolicyId> out;
  std::stringstream in(list);
  std::string name;
  while (std::getline(in, name, ',')) {
    if (!name.empty()) out.push_back(policy_from_name(name));
  }
  return out;
}

json summary_json(const TrainSummary& s) {
  json j;
  j["run_dir"] = s.run_dir.string();
  j["rounds"] = s.rounds;
  j["episodes"] = s.episodes;
  j["train_steps"] = s.train_steps;
  j["stale_episodes"] = s.stale_episodes;
  j["wall_seconds"] = s.wall_seconds;
  j["stopped_on_win_rate"] = s.stopped_on_win_rate;
  if (!s.evals.empty()) j["last_eval"] = to_json(s.evals.back().table);
  return j;
}

int cmd_train(const std::string& config_path, bool deterministic) {
  RunConfig cfg = load_run_config(config_path);
  if (deterministic) cfg.mode = RunMode::kDeterministic;
  const TrainSummary s = train(cfg);
  std::cout << summary_json(s).dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const std::string& checkpoint, int games,
                 const std::string& opponents, std::uint64_t seed,
                 const std::string& out_path) {
  if (games <= 0) throw ConfigError({"--games must be positive"});
  const Checkpoint ckpt = read_checkpoint_file(checkpoint);
  const EvalTable table = evaluate_params(ckpt.online, ckpt.recurrence,
                                          parse_opponents(opponents), games, seed);
  json j;
  j["checkpoint"] = checkpoint;
  j["train_steps"] = ckpt.train_steps;
  j["seed"] = seed;
  j["table"] = to_json(table);
  if (!out_path.empty()) std::ofstream(out_path) << j.dump(2) << "\n";
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& variant,
               int final_games) {
  const AblationVariant v = variant_from_name(variant);
  const AblationReport rep = ablate(load_run_config(config_path), v, final_games);
  json j;
  j["variant"] = variant;
  j["baseline"] = to_json(rep.baseline_final);
  j["variant_final"] = to_json(rep.variant_final);
  j["baseline_late"] = to_json(rep.baseline_late);
  j["variant_late"] = to_json(rep.variant_late);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_check() {
  bool ok = true;
  for (const CheckResult& c : run_checks()) {
    std::printf("%s  %-36s %s\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
    ok = ok && c.passed;
  }
  return ok ? 0 : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fogduel: recurrent Q-learning trainer for a fog-of-war macro duel"};
  app.require_subcommand(1);

  std::string config_path;
  bool deterministic = false;
  auto* train_cmd = app.add_subcommand("train", "train from a JSON run config");
  train_cmd->add_option("--config", config_path, "run config file")->required();
  train_cmd->add_flag("--deterministic", deterministic,
                      "single process: one episode per actor, then the train steps, repeated");

  std::string checkpoint;
  int games = 0;
  std::string opponents = "Rusher,Economist,TurtleTech,RandomLegal";
  std::uint64_t eval_seed = 1;
  std::string eval_out;
  auto* eval_cmd = app.add_subcommand("evaluate", "greedy win rates of a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--games", games, "games per opponent")->required();
  eval_cmd->add_option("--opponents", opponents, "comma-separated scripted opponents");
  eval_cmd->add_option("--seed", eval_seed, "evaluation seed");
  eval_cmd->add_option("--out", eval_out, "also write the table to this file");

  std::string variant;
  int final_games = 200;
  auto* ablate_cmd = app.add_subcommand("ablate", "baseline and one variant on shared seeds");
  ablate_cmd->add_option("--config", config_path, "run config file")->required();
  ablate_cmd->add_option("--variant", variant, "no_lstm, sign_reward_only or high_exploration")
      ->required();
  ablate_cmd->add_option("--final-games", final_games, "games per opponent in the final evaluation");

  auto* check_cmd = app.add_subcommand("check", "run the fast verification suite");
  auto* features_cmd = app.add_subcommand("features", "print the feature layout as markdown");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, deterministic);
    if (*eval_cmd) return cmd_evaluate(checkpoint, games, opponents, eval_seed, eval_out);
    if (*ablate_cmd) return cmd_ablate(config_path, variant, final_games);
    if (*check_cmd) return cmd_check();
    if (*features_cmd) {
      std::cout << feature_layout_markdown();
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error:\n";
    for (const auto& p : e.problems()) std::cerr << "  - " << p << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return kExitCrash;
  }
  return kExitCrash;
}
