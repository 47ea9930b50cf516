#include "fogduel/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "fogduel/bytes.hpp"

namespace fogduel {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kWinWindow = 100;

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(a)) + b);
}

// Stream salts so that different consumers of one run seed never collide.
constexpr std::uint64_t kSaltInit = 0x1417;
constexpr std::uint64_t kSaltLearner = 0x1EA2;
constexpr std::uint64_t kSaltEpisode = 0xE915;
constexpr std::uint64_t kSaltEval = 0xE7A1;

std::string reward_mode_name(RewardMode m) {
  return m == RewardMode::kSignOnly ? "sign" : "shaped";
}

std::string recurrence_name(Recurrence r) {
  return r == Recurrence::kStateless ? "stateless" : "lstm";
}

class MetricsWriter {
 public:
  explicit MetricsWriter(const fs::path& path)
      : out_(path, std::ios::out | std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open " + path.string());
  }
  // One complete line per event, flushed before returning.
  void write(const json& event) {
    const std::string line = event.dump() + "\n";
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
  }

 private:
  std::ofstream out_;
};

class IngestQueue {
 public:
  explicit IngestQueue(std::size_t high_water) : high_water_(high_water) {}

  // Returns false once stopped.
  bool wait_for_space(const std::atomic<bool>& stop) {
    std::unique_lock lock(mu_);
    space_.wait(lock, [&] { return items_.size() < high_water_ || stop.load(); });
    return !stop.load();
  }
  void push(std::vector<std::uint8_t> msg) {
    {
      std::lock_guard lock(mu_);
      items_.push_back(std::move(msg));
    }
    ready_.notify_one();
  }
  std::vector<std::vector<std::uint8_t>> drain(std::chrono::milliseconds wait) {
    std::unique_lock lock(mu_);
    if (items_.empty()) ready_.wait_for(lock, wait, [&] { return !items_.empty(); });
    std::vector<std::vector<std::uint8_t>> out(std::make_move_iterator(items_.begin()),
                                               std::make_move_iterator(items_.end()));
    items_.clear();
    space_.notify_all();
    return out;
  }
  void wake_all() {
    space_.notify_all();
    ready_.notify_all();
  }

 private:
  std::size_t high_water_;
  std::mutex mu_;
  std::condition_variable space_;
  std::condition_variable ready_;
  std::deque<std::vector<std::uint8_t>> items_;
};

// State shared by both run modes; only the learner side touches it.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, fs::path dir)
      : cfg_(cfg),
        dir_(std::move(dir)),
        hash_(config_hash(cfg)),
        learner_(cfg.effective_learner(),
                 QNetParams::init_uniform(derive(cfg.seed, kSaltInit))),
        replay_(ReplayConfig{static_cast<int>(cfg.opponents.size()), cfg.replay_capacity}),
        rng_(derive(cfg.seed, kSaltLearner)),
        metrics_(dir_ / "metrics.jsonl"),
        windows_(cfg.opponents.size()),
        start_(std::chrono::steady_clock::now()) {
    channel_.publish(learner_.online());
  }

  SnapshotChannel& channel() { return channel_; }
  const RunConfig& cfg() const { return cfg_; }
  std::uint64_t episodes() const { return episodes_; }
  std::uint64_t steps() const { return learner_.steps(); }

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  bool out_of_budget() const {
    const Budget& b = cfg_.budget;
    if (learner_.steps() >= b.train_steps) return true;
    if (b.episodes && episodes_ >= *b.episodes) return true;
    if (b.wall_seconds && elapsed() >= *b.wall_seconds) return true;
    return stopped_on_win_rate_;
  }

  std::uint64_t episode_seed(std::uint64_t actor, std::uint64_t k) const {
    return derive(cfg_.seed, kSaltEpisode + actor, k);
  }

  void ingest(const EpisodeRecord& rec) {
    replay_.append(rec.segment, rec.sequences);
    auto& w = windows_[rec.segment];
    w.push_back(rec.win);
    if (w.size() > kWinWindow) w.pop_front();
    if (channel_.latest_version() > rec.snapshot_version + 1) ++stale_;
    ++episodes_;
  }

  // Returns true if an update happened.
  bool maybe_train() {
    const std::size_t need = std::max<std::size_t>(
        cfg_.warmup_sequences, static_cast<std::size_t>(cfg_.learner.batch_size));
    if (replay_.size() < need || learner_.steps() >= cfg_.budget.train_steps) return false;
    const auto r = learner_.train_step(replay_, rng_);
    loss_sum_ += r.loss;
    ++loss_count_;
    if (cfg_.checkpoint_every_steps > 0 &&
        learner_.steps() % cfg_.checkpoint_every_steps == 0) {
      write_checkpoint((dir_ / ("checkpoint_" + std::to_string(learner_.steps()) + ".bin")).string());
    }
    return true;
  }

  void publish() { channel_.publish(learner_.online()); }

  void end_round(bool timestamps) {
    ++rounds_;
    json eval;
    if (cfg_.eval_every_rounds > 0 && rounds_ % static_cast<std::uint64_t>(cfg_.eval_every_rounds) == 0) {
      EvalPoint pt{rounds_, episodes_, learner_.steps(),
                   evaluate_params(learner_.online(), cfg_.effective_learner().recurrence,
                                   cfg_.opponents, cfg_.eval_games,
                                   derive(cfg_.seed, kSaltEval))};
      eval = to_json(pt.table);
      if (cfg_.stop_at_win_rate) {
        stopped_on_win_rate_ = std::all_of(pt.table.begin(), pt.table.end(), [&](const EvalRow& r) {
          return r.win_rate() >= *cfg_.stop_at_win_rate;
        });
      }
      evals_.push_back(std::move(pt));
    }
    if (!eval.is_null() || rounds_ % static_cast<std::uint64_t>(cfg_.metrics_every_rounds) == 0) {
      emit(timestamps, eval);
    }
  }

  void emit(bool timestamps, const json& eval) {
    json e;
    e["round"] = rounds_;
    e["train_steps"] = learner_.steps();
    e["episodes"] = episodes_;
    if (timestamps) e["wall_seconds"] = elapsed();
    e["snapshot_version"] = channel_.latest_version();
    e["loss"] = loss_count_ ? loss_sum_ / static_cast<double>(loss_count_) : 0.0;
    loss_sum_ = 0.0;
    loss_count_ = 0;
    json wr = json::object();
    for (std::size_t i = 0; i < windows_.size(); ++i) {
      const auto& w = windows_[i];
      const double rate = w.empty() ? 0.0
                                    : static_cast<double>(std::count(w.begin(), w.end(), true)) /
                                          static_cast<double>(w.size());
      wr[std::string(policy_name(cfg_.opponents[i]))] = rate;
    }
    e["win_rate"] = wr;
    const auto stats = replay_.stats();
    json segs = json::array();
    for (const auto& s : stats.segments) segs.push_back(s.size);
    e["replay"] = {{"size", stats.total_size}, {"segments", segs}, {"stale_refs", stats.stale_refs}};
    e["stale_episodes"] = stale_;
    if (!eval.is_null()) e["eval"] = eval;
    metrics_.write(e);
  }

  void write_checkpoint(const std::string& path) const {
    write_checkpoint_file(path, make_checkpoint(learner_, hash_, channel_.latest_version()));
  }

  TrainSummary finish(bool timestamps) {
    if (rounds_ % static_cast<std::uint64_t>(cfg_.metrics_every_rounds) != 0 && rounds_ > 0) {
      emit(timestamps, json());
    }
    write_checkpoint((dir_ / "checkpoint.bin").string());
    TrainSummary s;
    s.run_dir = dir_;
    s.rounds = rounds_;
    s.episodes = episodes_;
    s.train_steps = learner_.steps();
    s.stale_episodes = stale_;
    s.wall_seconds = elapsed();
    s.stopped_on_win_rate = stopped_on_win_rate_;
    s.evals = evals_;
    s.final_params = learner_.online();
    s.recurrence = cfg_.effective_learner().recurrence;

    json report;
    report["rounds"] = s.rounds;
    report["episodes"] = s.episodes;
    report["train_steps"] = s.train_steps;
    report["stale_episodes"] = s.stale_episodes;
    report["stopped_on_win_rate"] = s.stopped_on_win_rate;
    json ev = json::array();
    for (const auto& p : evals_) {
      ev.push_back({{"round", p.round}, {"episodes", p.episodes},
                    {"train_steps", p.train_steps}, {"table", to_json(p.table)}});
    }
    report["evals"] = ev;
    std::ofstream(dir_ / "report.json") << report.dump(2) << "\n";
    return s;
  }

 private:
  RunConfig cfg_;
  fs::path dir_;
  std::uint64_t hash_;
  Learner learner_;
  SegmentedReplay replay_;
  std::mt19937_64 rng_;
  SnapshotChannel channel_;
  MetricsWriter metrics_;
  std::vector<std::deque<bool>> windows_;
  std::chrono::steady_clock::time_point start_;
  std::uint64_t episodes_ = 0;
  std::uint64_t rounds_ = 0;
  std::uint64_t stale_ = 0;
  double loss_sum_ = 0.0;
  std::uint64_t loss_count_ = 0;
  bool stopped_on_win_rate_ = false;
  std::vector<EvalPoint> evals_;
};

TrainSummary run_deterministic(Trainer& t) {
  const RunConfig& cfg = t.cfg();
  std::vector<Env> envs(static_cast<std::size_t>(cfg.actors));
  std::vector<ActorConfig> actors;
  for (int i = 0; i < cfg.actors; ++i) actors.push_back(cfg.actor_config(i));
  std::vector<std::uint64_t> played(actors.size(), 0);
  while (!t.out_of_budget()) {
    const Snapshot snap = t.channel().pull();
    for (std::size_t i = 0; i < actors.size(); ++i) {
      const std::uint64_t id = t.episodes();
      const auto rec = run_episode(envs[i], *snap.params, actors[i],
                                   t.episode_seed(i, played[i]++), snap.version, id);
      t.ingest(rec);
    }
    bool trained = false;
    for (int f = 0; f < cfg.train_steps_per_round; ++f) trained |= t.maybe_train();
    if (trained) t.publish();
    t.end_round(false);
  }
  return t.finish(false);
}

TrainSummary run_concurrent(Trainer& t) {
  const RunConfig& cfg = t.cfg();
  IngestQueue queue(cfg.queue_high_water);
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mu;

  std::vector<std::thread> workers;
  for (int i = 0; i < cfg.actors; ++i) {
    workers.emplace_back([&, i] {
      try {
        Env env;
        const ActorConfig ac = cfg.actor_config(i);
        for (std::uint64_t k = 0; queue.wait_for_space(stop); ++k) {
          const Snapshot snap = t.channel().pull();
          const auto rec = run_episode(env, *snap.params, ac,
                                       t.episode_seed(static_cast<std::uint64_t>(i), k),
                                       snap.version, k * 1024 + static_cast<std::uint64_t>(i));
          queue.push(encode_record(rec));
        }
      } catch (const ChannelClosed&) {
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        stop = true;
      }
    });
  }

  std::uint64_t since_publish = 0;
  std::uint64_t episodes_at_round = 0;
  try {
    while (!t.out_of_budget() && !stop.load()) {
      for (const auto& msg : queue.drain(std::chrono::milliseconds(5))) {
        t.ingest(decode_record(msg));
      }
      if (t.maybe_train() && ++since_publish >= static_cast<std::uint64_t>(cfg.train_steps_per_round)) {
        t.publish();
        since_publish = 0;
      }
      // A round is one episode per actor on average.
      while (t.episodes() >= episodes_at_round + static_cast<std::uint64_t>(cfg.actors)) {
        episodes_at_round += static_cast<std::uint64_t>(cfg.actors);
        t.end_round(true);
      }
    }
  } catch (...) {
    stop = true;
    queue.wake_all();
    t.channel().close();
    for (auto& w : workers) w.join();
    throw;
  }
  stop = true;
  queue.wake_all();
  t.channel().close();
  for (auto& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
  return t.finish(true);
}

const std::map<std::string, AblationVariant> kVariants = {
    {"no_lstm", AblationVariant::kNoLstm},
    {"sign_reward_only", AblationVariant::kSignRewardOnly},
    {"high_exploration", AblationVariant::kHighExploration},
};

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error([&] {
        std::string msg = "invalid configuration:";
        for (const auto& p : problems) msg += "\n  - " + p;
        return msg;
      }()),
      problems_(std::move(problems)) {}

LearnerConfig RunConfig::effective_learner() const {
  LearnerConfig l = learner;
  if (ablations.no_lstm) l.recurrence = Recurrence::kStateless;
  if (ablations.sign_reward_only) l.reward_mode = RewardMode::kSignOnly;
  return l;
}

ActorConfig RunConfig::actor_config(int index) const {
  const LearnerConfig l = effective_learner();
  ActorConfig a;
  a.index = index;
  a.count = actors;
  a.epsilon_base = ablations.high_exploration ? 0.7 : epsilon_base;
  a.alpha = ablations.high_exploration ? 11.0 : alpha;
  const auto slot = static_cast<std::size_t>(index) % opponents.size();
  a.opponent = opponents[slot];
  a.segment = static_cast<std::uint32_t>(slot);
  a.reward_mode = l.reward_mode;
  a.gamma_r = l.gamma_r;
  a.recurrence = l.recurrence;
  return a;
}

std::vector<std::string> RunConfig::violations() const {
  std::vector<std::string> out = learner.violations();
  if (actors < 1) out.push_back("actors must be >= 1");
  if (opponents.empty()) out.push_back("opponents must list at least one scripted policy");
  for (std::size_t i = 0; i < opponents.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (opponents[i] == opponents[j]) {
        out.push_back("opponent '" + std::string(policy_name(opponents[i])) + "' is listed twice");
      }
    }
  }
  if (!(epsilon_base > 0.0 && epsilon_base < 1.0)) out.push_back("epsilon must lie in (0, 1)");
  if (!(alpha >= 0.0)) out.push_back("alpha must be >= 0");
  if (output_dir.empty()) out.push_back("output_dir must not be empty");
  if (train_steps_per_round < 1) out.push_back("train_steps_per_round must be >= 1");
  if (replay_capacity < 1) out.push_back("replay_capacity must be >= 1");
  if (queue_high_water < 1) out.push_back("queue_high_water must be >= 1");
  if (metrics_every_rounds < 1) out.push_back("metrics_every_rounds must be >= 1");
  if (eval_every_rounds < 0) out.push_back("eval_every_rounds must be >= 0");
  if (eval_games < 1) out.push_back("eval_games must be >= 1");
  if (budget.wall_seconds && !(*budget.wall_seconds >= 0.0)) {
    out.push_back("budget.wall_seconds must be >= 0");
  }
  if (stop_at_win_rate && !(*stop_at_win_rate > 0.0 && *stop_at_win_rate <= 1.0)) {
    out.push_back("stop_at_win_rate must lie in (0, 1]");
  }
  if (stop_at_win_rate && eval_every_rounds == 0) {
    out.push_back("stop_at_win_rate needs eval_every_rounds > 0");
  }
  return out;
}

json to_json(const RunConfig& c) {
  json opp = json::array();
  for (auto p : c.opponents) opp.push_back(std::string(policy_name(p)));
  json budget = {{"train_steps", c.budget.train_steps}};
  budget["episodes"] = c.budget.episodes ? json(*c.budget.episodes) : json();
  budget["wall_seconds"] = c.budget.wall_seconds ? json(*c.budget.wall_seconds) : json();
  const LearnerConfig& l = c.learner;
  return {
      {"actors", c.actors},
      {"opponents", opp},
      {"seed", c.seed},
      {"learner",
       {{"lambda", l.lambda},
        {"n_step", l.n_step},
        {"gamma_r", l.gamma_r},
        {"batch_size", l.batch_size},
        {"learning_rate", l.learning_rate},
        {"target_sync_period", l.target_sync_period},
        {"clip_norm", l.clip_norm},
        {"reward", reward_mode_name(l.reward_mode)},
        {"recurrence", recurrence_name(l.recurrence)}}},
      {"epsilon", c.epsilon_base},
      {"alpha", c.alpha},
      {"ablations",
       {{"no_lstm", c.ablations.no_lstm},
        {"sign_reward_only", c.ablations.sign_reward_only},
        {"high_exploration", c.ablations.high_exploration}}},
      {"mode", c.mode == RunMode::kConcurrent ? "concurrent" : "deterministic"},
      {"output_dir", c.output_dir},
      {"budget", budget},
      {"train_steps_per_round", c.train_steps_per_round},
      {"replay_capacity", c.replay_capacity},
      {"warmup_sequences", c.warmup_sequences},
      {"queue_high_water", c.queue_high_water},
      {"metrics_every_rounds", c.metrics_every_rounds},
      {"checkpoint_every_steps", c.checkpoint_every_steps},
      {"eval_every_rounds", c.eval_every_rounds},
      {"eval_games", c.eval_games},
      {"stop_at_win_rate", c.stop_at_win_rate ? json(*c.stop_at_win_rate) : json()},
      {"rules_version", std::string(kRulesVersion)},
  };
}

RunConfig run_config_from_json(const json& j) {
  std::vector<std::string> problems;
  RunConfig c;
  if (!j.is_object()) throw ConfigError({"configuration must be a JSON object"});

  auto field = [&](const json& obj, const std::string& prefix, const std::string& key,
                   auto& dst) {
    if (!obj.contains(key) || obj.at(key).is_null()) return;
    try {
      obj.at(key).get_to(dst);
    } catch (const json::exception&) {
      problems.push_back(prefix + key + ": wrong type (" + obj.at(key).dump() + ")");
    }
  };
  auto optional_field = [&](const json& obj, const std::string& prefix,
                            const std::string& key, auto& dst) {
    if (!obj.contains(key) || obj.at(key).is_null()) return;
    typename std::remove_reference_t<decltype(dst)>::value_type v{};
    try {
      obj.at(key).get_to(v);
      dst = v;
    } catch (const json::exception&) {
      problems.push_back(prefix + key + ": wrong type (" + obj.at(key).dump() + ")");
    }
  };
  auto unknown = [&](const json& obj, const std::string& prefix,
                     std::initializer_list<const char*> keys) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
        problems.push_back(prefix + it.key() + ": unknown key");
      }
    }
  };

  unknown(j, "", {"actors", "opponents", "seed", "learner", "epsilon", "alpha",
                  "ablations", "mode", "output_dir", "budget", "train_steps_per_round",
                  "replay_capacity", "warmup_sequences", "queue_high_water",
                  "metrics_every_rounds", "checkpoint_every_steps", "eval_every_rounds",
                  "eval_games", "stop_at_win_rate", "rules_version"});
  field(j, "", "actors", c.actors);
  field(j, "", "seed", c.seed);
  field(j, "", "epsilon", c.epsilon_base);
  field(j, "", "alpha", c.alpha);
  field(j, "", "output_dir", c.output_dir);
  field(j, "", "train_steps_per_round", c.train_steps_per_round);
  field(j, "", "replay_capacity", c.replay_capacity);
  field(j, "", "warmup_sequences", c.warmup_sequences);
  field(j, "", "queue_high_water", c.queue_high_water);
  field(j, "", "metrics_every_rounds", c.metrics_every_rounds);
  field(j, "", "checkpoint_every_steps", c.checkpoint_every_steps);
  field(j, "", "eval_every_rounds", c.eval_every_rounds);
  field(j, "", "eval_games", c.eval_games);
  optional_field(j, "", "stop_at_win_rate", c.stop_at_win_rate);

  if (j.contains("rules_version") && j["rules_version"] != std::string(kRulesVersion)) {
    problems.push_back("rules_version: this build runs '" + std::string(kRulesVersion) + "'");
  }
  if (j.contains("opponents")) {
    if (!j["opponents"].is_array()) {
      problems.push_back("opponents: must be an array of policy names");
    } else {
      c.opponents.clear();
      for (const auto& o : j["opponents"]) {
        try {
          c.opponents.push_back(policy_from_name(o.get<std::string>()));
        } catch (const std::exception&) {
          problems.push_back("opponents: unknown policy " + o.dump() +
                             " (expected Rusher, Economist, TurtleTech or RandomLegal)");
        }
      }
    }
  }
  if (j.contains("mode")) {
    const auto m = j["mode"].is_string() ? j["mode"].get<std::string>() : std::string();
    if (m == "deterministic") c.mode = RunMode::kDeterministic;
    else if (m == "concurrent") c.mode = RunMode::kConcurrent;
    else problems.push_back("mode: expected \"deterministic\" or \"concurrent\"");
  }
  if (j.contains("learner")) {
    const json& l = j["learner"];
    if (!l.is_object()) {
      problems.push_back("learner: must be an object");
    } else {
      unknown(l, "learner.", {"lambda", "n_step", "gamma_r", "batch_size", "learning_rate",
                              "target_sync_period", "clip_norm", "reward", "recurrence"});
      field(l, "learner.", "lambda", c.learner.lambda);
      field(l, "learner.", "n_step", c.learner.n_step);
      field(l, "learner.", "gamma_r", c.learner.gamma_r);
      field(l, "learner.", "batch_size", c.learner.batch_size);
      field(l, "learner.", "learning_rate", c.learner.learning_rate);
      field(l, "learner.", "target_sync_period", c.learner.target_sync_period);
      field(l, "learner.", "clip_norm", c.learner.clip_norm);
      if (l.contains("reward")) {
        if (l["reward"] == "shaped") c.learner.reward_mode = RewardMode::kShaped;
        else if (l["reward"] == "sign") c.learner.reward_mode = RewardMode::kSignOnly;
        else problems.push_back("learner.reward: expected \"shaped\" or \"sign\"");
      }
      if (l.contains("recurrence")) {
        if (l["recurrence"] == "lstm") c.learner.recurrence = Recurrence::kLstm;
        else if (l["recurrence"] == "stateless") c.learner.recurrence = Recurrence::kStateless;
        else problems.push_back("learner.recurrence: expected \"lstm\" or \"stateless\"");
      }
    }
  }
  if (j.contains("ablations")) {
    const json& a = j["ablations"];
    if (!a.is_object()) {
      problems.push_back("ablations: must be an object");
    } else {
      unknown(a, "ablations.", {"no_lstm", "sign_reward_only", "high_exploration"});
      field(a, "ablations.", "no_lstm", c.ablations.no_lstm);
      field(a, "ablations.", "sign_reward_only", c.ablations.sign_reward_only);
      field(a, "ablations.", "high_exploration", c.ablations.high_exploration);
    }
  }
  if (j.contains("budget")) {
    const json& b = j["budget"];
    if (!b.is_object()) {
      problems.push_back("budget: must be an object");
    } else {
      unknown(b, "budget.", {"train_steps", "episodes", "wall_seconds"});
      field(b, "budget.", "train_steps", c.budget.train_steps);
      optional_field(b, "budget.", "episodes", c.budget.episodes);
      optional_field(b, "budget.", "wall_seconds", c.budget.wall_seconds);
    }
  }
  // Range checks only make sense on fields that parsed.
  if (problems.empty()) {
    problems = c.violations();
  } else {
    for (auto& v : c.violations()) problems.push_back(v);
  }
  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file " + path.string()});
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({"config file " + path.string() + " is not valid JSON: " + e.what()});
  }
  return run_config_from_json(j);
}

std::uint64_t config_hash(const RunConfig& cfg) {
  json j = to_json(cfg);
  j.erase("output_dir");  // where a run lands does not change what it computes
  const std::string s = j.dump();
  return fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

fs::path resolve_output_dir(const std::string& dir) {
  fs::path p(dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("FOGDUEL_OUTPUT_ROOT"); root && *root) {
      return fs::path(root) / p;
    }
  }
  return p;
}

json to_json(const EvalTable& table) {
  json rows = json::array();
  for (const auto& r : table) {
    rows.push_back({{"opponent", std::string(policy_name(r.opponent))},
                    {"games", r.games},
                    {"wins", r.wins},
                    {"win_rate", r.win_rate()}});
  }
  return rows;
}

EvalTable evaluate_params(const QNetParams& params, Recurrence recurrence,
                          const std::vector<ScriptedPolicyId>& opponents,
                          int games, std::uint64_t seed) {
  EvalTable table;
  Env env;
  for (ScriptedPolicyId opp : opponents) {
    ActorConfig ac;
    ac.evaluation = true;
    ac.opponent = opp;
    ac.recurrence = recurrence;
    EvalRow row{opp, games, 0};
    for (int g = 0; g < games; ++g) {
      const auto rec = run_episode(env, params, ac,
                                   derive(seed, static_cast<std::uint64_t>(opp) + 1,
                                          static_cast<std::uint64_t>(g)));
      if (rec.win) ++row.wins;
    }
    table.push_back(row);
  }
  return table;
}

TrainSummary train(const RunConfig& config) {
  if (auto v = config.violations(); !v.empty()) throw ConfigError(v);
  const fs::path dir = resolve_output_dir(config.output_dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << to_json(config).dump(2) << "\n";
  Trainer t(config, dir);
  return config.mode == RunMode::kConcurrent ? run_concurrent(t) : run_deterministic(t);
}

std::optional<EvalPoint> first_reaching(const TrainSummary& s,
                                        ScriptedPolicyId opponent,
                                        double threshold) {
  for (const auto& p : s.evals) {
    for (const auto& r : p.table) {
      if (r.opponent == opponent && r.win_rate() >= threshold) return p;
    }
  }
  return std::nullopt;
}

EvalTable late_win_rates(const TrainSummary& s, double fraction) {
  const auto from = static_cast<std::uint64_t>(
      std::ceil(static_cast<double>(s.train_steps) * (1.0 - fraction)));
  EvalTable out;
  for (const auto& p : s.evals) {
    if (p.train_steps < from) continue;
    for (const auto& r : p.table) {
      auto it = std::find_if(out.begin(), out.end(),
                             [&](const EvalRow& o) { return o.opponent == r.opponent; });
      if (it == out.end()) {
        out.push_back({r.opponent, 0, 0});
        it = out.end() - 1;
      }
      it->games += r.games;
      it->wins += r.wins;
    }
  }
  return out;
}

AblationVariant variant_from_name(std::string_view name) {
  const auto it = kVariants.find(std::string(name));
  if (it == kVariants.end()) {
    throw ConfigError({"unknown ablation variant '" + std::string(name) +
                       "' (expected no_lstm, sign_reward_only or high_exploration)"});
  }
  return it->second;
}

std::string_view variant_name(AblationVariant v) {
  for (const auto& [name, value] : kVariants) {
    if (value == v) return name;
  }
  return "unknown";
}

AblationReport ablate(const RunConfig& config, AblationVariant variant,
                      int final_eval_games) {
  RunConfig base = config;
  base.ablations = {};
  base.output_dir = (fs::path(config.output_dir) / "baseline").string();
  RunConfig var = base;
  var.output_dir = (fs::path(config.output_dir) / std::string(variant_name(variant))).string();
  switch (variant) {
    case AblationVariant::kNoLstm: var.ablations.no_lstm = true; break;
    case AblationVariant::kSignRewardOnly: var.ablations.sign_reward_only = true; break;
    case AblationVariant::kHighExploration: var.ablations.high_exploration = true; break;
  }
  AblationReport rep{train(base), train(var), {}, {}, {}, {}};
  const std::uint64_t eval_seed = derive(config.seed, kSaltEval, 1);
  rep.baseline_final = evaluate_params(rep.baseline.final_params, rep.baseline.recurrence,
                                       config.opponents, final_eval_games, eval_seed);
  rep.variant_final = evaluate_params(rep.variant.final_params, rep.variant.recurrence,
                                      config.opponents, final_eval_games, eval_seed);
  rep.baseline_late = late_win_rates(rep.baseline);
  rep.variant_late = late_win_rates(rep.variant);

  json out;
  out["variant"] = std::string(variant_name(variant));
  out["baseline"] = {{"final", to_json(rep.baseline_final)},
                     {"late", to_json(rep.baseline_late)},
                     {"train_steps", rep.baseline.train_steps},
                     {"episodes", rep.baseline.episodes}};
  out["variant_run"] = {{"final", to_json(rep.variant_final)},
                        {"late", to_json(rep.variant_late)},
                        {"train_steps", rep.variant.train_steps},
                        {"episodes", rep.variant.episodes}};
  const fs::path dir = resolve_output_dir(config.output_dir);
  std::ofstream(dir / "ablation.json") << out.dump(2) << "\n";
  return rep;
}

}  // namespace fogduel
