#pragma once

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fogduel/features.hpp"
#include "fogduel/learner.hpp"
#include "fogduel/net.hpp"
#include "fogduel/replay.hpp"
#include "fogduel/sim.hpp"

namespace fogduel {

// eps^(1 + alpha * i / (N - 1)); a single actor uses eps itself.
double epsilon_for(int index, int count, double epsilon_base, double alpha);

struct ActorConfig {
  int index = 0;
  int count = 1;
  double epsilon_base = 0.4;
  double alpha = 7.0;
  ScriptedPolicyId opponent = ScriptedPolicyId::kRusher;
  std::uint32_t segment = 0;  // replay segment fed by this actor
  bool evaluation = false;    // forces greedy play
  RewardMode reward_mode = RewardMode::kShaped;
  double gamma_r = 0.999;
  Recurrence recurrence = Recurrence::kLstm;

  double epsilon() const;
  std::vector<std::string> violations() const;
};

struct ActResult {
  MacroAction action = MacroAction::kWait;
  HiddenState next;
  bool explored = false;
};

// Epsilon-greedy over the legal set. One uniform draw decides the branch on
// every call; exploring draws a second index. Greedy ties go to the lowest
// index. The hidden state advances either way.
ActResult act(const QNetParams& params, const FeatureVector& features,
              const HiddenState& hidden, double epsilon, ActionMask legal,
              std::mt19937_64& rng, Recurrence recurrence = Recurrence::kLstm);

// Greedy choice among legal actions; exposed for evaluation and tests.
MacroAction greedy_legal(std::span<const double> q, ActionMask legal);

struct EpisodeRecord {
  ScriptedPolicyId opponent = ScriptedPolicyId::kRusher;
  std::uint32_t segment = 0;
  std::vector<StoredSequence> sequences;
  double reward = 0.0;
  bool win = false;
  Winner winner = Winner::kNone;
  std::int32_t length = 0;  // ticks played
  double score_agent = 0.0;
  double score_opponent = 0.0;
  std::int32_t actor_index = 0;
  std::uint64_t snapshot_version = 0;
  std::uint64_t episode_id = 0;
  std::uint64_t seed = 0;
  std::int32_t illegal_actions = 0;

  bool operator==(const EpisodeRecord&) const = default;
};

// Window starts and lengths covering an episode of `length` steps: one
// window every stride, each as long as fits.
struct Window {
  int start = 0;
  int length = 0;
};
std::vector<Window> tile_episode(int length);

// Plays one full episode. Nothing leaves the actor until it returns.
EpisodeRecord run_episode(Env& env, const QNetParams& params,
                          const ActorConfig& config, std::uint64_t seed,
                          std::uint64_t snapshot_version = 0,
                          std::uint64_t episode_id = 0);

class RecordFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layout: u32 magic, u32 format version, u64 payload length, payload.
// The payload starts with the rules version string; see the README.
std::vector<std::uint8_t> encode_record(const EpisodeRecord& record);
EpisodeRecord decode_record(std::span<const std::uint8_t> bytes);

struct Snapshot {
  std::shared_ptr<const QNetParams> params;
  std::uint64_t version = 0;
};

class ChannelClosed : public std::runtime_error {
 public:
  ChannelClosed() : std::runtime_error("channel closed") {}
};

// Latest-value broadcast of learner parameters. Versions start at 1.
class SnapshotChannel {
 public:
  std::uint64_t publish(QNetParams params);
  // Blocks until something is published; throws ChannelClosed if closed
  // before the first publication.
  Snapshot pull() const;
  std::optional<Snapshot> try_pull() const;
  std::uint64_t latest_version() const;
  void close();

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  Snapshot latest_;
  bool closed_ = false;
};

}  // namespace fogduel
