#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fogduel/net.hpp"
#include "fogduel/replay.hpp"

namespace fogduel {

enum class RewardMode : std::uint8_t {
  kShaped = 0,    // time-decayed normalized score difference
  kSignOnly = 1,  // sign of the score difference
};

struct LearnerConfig {
  double lambda = 0.997;   // per-step bootstrap discount
  int n_step = 3;
  double gamma_r = 0.999;  // reward time decay per tick
  int batch_size = 32;
  double learning_rate = 1e-4;
  int target_sync_period = 2000;
  double clip_norm = 40.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  RewardMode reward_mode = RewardMode::kShaped;
  Recurrence recurrence = Recurrence::kLstm;

  // Empty when valid, otherwise one message per violated constraint.
  std::vector<std::string> violations() const;
};

// r = gamma^timedecay * (our - enemy) / max(our, enemy); 0 when both are 0.
// Throws std::invalid_argument on negative scores.
double shaped_terminal_reward(double score_our, double score_enemy,
                              double timedecay, double gamma_r);
double sign_terminal_reward(double score_our, double score_enemy);
double terminal_reward(RewardMode mode, double score_our, double score_enemy,
                       double timedecay, double gamma_r);

// Per-step targets of one stored sequence; masked steps carry no target.
struct SequenceTargets {
  std::array<double, kSequenceLength> value{};
  std::array<bool, kSequenceLength> valid{};
};

// q tables are per step (actions x batch), column i belonging to seqs[i].
std::vector<SequenceTargets> n_step_targets_from_q(
    std::span<const StoredSequence> seqs, std::span<const Matrix> q_online,
    std::span<const Matrix> q_target, double lambda, int n);

std::vector<SequenceTargets> n_step_targets(
    std::span<const StoredSequence> seqs, const QNetParams& online,
    const QNetParams& target, double lambda, int n,
    Recurrence recurrence = Recurrence::kLstm);

// Lockstep batch of stored sequences from their boundary states.
SequenceBatch make_sequence_batch(std::span<const StoredSequence> seqs,
                                  int memory);

struct AdamState {
  QNetParams first;
  QNetParams second;
  std::uint64_t step = 0;

  explicit AdamState(const NetShape& shape) : first(shape), second(shape) {}
};

struct TrainStepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
  int unmasked_steps = 0;
  std::vector<ReplayRef> refs;
  std::vector<double> priorities;  // max |G - q| per sequence
  std::uint64_t step = 0;
  bool synced = false;
};

class Learner {
 public:
  Learner(LearnerConfig config, QNetParams init);

  // Samples from replay, updates the online net and writes priorities back.
  TrainStepResult train_step(SegmentedReplay& replay, std::mt19937_64& rng);

  // The update on an explicit batch, without touching any replay. The batch
  // is processed in canonical ref order so the result does not depend on the
  // order it was drawn in.
  TrainStepResult train_on(std::span<const SampledSequence> batch);

  void sync_target();

  const QNetParams& online() const { return online_; }
  const QNetParams& target() const { return target_; }
  const AdamState& optimizer() const { return adam_; }
  const LearnerConfig& config() const { return config_; }
  std::uint64_t steps() const { return steps_; }
  std::uint64_t syncs() const { return syncs_; }

  // Restores full state, used when resuming from a checkpoint.
  void restore(QNetParams online, QNetParams target, AdamState adam,
               std::uint64_t steps, std::uint64_t syncs);

 private:
  void apply_adam(const Gradients& g);

  LearnerConfig config_;
  QNetParams online_;
  QNetParams target_;
  AdamState adam_;
  std::uint64_t steps_ = 0;
  std::uint64_t syncs_ = 0;
};

struct Checkpoint {
  std::string rules_version;
  std::string feature_version;
  std::uint64_t config_hash = 0;
  std::uint64_t train_steps = 0;
  std::uint64_t target_syncs = 0;
  std::uint64_t snapshot_version = 0;
  Recurrence recurrence = Recurrence::kLstm;
  QNetParams online;
  QNetParams target;
  AdamState adam;

  Checkpoint() : adam(NetShape{}) {}
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Checkpoint make_checkpoint(const Learner& learner, std::uint64_t config_hash,
                           std::uint64_t snapshot_version);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Rejects other rule sets or feature layouts.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint_file(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint_file(const std::string& path);

}  // namespace fogduel
