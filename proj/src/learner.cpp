#include "fogduel/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "fogduel/bytes.hpp"

namespace fogduel {

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x4B434446;  // "FDCK"
constexpr std::uint32_t kCheckpointVersion = 1;

int argmax(const Matrix& q, Eigen::Index col) {
  int best = 0;
  for (int a = 1; a < q.rows(); ++a) {
    if (q(a, col) > q(best, col)) best = a;
  }
  return best;
}

}  // namespace

std::vector<std::string> LearnerConfig::violations() const {
  std::vector<std::string> out;
  if (!(lambda > 0.0 && lambda < 1.0)) out.push_back("lambda must lie in (0, 1)");
  if (n_step < 1) out.push_back("n_step must be >= 1");
  if (!(gamma_r > 0.0 && gamma_r <= 1.0)) out.push_back("gamma_r must lie in (0, 1]");
  if (batch_size < 1) out.push_back("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) out.push_back("learning_rate must be > 0");
  if (target_sync_period < 1) out.push_back("target_sync_period must be >= 1");
  if (!(clip_norm > 0.0)) out.push_back("clip_norm must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) out.push_back("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) out.push_back("adam_beta2 must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) out.push_back("adam_epsilon must be > 0");
  return out;
}

double shaped_terminal_reward(double score_our, double score_enemy,
                              double timedecay, double gamma_r) {
  if (!(score_our >= 0.0) || !(score_enemy >= 0.0)) {
    throw std::invalid_argument("scores must be non-negative");
  }
  const double denom = std::max(score_our, score_enemy);
  if (denom == 0.0) return 0.0;
  return std::pow(gamma_r, timedecay) * (score_our - score_enemy) / denom;
}

double sign_terminal_reward(double score_our, double score_enemy) {
  if (!(score_our >= 0.0) || !(score_enemy >= 0.0)) {
    throw std::invalid_argument("scores must be non-negative");
  }
  if (score_our > score_enemy) return 1.0;
  if (score_our < score_enemy) return -1.0;
  return 0.0;
}

double terminal_reward(RewardMode mode, double score_our, double score_enemy,
                       double timedecay, double gamma_r) {
  return mode == RewardMode::kSignOnly
             ? sign_terminal_reward(score_our, score_enemy)
             : shaped_terminal_reward(score_our, score_enemy, timedecay, gamma_r);
}

std::vector<SequenceTargets> n_step_targets_from_q(
    std::span<const StoredSequence> seqs, std::span<const Matrix> q_online,
    std::span<const Matrix> q_target, double lambda, int n) {
  std::vector<SequenceTargets> out(seqs.size());
  const double lambda_n = std::pow(lambda, n);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const StoredSequence& s = seqs[i];
    const int valid = s.valid_length;
    const int last = valid - 1;
    const auto col = static_cast<Eigen::Index>(i);
    for (int t = 0; t < valid; ++t) {
      if (s.terminal && last - t <= n) {
        out[i].value[t] = std::pow(lambda, last - t) * s.reward;
        out[i].valid[t] = true;
      } else if (t + n <= last) {
        const Matrix& qo = q_online[static_cast<std::size_t>(t + n)];
        const Matrix& qt = q_target[static_cast<std::size_t>(t + n)];
        out[i].value[t] = lambda_n * qt(argmax(qo, col), col);
        out[i].valid[t] = true;
      }
    }
  }
  return out;
}

SequenceBatch make_sequence_batch(std::span<const StoredSequence> seqs,
                                  int memory) {
  const auto b = static_cast<Eigen::Index>(seqs.size());
  SequenceBatch batch;
  batch.inputs.assign(kSequenceLength, Matrix::Zero(kFeatureDim, b));
  batch.h0 = Matrix::Zero(memory, b);
  batch.c0 = Matrix::Zero(memory, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const StoredSequence& s = seqs[static_cast<std::size_t>(i)];
    for (int t = 0; t < s.valid_length; ++t) {
      for (int d = 0; d < kFeatureDim; ++d) batch.inputs[t](d, i) = s.features[t][d];
    }
    if (s.boundary.h.size() == static_cast<std::size_t>(memory)) {
      for (int m = 0; m < memory; ++m) {
        batch.h0(m, i) = s.boundary.h[m];
        batch.c0(m, i) = s.boundary.c[m];
      }
    } else if (!s.boundary.h.empty()) {
      throw ContractViolation("stored boundary state has the wrong width");
    }
  }
  return batch;
}

std::vector<SequenceTargets> n_step_targets(
    std::span<const StoredSequence> seqs, const QNetParams& online,
    const QNetParams& target, double lambda, int n, Recurrence recurrence) {
  const SequenceBatch batch = make_sequence_batch(seqs, online.shape().memory);
  const ForwardTrace on = forward_batch(online, batch, recurrence);
  const ForwardTrace tg = forward_batch(target, batch, recurrence);
  return n_step_targets_from_q(seqs, on.q, tg.q, lambda, n);
}

Learner::Learner(LearnerConfig config, QNetParams init)
    : config_(config),
      online_(init),
      target_(std::move(init)),
      adam_(online_.shape()) {
  const auto v = config_.violations();
  if (!v.empty()) throw std::invalid_argument("invalid learner config: " + v.front());
}

TrainStepResult Learner::train_step(SegmentedReplay& replay,
                                    std::mt19937_64& rng) {
  const auto batch = replay.sample(static_cast<std::size_t>(config_.batch_size), rng);
  TrainStepResult r = train_on(batch);
  replay.update_priorities(r.refs, r.priorities);
  return r;
}

TrainStepResult Learner::train_on(std::span<const SampledSequence> batch) {
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const ReplayRef& x = batch[a].ref;
    const ReplayRef& y = batch[b].ref;
    return std::tie(x.segment, x.slot, x.serial) < std::tie(y.segment, y.slot, y.serial);
  });
  std::vector<StoredSequence> seqs;
  std::vector<double> weights;
  TrainStepResult result;
  seqs.reserve(batch.size());
  for (std::size_t k : order) {
    seqs.push_back(batch[k].sequence);
    weights.push_back(batch[k].weight);
    result.refs.push_back(batch[k].ref);
  }

  const auto b = static_cast<Eigen::Index>(seqs.size());
  const SequenceBatch input = make_sequence_batch(seqs, online_.shape().memory);
  const ForwardTrace on = forward_batch(online_, input, config_.recurrence);
  const ForwardTrace tg = forward_batch(target_, input, config_.recurrence);
  const auto targets =
      n_step_targets_from_q(seqs, on.q, tg.q, config_.lambda, config_.n_step);

  int unmasked = 0;
  for (const auto& t : targets) unmasked += static_cast<int>(std::count(t.valid.begin(), t.valid.end(), true));

  std::vector<Matrix> dq(kSequenceLength,
                         Matrix::Zero(online_.shape().actions, b));
  double loss = 0.0;
  result.priorities.assign(seqs.size(), 0.0);
  if (unmasked > 0) {
    const double inv = 1.0 / unmasked;
    for (Eigen::Index i = 0; i < b; ++i) {
      const auto& s = seqs[static_cast<std::size_t>(i)];
      const auto& tgt = targets[static_cast<std::size_t>(i)];
      const double w = weights[static_cast<std::size_t>(i)];
      double worst = 0.0;
      for (int t = 0; t < s.valid_length; ++t) {
        if (!tgt.valid[t]) continue;
        const int a = s.actions[t];
        const double delta = tgt.value[t] - on.q[t](a, i);
        loss += w * 0.5 * delta * delta * inv;
        dq[t](a, i) = -w * delta * inv;
        worst = std::max(worst, std::abs(delta));
      }
      result.priorities[static_cast<std::size_t>(i)] = worst;
    }
  }

  Gradients grads(online_.shape());
  backward_batch(online_, on, dq, grads);
  result.grad_norm = clip_global_norm(grads, config_.clip_norm);
  apply_adam(grads);

  ++steps_;
  if (steps_ % static_cast<std::uint64_t>(config_.target_sync_period) == 0) {
    sync_target();
    result.synced = true;
  }
  result.loss = loss;
  result.unmasked_steps = unmasked;
  result.step = steps_;
  return result;
}

void Learner::apply_adam(const Gradients& g) {
  ++adam_.step;
  const double b1 = config_.adam_beta1;
  const double b2 = config_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_.step));
  auto theta = online_.values();
  auto m = adam_.first.values();
  auto v = adam_.second.values();
  const auto grad = g.values();
  for (std::size_t k = 0; k < theta.size(); ++k) {
    m[k] = b1 * m[k] + (1.0 - b1) * grad[k];
    v[k] = b2 * v[k] + (1.0 - b2) * grad[k] * grad[k];
    theta[k] -= config_.learning_rate * (m[k] / c1) /
                (std::sqrt(v[k] / c2) + config_.adam_epsilon);
  }
}

void Learner::sync_target() {
  target_ = online_;
  ++syncs_;
}

void Learner::restore(QNetParams online, QNetParams target, AdamState adam,
                      std::uint64_t steps, std::uint64_t syncs) {
  if (!(online.shape() == online_.shape()) || !(target.shape() == online_.shape()) ||
      !(adam.first.shape() == online_.shape()) ||
      !(adam.second.shape() == online_.shape())) {
    throw CheckpointError("checkpoint network shape does not match the config");
  }
  online_ = std::move(online);
  target_ = std::move(target);
  adam_ = std::move(adam);
  steps_ = steps;
  syncs_ = syncs;
}

Checkpoint make_checkpoint(const Learner& learner, std::uint64_t config_hash,
                           std::uint64_t snapshot_version) {
  Checkpoint c;
  c.rules_version = std::string(kRulesVersion);
  c.feature_version = std::string(kFeatureLayoutVersion);
  c.config_hash = config_hash;
  c.train_steps = learner.steps();
  c.target_syncs = learner.syncs();
  c.snapshot_version = snapshot_version;
  c.recurrence = learner.config().recurrence;
  c.online = learner.online();
  c.target = learner.target();
  c.adam = learner.optimizer();
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ByteWriter w;
  w.put(kCheckpointMagic);
  w.put(kCheckpointVersion);
  w.put_string(ckpt.rules_version);
  w.put_string(ckpt.feature_version);
  w.put(ckpt.config_hash);
  w.put(ckpt.train_steps);
  w.put(ckpt.target_syncs);
  w.put(ckpt.snapshot_version);
  w.put(static_cast<std::uint8_t>(ckpt.recurrence));
  w.put(ckpt.adam.step);
  for (const QNetParams* p : {&ckpt.online, &ckpt.target, &ckpt.adam.first, &ckpt.adam.second}) {
    const auto blob = serialize(*p);
    w.put<std::uint64_t>(blob.size());
    w.put_bytes(blob);
  }
  return w.release();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  try {
    ByteReader r(bytes);
    if (r.get<std::uint32_t>() != kCheckpointMagic) {
      throw CheckpointError("not a checkpoint file");
    }
    if (const auto v = r.get<std::uint32_t>(); v != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(v));
    }
    Checkpoint c;
    c.rules_version = r.get_string();
    c.feature_version = r.get_string();
    if (c.rules_version != kRulesVersion) {
      throw CheckpointError("checkpoint was trained under rules '" + c.rules_version +
                            "', this build runs '" + std::string(kRulesVersion) + "'");
    }
    if (c.feature_version != kFeatureLayoutVersion) {
      throw CheckpointError("checkpoint uses feature layout '" + c.feature_version +
                            "', this build uses '" +
                            std::string(kFeatureLayoutVersion) + "'");
    }
    c.config_hash = r.get<std::uint64_t>();
    c.train_steps = r.get<std::uint64_t>();
    c.target_syncs = r.get<std::uint64_t>();
    c.snapshot_version = r.get<std::uint64_t>();
    const auto rec = r.get<std::uint8_t>();
    if (rec > 1) throw CheckpointError("unknown recurrence mode in checkpoint");
    c.recurrence = static_cast<Recurrence>(rec);
    c.adam.step = r.get<std::uint64_t>();
    for (QNetParams* p : {&c.online, &c.target, &c.adam.first, &c.adam.second}) {
      const auto n = r.get<std::uint64_t>();
      *p = deserialize(r.get_bytes(static_cast<std::size_t>(n)));
    }
    if (r.remaining() != 0) throw CheckpointError("trailing bytes after checkpoint");
    return c;
  } catch (const TruncatedInput& e) {
    throw CheckpointError(std::string("truncated checkpoint: ") + e.what());
  } catch (const SerializationError& e) {
    throw CheckpointError(std::string("bad network blob in checkpoint: ") + e.what());
  }
}

void write_checkpoint_file(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write to " + tmp + " failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw CheckpointError("cannot move checkpoint into place at " + path);
  }
}

Checkpoint read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace fogduel
