#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "doctest.h"
#include "fogduel/learner.hpp"

using namespace fogduel;

namespace {

NetShape tiny_shape(int actions) { return NetShape{kFeatureDim, 5, 4, actions}; }

StoredSequence random_sequence(std::mt19937_64& rng, int memory, int actions,
                               int max_len) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  StoredSequence s;
  s.valid_length = 1 + static_cast<int>(rng() % static_cast<unsigned>(max_len));
  for (int t = 0; t < s.valid_length; ++t) {
    for (auto& v : s.features[t]) v = u(rng);
    s.actions[t] = static_cast<std::uint8_t>(rng() % static_cast<unsigned>(actions));
  }
  s.boundary = HiddenState::zero(memory);
  for (auto& v : s.boundary.h) v = u(rng) - 0.5;
  for (auto& v : s.boundary.c) v = 2.0 * u(rng) - 1.0;
  s.terminal = rng() % 2 == 0;
  s.reward = s.terminal ? 2.0 * u(rng) - 1.0 : 0.0;
  return s;
}

// Unrolls the target definition one sequence at a time: walk k = 0..n ahead,
// stop at the terminal, otherwise bootstrap at exactly n steps.
struct OracleTarget {
  bool valid = false;
  double value = 0.0;
};
std::vector<OracleTarget> oracle_targets(const StoredSequence& s,
                                         const QNetParams& online,
                                         const QNetParams& target, double lambda,
                                         int n) {
  std::vector<FeatureVector> xs(s.features.begin(), s.features.begin() + s.valid_length);
  const Matrix qo = forward(online, xs, s.boundary).q;
  const Matrix qt = forward(target, xs, s.boundary).q;
  std::vector<OracleTarget> out(static_cast<std::size_t>(s.valid_length));
  for (int t = 0; t < s.valid_length; ++t) {
    double discount = 1.0;
    for (int k = 0; k <= n; ++k) {
      const int step = t + k;
      if (step >= s.valid_length) break;
      if (s.terminal && step == s.valid_length - 1) {
        out[t] = {true, discount * s.reward};
        break;
      }
      if (k == n) {
        int best = 0;
        double best_q = qo(0, step);
        for (int a = 1; a < qo.rows(); ++a) {
          if (qo(a, step) > best_q) {
            best_q = qo(a, step);
            best = a;
          }
        }
        out[t] = {true, discount * qt(best, step)};
        break;
      }
      discount *= lambda;
    }
  }
  return out;
}

SampledSequence as_sampled(StoredSequence s, std::uint32_t slot, double w = 1.0) {
  SampledSequence out;
  out.ref = {0, slot, slot};
  out.sequence = std::move(s);
  out.weight = w;
  out.probability = 1.0;
  return out;
}

}  // namespace

TEST_CASE("shaped reward examples") {
  CHECK(shaped_terminal_reward(100, 50, 0, 0.999) == 0.5);
  CHECK(shaped_terminal_reward(50, 100, 0, 0.999) == -0.5);
  CHECK(shaped_terminal_reward(0, 0, 40, 0.999) == 0.0);
  CHECK(shaped_terminal_reward(70, 70, 13, 0.999) == 0.0);
  CHECK(shaped_terminal_reward(0, 10, 0, 0.999) == -1.0);
  CHECK_THROWS_AS(shaped_terminal_reward(-1, 10, 0, 0.999), std::invalid_argument);
}

TEST_CASE("shaped reward is bounded, antisymmetric and decays") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> score(0.0, 3000.0);
  for (int i = 0; i < 2000; ++i) {
    const double a = score(rng), b = score(rng);
    const double t = static_cast<double>(rng() % 400);
    const double r = shaped_terminal_reward(a, b, t, 0.999);
    CHECK(std::abs(r) <= 1.0);
    CHECK(shaped_terminal_reward(b, a, t, 0.999) == -r);
    CHECK(std::abs(shaped_terminal_reward(a, b, t + 1, 0.999)) < std::abs(r));
    const double s = sign_terminal_reward(a, b);
    CHECK(s * r > 0.0);
  }
}

TEST_CASE("targets at and near the terminal") {
  const QNetParams p(tiny_shape(3));
  StoredSequence s;
  s.valid_length = 5;
  s.terminal = true;
  s.reward = 0.8;
  s.boundary = HiddenState::zero(4);
  const auto g = n_step_targets(std::span(&s, 1), p, p, 0.9, 3);
  CHECK(g[0].value[4] == 0.8);
  CHECK(g[0].value[3] == doctest::Approx(0.72).epsilon(1e-15));
  CHECK(g[0].value[1] == doctest::Approx(0.8 * 0.729).epsilon(1e-15));
  CHECK(g[0].valid[0]);
  CHECK(g[0].value[0] == 0.0);  // bootstraps into the zero network
  CHECK_FALSE(g[0].valid[5]);
}

TEST_CASE("constant networks give lambda^n times the constant") {
  QNetParams p(tiny_shape(3));
  p.val_b() = 2.5;
  StoredSequence s;
  s.valid_length = 8;
  s.boundary = HiddenState::zero(4);
  const auto g = n_step_targets(std::span(&s, 1), p, p, 0.997, 3);
  for (int t = 0; t < 8; ++t) {
    CHECK(g[0].valid[t] == (t + 3 <= 7));
    if (g[0].valid[t]) CHECK(g[0].value[t] == std::pow(0.997, 3) * 2.5);
  }
}

TEST_CASE("double-Q picks the action online and values it under the target") {
  QNetParams online(tiny_shape(2));
  QNetParams target(tiny_shape(2));
  online.adv_b() << 1.0, 0.0;
  target.val_b() = 2.0;
  target.adv_b() << 0.0, 1.0;  // target q = (1.5, 2.5)
  StoredSequence s;
  s.valid_length = 4;
  s.boundary = HiddenState::zero(4);
  const auto g = n_step_targets(std::span(&s, 1), online, target, 0.5, 3);
  CHECK(g[0].value[0] == 0.125 * 1.5);
  const auto plain = n_step_targets(std::span(&s, 1), target, target, 0.5, 3);
  CHECK(plain[0].value[0] == 0.125 * 2.5);
}

TEST_CASE("targets match the unrolled oracle on random tiny instances") {
  std::mt19937_64 rng(42);
  for (int instance = 0; instance < 200; ++instance) {
    const QNetParams online = QNetParams::init_uniform(1000 + instance, tiny_shape(3));
    const QNetParams target = QNetParams::init_uniform(5000 + instance, tiny_shape(3));
    const int n = 1 + static_cast<int>(rng() % 3);
    std::vector<StoredSequence> seqs;
    for (int i = 0; i < 4; ++i) seqs.push_back(random_sequence(rng, 4, 3, 6));
    const auto got = n_step_targets(seqs, online, target, 0.97, n);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const auto want = oracle_targets(seqs[i], online, target, 0.97, n);
      for (int t = 0; t < seqs[i].valid_length; ++t) {
        REQUIRE(got[i].valid[t] == want[t].valid);
        if (want[t].valid) CHECK(std::abs(got[i].value[t] - want[t].value) <= 1e-12);
      }
    }
  }
}

TEST_CASE("perfect network takes a zero step") {
  LearnerConfig cfg;
  Learner learner(cfg, QNetParams{});
  std::mt19937_64 rng(3);
  std::vector<SampledSequence> batch;
  for (std::uint32_t i = 0; i < 4; ++i) {
    auto s = random_sequence(rng, 64, kNumActions, 16);
    s.reward = 0.0;
    batch.push_back(as_sampled(std::move(s), i));
  }
  const auto r = learner.train_on(batch);
  CHECK(r.loss == 0.0);
  CHECK(r.grad_norm == 0.0);
  CHECK(learner.online() == QNetParams{});
}

TEST_CASE("single unmasked step with unit weight has loss half delta squared") {
  Learner learner(LearnerConfig{}, QNetParams{});
  StoredSequence s;
  s.valid_length = 1;
  s.terminal = true;
  s.reward = -0.6;
  s.boundary = HiddenState::zero(64);
  const std::array batch = {as_sampled(s, 0)};
  const auto r = learner.train_on(batch);
  CHECK(r.unmasked_steps == 1);
  CHECK(r.loss == 0.5 * 0.36);
  CHECK(r.priorities[0] == 0.6);
}

TEST_CASE("train step is order invariant and deterministic") {
  std::mt19937_64 rng(5);
  std::vector<SampledSequence> batch;
  std::uniform_real_distribution<double> w(0.2, 1.0);
  for (std::uint32_t i = 0; i < 6; ++i) {
    batch.push_back(as_sampled(random_sequence(rng, 64, kNumActions, 16), i, w(rng)));
  }
  auto shuffled = batch;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  Learner a(LearnerConfig{}, QNetParams::init_uniform(9));
  Learner b(LearnerConfig{}, QNetParams::init_uniform(9));
  const auto ra = a.train_on(batch);
  const auto rb = b.train_on(shuffled);
  CHECK(ra.loss == rb.loss);
  CHECK(ra.priorities == rb.priorities);
  CHECK(a.online() == b.online());
}

TEST_CASE("repeated steps on one batch reduce the loss") {
  std::mt19937_64 rng(6);
  std::vector<SampledSequence> batch;
  for (std::uint32_t i = 0; i < 8; ++i) {
    auto s = random_sequence(rng, 64, kNumActions, 16);
    s.terminal = true;
    s.reward = (i % 2 == 0) ? 0.7 : -0.4;
    batch.push_back(as_sampled(std::move(s), i));
  }
  LearnerConfig cfg;
  cfg.learning_rate = 1e-3;
  Learner learner(cfg, QNetParams::init_uniform(2));
  const double first = learner.train_on(batch).loss;
  double last = first;
  for (int k = 0; k < 200; ++k) last = learner.train_on(batch).loss;
  CHECK(last < 0.2 * first);
}

TEST_CASE("target network follows the sync schedule") {
  std::mt19937_64 rng(7);
  std::vector<SampledSequence> batch;
  for (std::uint32_t i = 0; i < 3; ++i) {
    batch.push_back(as_sampled(random_sequence(rng, 64, kNumActions, 16), i));
  }
  LearnerConfig cfg;
  cfg.target_sync_period = 3;
  cfg.learning_rate = 1e-2;
  const QNetParams init = QNetParams::init_uniform(4);
  Learner learner(cfg, init);
  for (int k = 1; k <= 7; ++k) {
    const auto r = learner.train_on(batch);
    CHECK(r.synced == (k % 3 == 0));
    if (k < 3) {
      CHECK(learner.target() == init);
      CHECK_FALSE(learner.online() == init);
    }
    if (k % 3 == 0) CHECK(learner.target() == learner.online());
  }
  CHECK(learner.syncs() == 2);
}

TEST_CASE("train step samples replay and writes priorities back") {
  SegmentedReplay replay(ReplayConfig{2, 64});
  std::mt19937_64 rng(8);
  std::vector<StoredSequence> seqs;
  for (int i = 0; i < 40; ++i) seqs.push_back(random_sequence(rng, 64, kNumActions, 16));
  replay.append(0, std::span(seqs).first(20));
  replay.append(1, std::span(seqs).subspan(20));
  LearnerConfig cfg;
  Learner learner(cfg, QNetParams::init_uniform(1));
  const auto r = learner.train_step(replay, rng);
  REQUIRE(r.refs.size() == 32);
  for (std::size_t i = 0; i < r.refs.size(); ++i) {
    CHECK(replay.priority(r.refs[i]) == doctest::Approx(r.priorities[i] + 1e-3).epsilon(1e-12));
  }
  CHECK(replay.audit() <= 1e-9);

  SegmentedReplay small(ReplayConfig{1, 8});
  small.append(0, std::span(seqs).first(4));
  CHECK_THROWS_AS(learner.train_step(small, rng), InsufficientData);
}

TEST_CASE("checkpoints round-trip and reject foreign rule sets") {
  std::mt19937_64 rng(9);
  std::vector<SampledSequence> batch = {
      as_sampled(random_sequence(rng, 64, kNumActions, 16), 0)};
  Learner learner(LearnerConfig{}, QNetParams::init_uniform(3));
  learner.train_on(batch);
  const Checkpoint c = make_checkpoint(learner, 0xABCDEF, 7);
  const auto bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.online == learner.online());
  CHECK(back.target == learner.target());
  CHECK(back.adam.first == learner.optimizer().first);
  CHECK(back.adam.second == learner.optimizer().second);
  CHECK(back.adam.step == 1);
  CHECK(back.train_steps == 1);
  CHECK(back.config_hash == 0xABCDEF);
  CHECK(back.snapshot_version == 7);
  CHECK(encode_checkpoint(back) == bytes);

  Checkpoint foreign = c;
  foreign.rules_version = "fogduel-v0";
  CHECK_THROWS_AS(decode_checkpoint(encode_checkpoint(foreign)), CheckpointError);
  const std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 3);
  CHECK_THROWS_AS(decode_checkpoint(cut), CheckpointError);

  const std::string path = "learner_ckpt_test.bin";
  write_checkpoint_file(path, c);
  CHECK(read_checkpoint_file(path).online == c.online);
  std::remove(path.c_str());
}

TEST_CASE("learner config violations are all reported") {
  LearnerConfig cfg;
  CHECK(cfg.violations().empty());
  cfg.lambda = 1.0;
  cfg.n_step = 0;
  cfg.gamma_r = 0.0;
  CHECK(cfg.violations().size() == 3);
}
