#include "fogduel/verify.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <random>

#include "fogduel/actor.hpp"
#include "fogduel/learner.hpp"
#include "fogduel/replay.hpp"

namespace fogduel::verify {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

StoredSequence random_tiny_sequence(std::mt19937_64& rng, int memory) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  StoredSequence s;
  s.valid_length = 1 + static_cast<int>(rng() % 6);
  for (int t = 0; t < s.valid_length; ++t) {
    for (auto& v : s.features[t]) v = u(rng);
    s.actions[t] = static_cast<std::uint8_t>(rng() % 3);
  }
  s.boundary = HiddenState::zero(memory);
  for (auto& v : s.boundary.h) v = u(rng) - 0.5;
  for (auto& v : s.boundary.c) v = 2.0 * u(rng) - 1.0;
  s.terminal = rng() % 2 == 0;
  s.reward = s.terminal ? 2.0 * u(rng) - 1.0 : 0.0;
  return s;
}

}  // namespace

double reward_max_error(int triples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> score(0.0, 5000.0);
  std::uniform_real_distribution<double> decay(0.9, 1.0);
  double worst = 0.0;
  for (int i = 0; i < triples; ++i) {
    const double a = score(rng);
    const double b = rng() % 16 == 0 ? a : score(rng);
    const double t = static_cast<double>(rng() % 201);
    const double g = decay(rng);
    double expected = 0.0;
    if (a > 0.0 || b > 0.0) {
      double decayed = 1.0;
      for (int k = 0; k < static_cast<int>(t); ++k) decayed *= g;
      expected = decayed * (a - b) / (a > b ? a : b);
    }
    const double got = shaped_terminal_reward(a, b, t, g);
    if (shaped_terminal_reward(b, a, t, g) != -got) return kInf;
    if (a == b && got != 0.0) return kInf;
    worst = std::max(worst, std::abs(got - expected));
  }
  if (shaped_terminal_reward(0.0, 0.0, 5.0, 0.999) != 0.0) return kInf;
  return worst;
}

double target_max_error(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const NetShape shape{kFeatureDim, 5, 4, 3};
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    const QNetParams online = QNetParams::init_uniform(rng(), shape);
    // Every few instances the target equals the online net.
    const QNetParams target = k % 5 == 0 ? online : QNetParams::init_uniform(rng(), shape);
    const int n = 1 + static_cast<int>(rng() % 3);
    const double lambda = 0.9 + 0.099 * std::uniform_real_distribution<double>(0, 1)(rng);
    std::vector<StoredSequence> seqs;
    const int count = 1 + static_cast<int>(rng() % 4);
    for (int i = 0; i < count; ++i) seqs.push_back(random_tiny_sequence(rng, shape.memory));
    const auto got = n_step_targets(seqs, online, target, lambda, n);

    for (std::size_t i = 0; i < seqs.size(); ++i) {
      const StoredSequence& s = seqs[i];
      std::vector<FeatureVector> xs(s.features.begin(), s.features.begin() + s.valid_length);
      const Matrix qo = forward(online, xs, s.boundary).q;
      const Matrix qt = forward(target, xs, s.boundary).q;
      for (int t = 0; t < s.valid_length; ++t) {
        // Walk forward one step at a time until the terminal or n steps.
        bool valid = false;
        double value = 0.0;
        double discount = 1.0;
        for (int j = 0; j <= n && t + j < s.valid_length; ++j) {
          const int step = t + j;
          if (s.terminal && step == s.valid_length - 1) {
            valid = true;
            value = discount * s.reward;
            break;
          }
          if (j == n) {
            // Enumerate every action for the online argmax.
            int best = 0;
            for (int a = 0; a < 3; ++a) {
              if (qo(a, step) > qo(best, step)) best = a;
            }
            valid = true;
            value = discount * qt(best, step);
            break;
          }
          discount *= lambda;
        }
        if (valid != got[i].valid[t]) return kInf;
        if (valid) worst = std::max(worst, std::abs(value - got[i].value[t]));
      }
    }
  }
  return worst;
}

double finite_diff_max_error(int instances, std::uint64_t seed, int probes) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < instances; ++k) {
    const QNetParams p = QNetParams::init_uniform(rng());
    const int steps = 1 + static_cast<int>(rng() % 8);
    Matrix seq(kFeatureDim, steps);
    for (Eigen::Index i = 0; i < seq.size(); ++i) seq.data()[i] = u(rng);
    HiddenState init = HiddenState::zero(p.shape().memory);
    for (auto& v : init.h) v = u(rng) - 0.5;
    for (auto& v : init.c) v = 2.0 * u(rng) - 1.0;
    const Recurrence rec = k % 4 == 3 ? Recurrence::kStateless : Recurrence::kLstm;
    worst = std::max(worst, finite_diff_check(p, seq, init, rng(), probes, rec));
  }
  return worst;
}

double chi_square_critical_99(int dof) {
  return boost::math::quantile(boost::math::chi_squared(dof), 0.99);
}

ChiSquare replay_chi_square(int items, int segments, int draws,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pr(0.05, 10.0);
  SegmentedReplay replay(ReplayConfig{segments, static_cast<std::size_t>(items)});
  std::map<std::uint64_t, double> mass;
  double total = 0.0;
  for (int i = 0; i < items; ++i) {
    StoredSequence s;
    s.valid_length = 1;
    s.episode_id = static_cast<std::uint64_t>(i);
    const double p = pr(rng);
    replay.append(static_cast<std::uint32_t>(i % segments), std::span(&s, 1), std::span(&p, 1));
    mass[s.episode_id] = std::pow(p, 0.6);
    total += mass[s.episode_id];
  }
  std::map<std::uint64_t, int> counts;
  for (int d = 0; d < draws; ++d) counts[replay.sample(1, rng)[0].sequence.episode_id]++;
  ChiSquare out;
  for (const auto& [id, m] : mass) {
    const double expected = draws * m / total;
    const double diff = counts[id] - expected;
    out.statistic += diff * diff / expected;
  }
  out.dof = items - 1;
  out.critical_99 = chi_square_critical_99(out.dof);
  return out;
}

std::string replay_interleavings(int ops, std::uint64_t seed) {
  constexpr int kSegments = 4;
  constexpr std::size_t kCap = 8;
  SegmentedReplay replay(ReplayConfig{kSegments, kCap});
  std::vector<std::deque<std::uint64_t>> model(kSegments);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> td(0.0, 3.0);
  std::uint64_t next = 0;
  for (int op = 0; op < ops; ++op) {
    const auto seg = static_cast<std::uint32_t>(rng() % kSegments);
    if (rng() % 3 != 0 || replay.size() < 4) {
      std::vector<StoredSequence> items(1 + rng() % 3);
      for (auto& s : items) {
        s.valid_length = 1;
        s.episode_id = next;
        model[seg].push_back(next++);
        if (model[seg].size() > kCap) model[seg].pop_front();
      }
      replay.append(seg, items);
    } else {
      const auto batch = replay.sample(4, rng);
      std::vector<ReplayRef> refs;
      std::vector<double> errs;
      for (const auto& b : batch) {
        const auto& live = model[b.ref.segment];
        if (std::find(live.begin(), live.end(), b.sequence.episode_id) == live.end()) {
          return "op " + std::to_string(op) + ": sampled an evicted sequence";
        }
        refs.push_back(b.ref);
        errs.push_back(td(rng));
      }
      replay.update_priorities(refs, errs);
    }
    if (replay.audit() > 1e-9) return "op " + std::to_string(op) + ": sum tree out of balance";
    const auto stats = replay.stats();
    for (int s = 0; s < kSegments; ++s) {
      if (stats.segments[s].size != model[s].size()) {
        return "op " + std::to_string(op) + ": segment size disagrees with FIFO model";
      }
    }
  }
  return {};
}

std::string epsilon_schedule() {
  if (epsilon_for(0, 8, 0.4, 7) != 0.4) return "i = 0 does not give the base epsilon";
  const double last = epsilon_for(7, 8, 0.4, 7);
  if (last != std::pow(0.4, 8.0) || std::abs(last - 6.5536e-4) > 1e-18) {
    return "i = N-1 does not give 0.4^8";
  }
  if (epsilon_for(0, 1000, 0.7, 11) != 0.7) return "high-exploration base is off";
  for (int n : {2, 8, 64, 1000}) {
    for (int i = 1; i < n; ++i) {
      if (!(epsilon_for(i, n, 0.4, 7) < epsilon_for(i - 1, n, 0.4, 7))) {
        return "schedule not strictly decreasing at N = " + std::to_string(n);
      }
    }
  }
  return {};
}

}  // namespace fogduel::verify
