#include "fogduel/actor.hpp"

#include <cmath>

#include "fogduel/bytes.hpp"

namespace fogduel {

namespace {

constexpr std::uint32_t kRecordMagic = 0x50454446;  // "FDEP"
constexpr std::uint32_t kRecordVersion = 1;

void put_sequence(ByteWriter& w, const StoredSequence& s) {
  w.put(s.opponent_id);
  w.put(s.valid_length);
  w.put(s.start_tick);
  w.put(s.episode_id);
  w.put<std::uint8_t>(s.terminal ? 1 : 0);
  w.put(s.reward);
  for (int t = 0; t < s.valid_length; ++t) w.put_doubles(s.features[t]);
  w.put_bytes(std::span(s.actions.data(), static_cast<std::size_t>(s.valid_length)));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.boundary.h.size()));
  w.put_doubles(s.boundary.h);
  w.put_doubles(s.boundary.c);
}

StoredSequence get_sequence(ByteReader& r) {
  StoredSequence s;
  s.opponent_id = r.get<std::uint32_t>();
  s.valid_length = r.get<std::int32_t>();
  if (s.valid_length < 1 || s.valid_length > kSequenceLength) {
    throw RecordFormatError("sequence valid length out of range");
  }
  s.start_tick = r.get<std::int32_t>();
  s.episode_id = r.get<std::uint64_t>();
  s.terminal = r.get<std::uint8_t>() != 0;
  s.reward = r.get<double>();
  for (int t = 0; t < s.valid_length; ++t) r.get_doubles(s.features[t]);
  const auto acts = r.get_bytes(static_cast<std::size_t>(s.valid_length));
  std::copy(acts.begin(), acts.end(), s.actions.begin());
  const auto m = r.get<std::uint32_t>();
  if (m > 4096) throw RecordFormatError("implausible hidden state width");
  s.boundary.h.resize(m);
  s.boundary.c.resize(m);
  r.get_doubles(s.boundary.h);
  r.get_doubles(s.boundary.c);
  return s;
}

}  // namespace

double epsilon_for(int index, int count, double epsilon_base, double alpha) {
  if (count < 1 || index < 0 || index >= count) {
    throw std::invalid_argument("actor index must lie in [0, count)");
  }
  if (count == 1) return epsilon_base;
  return std::pow(epsilon_base,
                  1.0 + alpha * static_cast<double>(index) / (count - 1));
}

double ActorConfig::epsilon() const {
  return evaluation ? 0.0 : epsilon_for(index, count, epsilon_base, alpha);
}

std::vector<std::string> ActorConfig::violations() const {
  std::vector<std::string> out;
  if (count < 1) out.push_back("actor count must be >= 1");
  if (index < 0 || index >= count) out.push_back("actor index must lie in [0, count)");
  if (!(epsilon_base > 0.0 && epsilon_base < 1.0)) out.push_back("epsilon must lie in (0, 1)");
  if (!(alpha >= 0.0)) out.push_back("alpha must be >= 0");
  if (!(gamma_r > 0.0 && gamma_r <= 1.0)) out.push_back("gamma_r must lie in (0, 1]");
  return out;
}

MacroAction greedy_legal(std::span<const double> q, ActionMask legal) {
  int best = -1;
  for (int a = 0; a < kNumActions; ++a) {
    if (!mask_has(legal, action_from_index(a))) continue;
    if (best < 0 || q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
  }
  if (best < 0) throw ContractViolation("legal action set is empty");
  return action_from_index(best);
}

ActResult act(const QNetParams& params, const FeatureVector& features,
              const HiddenState& hidden, double epsilon, ActionMask legal,
              std::mt19937_64& rng, Recurrence recurrence) {
  if (legal == 0) throw ContractViolation("legal action set is empty");
  StepOutput step = forward_step(params, features, hidden, recurrence);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ActResult out;
  out.next = std::move(step.next);
  if (unit(rng) < epsilon) {
    const auto choices = mask_to_actions(legal);
    std::uniform_int_distribution<std::size_t> pick(0, choices.size() - 1);
    out.action = choices[pick(rng)];
    out.explored = true;
  } else {
    out.action = greedy_legal(step.q, legal);
  }
  return out;
}

std::vector<Window> tile_episode(int length) {
  std::vector<Window> out;
  for (int start = 0; start < length; start += kSequenceStride) {
    out.push_back({start, std::min(kSequenceLength, length - start)});
  }
  return out;
}

EpisodeRecord run_episode(Env& env, const QNetParams& params,
                          const ActorConfig& config, std::uint64_t seed,
                          std::uint64_t snapshot_version,
                          std::uint64_t episode_id) {
  const int memory = params.shape().memory;
  std::mt19937_64 rng(splitmix64(seed ^ 0xAC7011ULL));
  const double eps = config.epsilon();

  ObservationFrame obs = env.reset(seed, config.opponent);
  HistoryFeatures history;
  HiddenState hidden = HiddenState::zero(memory);

  std::vector<FeatureVector> features;
  std::vector<std::uint8_t> actions;
  std::vector<HiddenState> hiddens;  // state before each step
  EpisodeRecord rec;
  StepResult res;
  for (;;) {
    history = update_history(history, obs);
    features.push_back(encode(obs, history, env.rules()));
    hiddens.push_back(hidden);
    const ActionMask legal = legal_mask(obs.own, env.rules());
    ActResult a = act(params, features.back(), hidden, eps, legal, rng, config.recurrence);
    actions.push_back(static_cast<std::uint8_t>(to_index(a.action)));
    hidden = std::move(a.next);
    res = env.step(a.action);
    if (res.illegal) ++rec.illegal_actions;
    obs = res.obs;
    if (res.terminal) break;
  }

  const int length = static_cast<int>(features.size());
  rec.opponent = config.opponent;
  rec.segment = config.segment;
  rec.winner = res.winner;
  rec.win = res.winner == Winner::kAgent;
  rec.length = length;
  rec.score_agent = res.score_agent;
  rec.score_opponent = res.score_opponent;
  rec.reward = terminal_reward(config.reward_mode, res.score_agent,
                               res.score_opponent, env.state().tick, config.gamma_r);
  rec.actor_index = config.index;
  rec.snapshot_version = snapshot_version;
  rec.episode_id = episode_id;
  rec.seed = seed;

  for (const Window& w : tile_episode(length)) {
    StoredSequence s;
    s.opponent_id = config.segment;
    s.valid_length = w.length;
    s.start_tick = w.start;
    s.episode_id = episode_id;
    s.boundary = hiddens[static_cast<std::size_t>(w.start)];
    for (int t = 0; t < w.length; ++t) {
      s.features[t] = features[static_cast<std::size_t>(w.start + t)];
      s.actions[t] = actions[static_cast<std::size_t>(w.start + t)];
    }
    s.terminal = w.start + w.length == length;
    s.reward = s.terminal ? rec.reward : 0.0;
    rec.sequences.push_back(std::move(s));
  }
  return rec;
}

std::vector<std::uint8_t> encode_record(const EpisodeRecord& rec) {
  ByteWriter p;
  p.put_string(kRulesVersion);
  p.put_string(kFeatureLayoutVersion);
  p.put(static_cast<std::uint8_t>(rec.opponent));
  p.put(rec.segment);
  p.put(rec.reward);
  p.put<std::uint8_t>(rec.win ? 1 : 0);
  p.put(static_cast<std::uint8_t>(rec.winner));
  p.put(rec.length);
  p.put(rec.score_agent);
  p.put(rec.score_opponent);
  p.put(rec.actor_index);
  p.put(rec.snapshot_version);
  p.put(rec.episode_id);
  p.put(rec.seed);
  p.put(rec.illegal_actions);
  p.put<std::uint32_t>(static_cast<std::uint32_t>(rec.sequences.size()));
  for (const auto& s : rec.sequences) put_sequence(p, s);

  ByteWriter w;
  w.put(kRecordMagic);
  w.put(kRecordVersion);
  w.put<std::uint64_t>(p.bytes().size());
  w.put_bytes(p.bytes());
  return w.release();
}

EpisodeRecord decode_record(std::span<const std::uint8_t> bytes) {
  try {
    ByteReader outer(bytes);
    if (outer.get<std::uint32_t>() != kRecordMagic) {
      throw RecordFormatError("not an episode record");
    }
    if (const auto v = outer.get<std::uint32_t>(); v != kRecordVersion) {
      throw RecordFormatError("unsupported record version " + std::to_string(v));
    }
    const auto n = outer.get<std::uint64_t>();
    if (n != outer.remaining()) throw RecordFormatError("record length prefix mismatch");
    ByteReader r(outer.get_bytes(static_cast<std::size_t>(n)));
    if (r.get_string() != kRulesVersion) throw RecordFormatError("record from another rule set");
    if (r.get_string() != kFeatureLayoutVersion) {
      throw RecordFormatError("record uses another feature layout");
    }
    EpisodeRecord rec;
    const auto opp = r.get<std::uint8_t>();
    if (opp >= kNumScriptedPolicies) throw RecordFormatError("unknown opponent id");
    rec.opponent = static_cast<ScriptedPolicyId>(opp);
    rec.segment = r.get<std::uint32_t>();
    rec.reward = r.get<double>();
    rec.win = r.get<std::uint8_t>() != 0;
    rec.winner = static_cast<Winner>(r.get<std::uint8_t>());
    rec.length = r.get<std::int32_t>();
    rec.score_agent = r.get<double>();
    rec.score_opponent = r.get<double>();
    rec.actor_index = r.get<std::int32_t>();
    rec.snapshot_version = r.get<std::uint64_t>();
    rec.episode_id = r.get<std::uint64_t>();
    rec.seed = r.get<std::uint64_t>();
    rec.illegal_actions = r.get<std::int32_t>();
    const auto count = r.get<std::uint32_t>();
    if (count > 1024) throw RecordFormatError("implausible sequence count");
    for (std::uint32_t i = 0; i < count; ++i) rec.sequences.push_back(get_sequence(r));
    if (r.remaining() != 0) throw RecordFormatError("trailing bytes in record");
    return rec;
  } catch (const TruncatedInput& e) {
    throw RecordFormatError(std::string("truncated record: ") + e.what());
  }
}

std::uint64_t SnapshotChannel::publish(QNetParams params) {
  std::uint64_t v;
  {
    std::lock_guard lock(mu_);
    v = latest_.version + 1;
    latest_ = {std::make_shared<const QNetParams>(std::move(params)), v};
  }
  cv_.notify_all();
  return v;
}

Snapshot SnapshotChannel::pull() const {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return latest_.version > 0 || closed_; });
  if (latest_.version == 0) throw ChannelClosed();
  return latest_;
}

std::optional<Snapshot> SnapshotChannel::try_pull() const {
  std::lock_guard lock(mu_);
  if (latest_.version == 0) return std::nullopt;
  return latest_;
}

std::uint64_t SnapshotChannel::latest_version() const {
  std::lock_guard lock(mu_);
  return latest_.version;
}

void SnapshotChannel::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

}  // namespace fogduel
