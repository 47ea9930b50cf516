#include "fogduel/features.hpp"

#include <algorithm>
#include <sstream>

namespace fogduel {

namespace {

constexpr double kCapMinerals = 500.0;
constexpr double kCapWorkers = 32.0;
constexpr double kCapArmy = 40.0;
constexpr double kCapBases = 4.0;
constexpr double kCapDefenses = 10.0;
constexpr double kCapTech = 2.0;
constexpr double kCapScore = 2000.0;
constexpr double kStalenessHorizon = 50.0;

constexpr int kPlayerBlock = 9;
constexpr int kOwnOffset = 0;
constexpr int kTickIndex = 9;
constexpr int kVisibleIndex = 10;
constexpr int kLastSeenOffset = 11;
constexpr int kStalenessIndex = 20;
constexpr int kFlagsOffset = 21;

constexpr std::array<std::string_view, kFeatureDim> kNames = {
    "own.minerals / 500",
    "own.workers / 32",
    "own.army_A / 40",
    "own.army_B / 40",
    "own.army_C / 40",
    "own.bases / 4",
    "own.defenses / 10",
    "own.tech / 2",
    "own.game_score / 2000",
    "tick / max_ticks",
    "enemy_visible (0/1)",
    "last_seen.minerals / 500",
    "last_seen.workers / 32",
    "last_seen.army_A / 40",
    "last_seen.army_B / 40",
    "last_seen.army_C / 40",
    "last_seen.bases / 4",
    "last_seen.defenses / 10",
    "last_seen.tech / 2",
    "last_seen.game_score / 2000",
    "staleness = min(1, (tick - last_seen_tick) / 50); 1 if never seen",
    "ever_seen: enemy tech > 0",
    "ever_seen: enemy defenses > 0",
    "ever_seen: enemy bases > 1",
};

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

void write_player(const PlayerState& p, FeatureVector& out, int offset) {
  out[offset + 0] = clip01(static_cast<double>(p.minerals) / kCapMinerals);
  out[offset + 1] = clip01(p.workers / kCapWorkers);
  out[offset + 2] = clip01(p.army[0] / kCapArmy);
  out[offset + 3] = clip01(p.army[1] / kCapArmy);
  out[offset + 4] = clip01(p.army[2] / kCapArmy);
  out[offset + 5] = clip01(p.bases / kCapBases);
  out[offset + 6] = clip01(p.defenses / kCapDefenses);
  out[offset + 7] = clip01(p.tech / kCapTech);
  out[offset + 8] = clip01(game_score(p) / kCapScore);
}

}  // namespace

HistoryFeatures update_history(const HistoryFeatures& h,
                               const ObservationFrame& obs) {
  if (!obs.enemy_visible) return h;
  HistoryFeatures out = h;
  out.last_seen = obs.enemy;
  out.last_seen_tick = obs.tick;
  const PlayerState& e = obs.enemy;
  auto mark = [&out](EverSeen f, bool evidence) {
    out.ever_seen[static_cast<int>(f)] =
        out.ever_seen[static_cast<int>(f)] || evidence;
  };
  mark(EverSeen::kUnitA, e.army[0] > 0);
  mark(EverSeen::kUnitB, e.army[1] > 0);
  mark(EverSeen::kUnitC, e.army[2] > 0);
  mark(EverSeen::kDefenses, e.defenses > 0);
  mark(EverSeen::kExpanded, e.bases > 1);
  mark(EverSeen::kTech, e.tech > 0);
  return out;
}

FeatureVector encode(const ObservationFrame& obs, const HistoryFeatures& h,
                     const Rules& rules) {
  FeatureVector v{};
  write_player(obs.own, v, kOwnOffset);
  v[kTickIndex] = clip01(static_cast<double>(obs.tick) / rules.max_ticks);
  v[kVisibleIndex] = obs.enemy_visible ? 1.0 : 0.0;
  if (h.last_seen_tick >= 0) {
    write_player(h.last_seen, v, kLastSeenOffset);
    v[kStalenessIndex] =
        clip01((obs.tick - h.last_seen_tick) / kStalenessHorizon);
  } else {
    v[kStalenessIndex] = 1.0;
  }
  v[kFlagsOffset + 0] = h.seen(EverSeen::kTech) ? 1.0 : 0.0;
  v[kFlagsOffset + 1] = h.seen(EverSeen::kDefenses) ? 1.0 : 0.0;
  v[kFlagsOffset + 2] = h.seen(EverSeen::kExpanded) ? 1.0 : 0.0;
  return v;
}

std::string_view feature_name(int index) {
  return kNames.at(static_cast<std::size_t>(index));
}

std::string feature_layout_markdown() {
  std::ostringstream out;
  out << "# Feature layout (" << kFeatureLayoutVersion << ")\n\n"
      << "Every entry is clipped to [0, 1]. Values above their cap read as 1.\n\n"
      << "| index | meaning |\n|---|---|\n";
  for (int i = 0; i < kFeatureDim; ++i) {
    out << "| " << i << " | " << kNames[i] << " |\n";
  }
  return out.str();
}

static_assert(kFlagsOffset + 3 == kFeatureDim);
static_assert(kLastSeenOffset + kPlayerBlock == kStalenessIndex);

}  // namespace fogduel
