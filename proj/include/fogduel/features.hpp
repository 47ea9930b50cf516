#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "fogduel/sim.hpp"

namespace fogduel {

inline constexpr std::string_view kFeatureLayoutVersion = "features-v1";
inline constexpr int kFeatureDim = 24;

using FeatureVector = std::array<double, kFeatureDim>;

enum class EverSeen : std::uint8_t {
  kUnitA = 0,
  kUnitB = 1,
  kUnitC = 2,
  kDefenses = 3,
  kExpanded = 4,  // bases > 1
  kTech = 5,      // tech > 0
};
inline constexpr int kNumEverSeen = 6;

// Enemy information that survives the fog: the last snapshot we saw and
// sticky flags for everything ever observed.
struct HistoryFeatures {
  PlayerState last_seen{};
  std::int32_t last_seen_tick = -1;  // -1: never seen
  std::array<bool, kNumEverSeen> ever_seen{};

  bool seen(EverSeen f) const { return ever_seen[static_cast<int>(f)]; }
  bool operator==(const HistoryFeatures&) const = default;
};

HistoryFeatures update_history(const HistoryFeatures& h,
                               const ObservationFrame& obs);

// Layout (index: meaning):
//   0..8   own player block, normalized by caps
//   9      tick / max_ticks
//   10     enemy currently visible
//   11..19 last-seen enemy block, zeros if never seen
//   20     staleness of the last sighting, 1 if never seen
//   21..23 ever-seen flags: tech > 0, defenses, bases > 1
// A player block is minerals, workers, army A, army B, army C, bases,
// defenses, tech, game score.
FeatureVector encode(const ObservationFrame& obs, const HistoryFeatures& h,
                     const Rules& rules = {});

// Index -> human-readable meaning, used to generate features.md.
std::string_view feature_name(int index);
std::string feature_layout_markdown();

}  // namespace fogduel
