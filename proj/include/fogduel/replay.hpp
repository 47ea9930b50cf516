#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <random>
#include <span>
#include <vector>

#include "fogduel/features.hpp"
#include "fogduel/net.hpp"

namespace fogduel {

inline constexpr int kSequenceLength = 16;
inline constexpr int kSequenceStride = 8;

// Binary tree of partial sums over a power-of-two number of leaves.
class SumTree {
 public:
  explicit SumTree(std::size_t min_capacity);

  std::size_t capacity() const { return capacity_; }
  double total() const { return nodes_[1]; }
  double leaf(std::size_t i) const { return nodes_[capacity_ + i]; }

  // Sets a leaf and recomputes its ancestors from their children.
  void set(std::size_t i, double value);

  // Leaf whose cumulative interval contains `mass`. Never lands on a
  // zero-mass leaf while the total is positive.
  std::size_t find(double mass) const;

  // Largest |node - (left + right)| over all internal nodes.
  double audit() const;

 private:
  std::size_t capacity_;
  std::vector<double> nodes_;  // 1-based heap layout, leaves at [capacity_, 2*capacity_)
};

// Fixed-length training window cut from one episode.
struct StoredSequence {
  std::uint32_t opponent_id = 0;
  std::array<FeatureVector, kSequenceLength> features{};
  std::array<std::uint8_t, kSequenceLength> actions{};
  std::int32_t valid_length = 0;
  HiddenState boundary;  // recurrent state before the first step
  bool terminal = false;  // episode ends on the last valid step
  double reward = 0.0;    // shaped terminal reward, meaningful iff terminal
  std::uint64_t episode_id = 0;
  std::int32_t start_tick = 0;

  bool operator==(const StoredSequence&) const = default;
};

struct ReplayConfig {
  int segments = 4;
  std::size_t capacity = 4096;  // per segment
  double priority_exponent = 0.6;
  double importance_exponent = 0.4;
  double min_priority = 1e-3;
};

struct ReplayRef {
  std::uint32_t segment = 0;
  std::uint32_t slot = 0;
  std::uint64_t serial = 0;  // insertion number, detects eviction

  bool operator==(const ReplayRef&) const = default;
};

struct SampledSequence {
  ReplayRef ref;
  StoredSequence sequence;
  double probability = 0.0;
  double weight = 0.0;  // importance weight, max over contents is 1
};

struct SegmentStats {
  std::size_t size = 0;
  double total = 0.0;  // sum of priority^exponent
  double max_priority = 0.0;
  std::uint64_t appended = 0;
  std::uint64_t evicted = 0;

  bool operator==(const SegmentStats&) const = default;
};

struct ReplayStats {
  std::vector<SegmentStats> segments;
  std::size_t total_size = 0;
  std::uint64_t stale_refs = 0;

  bool operator==(const ReplayStats&) const = default;
};

class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One FIFO segment per opponent; sampling is proportional across all of
// them. Every public member takes the same lock, so one ingesting writer and
// one learner may use it concurrently.
class SegmentedReplay {
 public:
  explicit SegmentedReplay(ReplayConfig config = {});

  // Inserts at the segment's running max priority (1.0 while empty).
  std::size_t append(std::uint32_t segment,
                     std::span<const StoredSequence> sequences);
  // Inserts with explicit raw priorities (> 0).
  std::size_t append(std::uint32_t segment,
                     std::span<const StoredSequence> sequences,
                     std::span<const double> priorities);

  // Stratified: one uniform draw in each of `batch` equal-mass strata.
  std::vector<SampledSequence> sample(std::size_t batch,
                                      std::mt19937_64& rng) const;

  // Sets priority |td| + min_priority. Evicted refs are skipped and counted.
  void update_priorities(std::span<const ReplayRef> refs,
                         std::span<const double> abs_td);

  ReplayStats stats() const;
  std::size_t size() const;
  double audit() const;
  const ReplayConfig& config() const { return config_; }

  // Raw priority (before the exponent) of a live ref; throws if stale.
  double priority(const ReplayRef& ref) const;

 private:
  struct Segment {
    explicit Segment(std::size_t capacity) : tree(capacity) {}
    std::vector<StoredSequence> items;
    std::vector<std::uint64_t> serials;
    std::vector<double> raw;  // raw priorities
    SumTree tree;
    std::size_t head = 0;  // next slot to overwrite once full
    double max_priority = 0.0;
    std::uint64_t appended = 0;
    std::uint64_t evicted = 0;
  };

  std::size_t append_locked(std::uint32_t segment,
                            std::span<const StoredSequence> sequences,
                            std::span<const double> priorities);
  Segment& segment_checked(std::uint32_t segment);

  ReplayConfig config_;
  std::vector<Segment> segments_;
  mutable std::mutex mu_;
  std::uint64_t stale_refs_ = 0;
};

}  // namespace fogduel
