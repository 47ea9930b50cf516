#include "fogduel/replay.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

namespace fogduel {

SumTree::SumTree(std::size_t min_capacity)
    : capacity_(std::bit_ceil(std::max<std::size_t>(min_capacity, 1))),
      nodes_(2 * capacity_, 0.0) {}

void SumTree::set(std::size_t i, double value) {
  std::size_t node = capacity_ + i;
  nodes_[node] = value;
  for (node /= 2; node >= 1; node /= 2) {
    nodes_[node] = nodes_[2 * node] + nodes_[2 * node + 1];
  }
}

std::size_t SumTree::find(double mass) const {
  std::size_t node = 1;
  while (node < capacity_) {
    const double left = nodes_[2 * node];
    const double right = nodes_[2 * node + 1];
    if (mass < left || right <= 0.0) {
      node = 2 * node;
    } else {
      mass -= left;
      node = 2 * node + 1;
    }
  }
  return node - capacity_;
}

double SumTree::audit() const {
  double worst = 0.0;
  for (std::size_t node = 1; node < capacity_; ++node) {
    worst = std::max(worst, std::abs(nodes_[node] - (nodes_[2 * node] +
                                                     nodes_[2 * node + 1])));
  }
  return worst;
}

SegmentedReplay::SegmentedReplay(ReplayConfig config) : config_(config) {
  if (config.segments <= 0 || config.capacity == 0) {
    throw std::invalid_argument("replay needs at least one non-empty segment");
  }
  segments_.reserve(static_cast<std::size_t>(config.segments));
  for (int i = 0; i < config.segments; ++i) segments_.emplace_back(config.capacity);
}

SegmentedReplay::Segment& SegmentedReplay::segment_checked(std::uint32_t segment) {
  if (segment >= segments_.size()) {
    throw std::out_of_range("unknown opponent segment " + std::to_string(segment));
  }
  return segments_[segment];
}

std::size_t SegmentedReplay::append(std::uint32_t segment,
                                    std::span<const StoredSequence> sequences) {
  std::lock_guard lock(mu_);
  Segment& seg = segment_checked(segment);
  const double p = seg.max_priority > 0.0 ? seg.max_priority : 1.0;
  const std::vector<double> priorities(sequences.size(), p);
  return append_locked(segment, sequences, priorities);
}

std::size_t SegmentedReplay::append(std::uint32_t segment,
                                    std::span<const StoredSequence> sequences,
                                    std::span<const double> priorities) {
  std::lock_guard lock(mu_);
  return append_locked(segment, sequences, priorities);
}

std::size_t SegmentedReplay::append_locked(
    std::uint32_t segment, std::span<const StoredSequence> sequences,
    std::span<const double> priorities) {
  Segment& seg = segment_checked(segment);
  if (priorities.size() != sequences.size()) {
    throw std::invalid_argument("one priority per appended sequence required");
  }
  for (double p : priorities) {
    if (!(p > 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("replay priorities must be positive and finite");
    }
  }
  std::size_t evicted = 0;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    std::size_t slot;
    if (seg.items.size() < config_.capacity) {
      slot = seg.items.size();
      seg.items.push_back(sequences[i]);
      seg.serials.push_back(seg.appended);
      seg.raw.push_back(priorities[i]);
    } else {
      slot = seg.head;
      seg.head = (seg.head + 1) % config_.capacity;
      seg.items[slot] = sequences[i];
      seg.serials[slot] = seg.appended;
      seg.raw[slot] = priorities[i];
      ++seg.evicted;
      ++evicted;
    }
    ++seg.appended;
    seg.max_priority = std::max(seg.max_priority, priorities[i]);
    seg.tree.set(slot, std::pow(priorities[i], config_.priority_exponent));
  }
  return evicted;
}

std::vector<SampledSequence> SegmentedReplay::sample(std::size_t batch,
                                                     std::mt19937_64& rng) const {
  std::lock_guard lock(mu_);
  std::size_t stored = 0;
  for (const auto& seg : segments_) stored += seg.items.size();
  if (batch == 0 || stored < batch) {
    throw InsufficientData("replay holds " + std::to_string(stored) +
                           " sequences, batch needs " + std::to_string(batch));
  }

  std::vector<double> cumulative;
  cumulative.reserve(segments_.size());
  double total = 0.0;
  double min_mass = std::numeric_limits<double>::infinity();
  for (const auto& seg : segments_) {
    total += seg.tree.total();
    cumulative.push_back(total);
    for (std::size_t i = 0; i < seg.items.size(); ++i) {
      min_mass = std::min(min_mass, seg.tree.leaf(i));
    }
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double stratum = total / static_cast<double>(batch);
  std::vector<SampledSequence> out;
  out.reserve(batch);
  for (std::size_t k = 0; k < batch; ++k) {
    const double mass = std::min((static_cast<double>(k) + unit(rng)) * stratum,
                                 std::nextafter(total, 0.0));
    std::size_t s = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), mass) -
        cumulative.begin());
    s = std::min(s, segments_.size() - 1);
    while (segments_[s].items.empty() && s > 0) --s;
    const Segment& seg = segments_[s];
    const double local = mass - (s == 0 ? 0.0 : cumulative[s - 1]);
    std::size_t slot = seg.tree.find(std::max(local, 0.0));
    slot = std::min(slot, seg.items.size() - 1);

    SampledSequence item;
    item.ref = {static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(slot),
                seg.serials[slot]};
    item.sequence = seg.items[slot];
    const double leaf = seg.tree.leaf(slot);
    item.probability = leaf / total;
    // (N P_i)^-beta / max_j (N P_j)^-beta, the max sitting at the smallest P.
    item.weight = std::pow(leaf / min_mass, -config_.importance_exponent);
    out.push_back(std::move(item));
  }
  return out;
}

void SegmentedReplay::update_priorities(std::span<const ReplayRef> refs,
                                        std::span<const double> abs_td) {
  if (refs.size() != abs_td.size()) {
    throw std::invalid_argument("one TD error per ref required");
  }
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const ReplayRef& r = refs[i];
    if (r.segment >= segments_.size()) {
      ++stale_refs_;
      continue;
    }
    Segment& seg = segments_[r.segment];
    if (r.slot >= seg.items.size() || seg.serials[r.slot] != r.serial) {
      ++stale_refs_;
      continue;
    }
    const double p = std::abs(abs_td[i]) + config_.min_priority;
    seg.raw[r.slot] = p;
    seg.max_priority = std::max(seg.max_priority, p);
    seg.tree.set(r.slot, std::pow(p, config_.priority_exponent));
  }
}

ReplayStats SegmentedReplay::stats() const {
  std::lock_guard lock(mu_);
  ReplayStats out;
  for (const auto& seg : segments_) {
    SegmentStats s;
    s.size = seg.items.size();
    s.total = seg.tree.total();
    s.max_priority = seg.max_priority;
    s.appended = seg.appended;
    s.evicted = seg.evicted;
    out.total_size += s.size;
    out.segments.push_back(s);
  }
  out.stale_refs = stale_refs_;
  return out;
}

std::size_t SegmentedReplay::size() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& seg : segments_) n += seg.items.size();
  return n;
}

double SegmentedReplay::audit() const {
  std::lock_guard lock(mu_);
  double worst = 0.0;
  for (const auto& seg : segments_) worst = std::max(worst, seg.tree.audit());
  return worst;
}

double SegmentedReplay::priority(const ReplayRef& ref) const {
  std::lock_guard lock(mu_);
  if (ref.segment >= segments_.size()) throw std::out_of_range("bad segment");
  const Segment& seg = segments_[ref.segment];
  if (ref.slot >= seg.items.size() || seg.serials[ref.slot] != ref.serial) {
    throw std::out_of_range("stale replay ref");
  }
  return seg.raw[ref.slot];
}

}  // namespace fogduel
