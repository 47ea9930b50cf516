#include <cmath>
#include <deque>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "fogduel/replay.hpp"

using namespace fogduel;

namespace {

StoredSequence tagged(std::uint64_t id) {
  StoredSequence s;
  s.episode_id = id;
  s.valid_length = 1;
  s.boundary = HiddenState::zero(64);
  return s;
}

ReplayConfig small(int segments, std::size_t capacity) {
  ReplayConfig c;
  c.segments = segments;
  c.capacity = capacity;
  return c;
}

// Recomputes the expected root mass from raw priorities.
double brute_total(const SegmentedReplay& r, std::span<const double> raw) {
  double t = 0.0;
  for (double p : raw) t += std::pow(p, r.config().priority_exponent);
  return t;
}

}  // namespace

TEST_CASE("sum tree keeps partial sums") {
  SumTree t(5);
  CHECK(t.capacity() == 8);
  t.set(0, 1.0);
  t.set(3, 2.5);
  t.set(4, 0.5);
  CHECK(t.total() == doctest::Approx(4.0));
  CHECK(t.find(0.0) == 0);
  CHECK(t.find(0.99) == 0);
  CHECK(t.find(1.0) == 3);
  CHECK(t.find(3.49) == 3);
  CHECK(t.find(3.6) == 4);
  CHECK(t.find(100.0) == 4);  // overshoot stays on a live leaf
  CHECK(t.audit() == 0.0);
}

TEST_CASE("segments evict in FIFO order") {
  SegmentedReplay r(small(2, 2));
  const std::array<StoredSequence, 3> items = {tagged(1), tagged(2), tagged(3)};
  CHECK(r.append(0, items) == 1);
  std::mt19937_64 rng(1);
  std::map<std::uint64_t, int> seen;
  for (int i = 0; i < 200; ++i) {
    for (const auto& s : r.sample(2, rng)) seen[s.sequence.episode_id]++;
  }
  CHECK(seen.count(1) == 0);
  CHECK(seen.count(2) == 1);
  CHECK(seen.count(3) == 1);
  CHECK(r.stats().segments[0].evicted == 1);
}

TEST_CASE("appending to one segment leaves the others alone") {
  SegmentedReplay r(small(3, 8));
  const std::array<StoredSequence, 2> a = {tagged(1), tagged(2)};
  const std::array<double, 2> pa = {0.3, 2.0};
  r.append(1, a, pa);
  const auto before = r.stats();
  const std::array<StoredSequence, 1> b = {tagged(3)};
  r.append(2, b);
  const auto after = r.stats();
  CHECK(after.segments[0] == before.segments[0]);
  CHECK(after.segments[1] == before.segments[1]);
  CHECK(after.segments[2].size == 1);
}

TEST_CASE("append raises the root mass by the new priorities") {
  SegmentedReplay r(small(1, 4));
  std::vector<double> raw;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  for (int i = 0; i < 10; ++i) {
    const std::array<StoredSequence, 1> s = {tagged(static_cast<std::uint64_t>(i))};
    const std::array<double, 1> p = {u(rng)};
    r.append(0, s, p);
    raw.push_back(p[0]);
    if (raw.size() > 4) raw.erase(raw.begin());
    CHECK(r.stats().segments[0].total == doctest::Approx(brute_total(r, raw)).epsilon(1e-12));
  }
}

TEST_CASE("unknown segment is rejected") {
  SegmentedReplay r(small(2, 4));
  const std::array<StoredSequence, 1> s = {tagged(1)};
  CHECK_THROWS_AS(r.append(2, s), std::out_of_range);
}

TEST_CASE("new data enters at the segment max priority") {
  SegmentedReplay r(small(2, 8));
  const std::array<StoredSequence, 1> s = {tagged(1)};
  r.append(0, s);
  std::mt19937_64 rng(1);
  auto batch = r.sample(1, rng);
  CHECK(r.priority(batch[0].ref) == 1.0);
  const std::array<double, 1> td = {4.0};
  r.update_priorities(std::array{batch[0].ref}, td);
  const std::array<StoredSequence, 1> t = {tagged(2)};
  r.append(0, t);
  CHECK(r.stats().segments[0].max_priority == doctest::Approx(4.001));
  r.append(1, t);
  CHECK(r.stats().segments[1].max_priority == 1.0);
}

TEST_CASE("single item is always drawn with weight one") {
  SegmentedReplay r(small(4, 8));
  const std::array<StoredSequence, 1> s = {tagged(9)};
  const std::array<double, 1> p = {0.2};
  r.append(3, s, p);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto b = r.sample(1, rng);
    CHECK(b[0].sequence.episode_id == 9);
    CHECK(b[0].weight == 1.0);
    CHECK(b[0].probability == 1.0);
  }
}

TEST_CASE("two items sample in proportion to priority^0.6") {
  SegmentedReplay r(small(2, 8));
  const std::array<StoredSequence, 1> a = {tagged(1)};
  const std::array<StoredSequence, 1> b = {tagged(2)};
  r.append(0, a, std::array{1.0});
  r.append(1, b, std::array{3.0});
  const double expected = 1.0 / (1.0 + std::pow(3.0, 0.6));
  std::mt19937_64 rng(5);
  int first = 0;
  constexpr int kDraws = 100000;
  for (int i = 0; i < kDraws; ++i) {
    if (r.sample(1, rng)[0].sequence.episode_id == 1) ++first;
  }
  CHECK(std::abs(static_cast<double>(first) / kDraws - expected) < 0.01);
}

TEST_CASE("equal priorities give uniform draws and unit weights") {
  SegmentedReplay r(small(2, 16));
  std::vector<StoredSequence> items;
  for (int i = 0; i < 8; ++i) items.push_back(tagged(static_cast<std::uint64_t>(i)));
  r.append(0, std::span(items).first(3));
  r.append(1, std::span(items).subspan(3));
  std::mt19937_64 rng(2);
  std::array<int, 8> counts{};
  for (int i = 0; i < 4000; ++i) {
    for (const auto& s : r.sample(8, rng)) {
      CHECK(s.weight == 1.0);
      counts[s.sequence.episode_id]++;
    }
  }
  // Stratified draws with equal mass hit every item exactly once per batch.
  for (int c : counts) CHECK(c == 4000);
}

TEST_CASE("importance weights peak at one on the rarest item") {
  SegmentedReplay r(small(2, 16));
  std::vector<StoredSequence> items;
  std::vector<double> pr;
  for (int i = 0; i < 6; ++i) {
    items.push_back(tagged(static_cast<std::uint64_t>(i)));
    pr.push_back(0.1 + i);
  }
  r.append(0, items, pr);
  std::mt19937_64 rng(3);
  double max_w = 0.0;
  for (int i = 0; i < 300; ++i) {
    for (const auto& s : r.sample(6, rng)) {
      CHECK(s.weight <= 1.0);
      max_w = std::max(max_w, s.weight);
      const double expect = std::pow(std::pow(pr[s.sequence.episode_id], 0.6) /
                                         std::pow(0.1, 0.6),
                                     -0.4);
      CHECK(s.weight == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  CHECK(max_w == 1.0);
}

TEST_CASE("priority updates floor at the minimum and skip stale refs") {
  SegmentedReplay r(small(1, 2));
  r.append(0, std::array{tagged(1)});
  std::mt19937_64 rng(4);
  const ReplayRef ref = r.sample(1, rng)[0].ref;
  r.update_priorities(std::array{ref}, std::array{0.0});
  CHECK(r.priority(ref) == 1e-3);

  const double before = r.stats().segments[0].total;
  r.update_priorities(std::array{ref}, std::array{0.0});
  CHECK(r.stats().segments[0].total == before);

  r.append(0, std::array{tagged(2), tagged(3)});  // evicts ref
  r.update_priorities(std::array{ref}, std::array{5.0});
  CHECK(r.stats().stale_refs == 1);
  CHECK_THROWS(r.priority(ref));
}

TEST_CASE("sampling needs enough data") {
  SegmentedReplay r(small(2, 4));
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(r.sample(1, rng), InsufficientData);
  r.append(0, std::array{tagged(1)});
  CHECK_THROWS_AS(r.sample(2, rng), InsufficientData);
}

TEST_CASE("stats") {
  SegmentedReplay r(small(3, 8));
  auto s = r.stats();
  CHECK(s.total_size == 0);
  for (const auto& seg : s.segments) CHECK(seg == SegmentStats{});
  std::vector<StoredSequence> five(5, tagged(1));
  r.append(1, five);
  s = r.stats();
  CHECK(s.segments[0].size == 0);
  CHECK(s.segments[1].size == 5);
  CHECK(s.segments[2].size == 0);
  std::size_t sum = 0;
  for (const auto& seg : s.segments) sum += seg.size;
  CHECK(s.total_size == sum);
}

TEST_CASE("random interleavings keep FIFO order and a consistent tree") {
  constexpr int kSegments = 3;
  constexpr std::size_t kCap = 16;
  SegmentedReplay r(small(kSegments, kCap));
  std::array<std::deque<std::uint64_t>, kSegments> model;
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  std::uint64_t next_id = 0;
  for (int op = 0; op < 3000; ++op) {
    const auto seg = static_cast<std::uint32_t>(rng() % kSegments);
    if (rng() % 2 == 0 || r.size() < 4) {
      const int n = 1 + static_cast<int>(rng() % 3);
      std::vector<StoredSequence> items;
      for (int i = 0; i < n; ++i) {
        items.push_back(tagged(next_id));
        model[seg].push_back(next_id++);
        if (model[seg].size() > kCap) model[seg].pop_front();
      }
      r.append(seg, items);
    } else {
      auto batch = r.sample(4, rng);
      std::vector<ReplayRef> refs;
      std::vector<double> td;
      for (const auto& s : batch) {
        refs.push_back(s.ref);
        td.push_back(u(rng));
      }
      r.update_priorities(refs, td);
    }
    CHECK(r.audit() <= 1e-9);
  }
  // Draw enough to see everything that is stored: ids must match the model.
  std::array<std::set<std::uint64_t>, kSegments> live;
  for (int i = 0; i < 4000; ++i) {
    for (const auto& s : r.sample(8, rng)) live[s.ref.segment].insert(s.sequence.episode_id);
  }
  for (int s = 0; s < kSegments; ++s) {
    CHECK(live[s] == std::set<std::uint64_t>(model[s].begin(), model[s].end()));
  }
}
