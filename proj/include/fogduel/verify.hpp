#pragma once

#include <cstdint>
#include <string>

#include "fogduel/sim.hpp"

// Property checks backed by oracles written separately from the code they
// check. Shared by the `check` subcommand and the acceptance binary.
namespace fogduel::verify {

// Largest |shaped_terminal_reward - direct evaluation| over random triples;
// also fails (returns +inf) if antisymmetry or the equal-score case breaks.
double reward_max_error(int triples, std::uint64_t seed);

// Largest |n_step_targets - unrolled oracle| over random tiny instances
// (3 actions, sequences of at most 6 steps); +inf on a mask disagreement.
double target_max_error(int instances, std::uint64_t seed);

// Largest finite-difference relative error over random instances.
double finite_diff_max_error(int instances, std::uint64_t seed,
                             int probes = 64);

struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
  double critical_99 = 0.0;
  bool passed() const { return statistic < critical_99; }
};
// `items` random priorities spread over `segments`, `draws` single draws.
ChiSquare replay_chi_square(int items, int segments, int draws,
                            std::uint64_t seed);

// Random append/sample/update interleavings against a FIFO model; returns
// an empty string on success, else the first discrepancy.
std::string replay_interleavings(int ops, std::uint64_t seed);

// Empty on success, else the violated property.
std::string epsilon_schedule();

// Upper chi-square quantile at 0.99.
double chi_square_critical_99(int dof);

}  // namespace fogduel::verify
