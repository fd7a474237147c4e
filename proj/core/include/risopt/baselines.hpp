#pragma once

#include <cstdint>
#include <vector>

#include "risopt/channel.hpp"
#include "risopt/rate.hpp"
#include "risopt/rng.hpp"

namespace risopt {

struct BcdConfig {
  int grid_points = 16;   // per-element phase candidates
  int outer_iters = 50;   // max alternation sweeps
  double tol = 1e-4;      // absolute sum-rate improvement per outer iteration
};

// Phases drawn i.i.d. uniform on [0, 2pi).
PhaseConfig random_phases(std::int64_t elements, Rng& rng);

struct BcdResult {
  PhaseConfig phase;
  Precoder precoder;
  // Achieved sum rate after the initial precoder solve and after every
  // accepted step; non-decreasing.
  std::vector<double> rate_trace;
};

// Alternating baseline: precoder update for fixed phases, then one cyclic
// sweep setting each element to the best candidate phase by exact sum-rate
// evaluation with everything else fixed. Stops when one full alternation
// improves the rate by less than `tol`, or after `outer_iters` rounds.
BcdResult bcd_optimize(const ChannelSample& sample, const BcdConfig& config,
                       const WmmseSettings& wmmse);

}  // namespace risopt
