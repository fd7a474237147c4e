#pragma once

#include <cstdint>
#include <vector>

#include "risopt/channel.hpp"
#include "risopt/complex_tensor.hpp"

namespace risopt {

// Per-element phases in radians, unconstrained real; the induced reflection
// matrix diag(e^{j psi}) is never materialized.
struct PhaseConfig {
  ad::Tensor psi;  // [N]

  std::int64_t elements() const { return psi.size(); }
};

// BS precoding matrix, columns are per-user beams; trace(V V^H) <= E_Tr.
struct Precoder {
  ad::ComplexTensor beams;  // V: M x U

  double total_power() const;
};

// Effective BS-user channel A = G diag(e^{j psi}) H + D, built by scaling
// the columns of G with the phasors. Differentiable w.r.t. psi.
ad::ComplexTensor effective_channel(const ChannelSample& sample,
                                    const PhaseConfig& phase);

// Combined user-coupling matrix C = A V.
ad::ComplexTensor combined_channel(const ChannelSample& sample,
                                   const PhaseConfig& phase,
                                   const Precoder& precoder);

// Sum over users of log2(1 + |c_uu|^2 / (sum_{v != u} |c_uv|^2 + sigma^2)),
// in bit/s/Hz; differentiable w.r.t. every entry of C.
ad::Tensor sum_rate(const ad::ComplexTensor& combined, double noise_power);

struct WmmseSettings {
  double transmit_power = 100.0;
  double noise_power = 1.0;
  int max_iters = 20;
  double tol = 1e-5;  // absolute sum-rate change between iterations
};

// Iterative sum-rate precoder for a U x M effective channel. The achieved
// sum rate is non-decreasing over iterations; the power constraint is
// enforced exactly through a multiplier search.
Precoder wmmse_precoder(const ad::ComplexTensor& channel,
                        const WmmseSettings& settings);

// Sum rate achieved by `precoder` on `channel` (plain number, no graph).
double achieved_sum_rate(const ad::ComplexTensor& channel,
                         const Precoder& precoder, double noise_power);

// Rounds each phase (mod 2pi) to the nearest of `levels` uniform grid
// points; exact ties round down. Output values lie on {k*2pi/levels}.
PhaseConfig quantize_phases(const PhaseConfig& phase, int levels);

}  // namespace risopt
