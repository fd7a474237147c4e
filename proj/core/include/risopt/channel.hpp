#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "risopt/complex_tensor.hpp"
#include "risopt/rng.hpp"

namespace risopt {

enum class ChannelRegime {
  kDeterministic,         // few specular paths shared by all RIS elements
  kDeterministicPlusIid,  // specular paths plus weak i.i.d. scattering
  kIid,                   // i.i.d. complex Gaussian gains per element
};

struct ScenarioConfig {
  std::int64_t bs_antennas = 8;  // M
  std::int64_t ris_rows = 36;
  std::int64_t ris_cols = 36;
  std::int64_t users = 4;  // U
  double transmit_power = 100.0;  // E_Tr, linear scale
  double noise_power = 1.0;       // sigma^2, linear scale
  ChannelRegime regime = ChannelRegime::kDeterministic;
  // Power of the i.i.d. part relative to the deterministic part in the
  // mixed regime.
  double mix_power_ratio = 0.25;
  std::uint64_t rng_seed = 1;

  std::int64_t ris_elements() const { return ris_rows * ris_cols; }
  void validate() const;
};

// One channel realization. The BS-RIS link is a property of the scenario
// (both ends are stationary), so it is drawn from the scenario seed and is
// identical for every sample of a given config; the user-dependent links are
// drawn from the per-sample rng.
struct ChannelSample {
  ad::ComplexTensor bs_to_ris;    // H: N x M
  ad::ComplexTensor ris_to_users; // G: U x N
  ad::ComplexTensor bs_to_users;  // D: U x M

  std::int64_t ris_elements() const { return bs_to_ris.shape()[0]; }
  std::int64_t bs_antennas() const { return bs_to_ris.shape()[1]; }
  std::int64_t users() const { return ris_to_users.shape()[0]; }
};

// Per-(user, element) network input: amplitude and phase of the RIS-user
// gain and of the equivalent BS-side gain row (D H^+), stacked as a
// [4 x U x N] real tensor. `anchors` records the element subset when the
// feature has been restricted for partial-CSI use.
struct ChannelFeature {
  ad::Tensor values;
  std::optional<std::vector<std::int64_t>> anchors;

  std::int64_t users() const { return values.shape()[1]; }
  std::int64_t elements() const { return values.shape()[2]; }
};

// Antenna array on an integer lattice. Steering phases are
// 2*pi*spacing*<lattice position, direction>, with spacing in wavelengths.
struct ArrayGeometry {
  std::vector<std::array<double, 3>> positions;

  static ArrayGeometry linear(std::int64_t count);
  static ArrayGeometry planar(std::int64_t rows, std::int64_t cols);
};

// Unit-modulus steering vector; `direction` must be a unit 3-vector.
ad::ComplexTensor steering_vector(const ArrayGeometry& geometry,
                                  const std::array<double, 3>& direction,
                                  double spacing);

// Diagnostic record of the generating geometry for a deterministic draw.
struct PathDebug {
  struct Path {
    std::array<double, 3> ris_direction;
    std::array<double, 3> bs_direction;  // meaningful for the BS-RIS link only
    std::complex<double> gain;
  };
  std::vector<Path> bs_ris_paths;
  std::vector<std::vector<Path>> user_paths;  // deterministic part, per user
};

ChannelSample generate_sample(const ScenarioConfig& config, Rng& rng,
                              PathDebug* debug = nullptr);

// Moore-Penrose inverse (A^H A)^{-1} A^H of a tall full-column-rank matrix.
// Numeric error when the Gram matrix condition exceeds 1e12.
ad::ComplexTensor pseudo_inverse(const ad::ComplexTensor& matrix);

ChannelFeature channel_feature(const ChannelSample& sample);

// Slices the feature to the given element subset (strictly increasing
// indices) and records the subset.
ChannelFeature restrict_to_anchors(const ChannelFeature& feature,
                                   const std::vector<std::int64_t>& anchors);

}  // namespace risopt
