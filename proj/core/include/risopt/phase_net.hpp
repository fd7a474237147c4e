#pragma once

#include <cstdint>
#include <vector>

#include "risopt/channel.hpp"
#include "risopt/complex_tensor.hpp"
#include "risopt/rate.hpp"
#include "risopt/rng.hpp"

namespace risopt {

enum class CsiMode { kFull, kPartial };

// Network architecture. Layer indices are 1-based; layers 1..num_layers-1
// apply the four shared per-(user, element) filter classes, the last layer
// is the scalar map summed over users. Parameter shapes depend only on this
// config, never on the number of RIS elements or users.
struct ArchConfig {
  CsiMode csi_mode = CsiMode::kFull;
  int num_layers = 8;
  std::int64_t hidden_width = 16;  // Q_i, uniform over non-final layers
  std::vector<int> expansion_layers;  // e.g. {3, 6} in partial mode
  std::int64_t ris_rows = 36;
  std::int64_t ris_cols = 36;

  static ArchConfig full_csi(std::int64_t rows, std::int64_t cols);
  static ArchConfig partial_csi(std::int64_t rows, std::int64_t cols);

  void validate() const;
  bool is_expansion(int layer) const;
  // Input feature width P_i of 1-based layer i: P_1 = 4, then 4*Q.
  std::int64_t input_width(int layer) const;
  std::int64_t ris_elements() const { return ris_rows * ris_cols; }
};

// Parameters of one non-final layer. The four class matrices are stacked
// row-wise into one [4Q x P] tensor per filter (rows [0,Q) current-user/
// current-element, then current/all, other/current, other/all); standard
// layers hold one filter, expansion layers nine (one per target position).
struct LayerParams {
  std::vector<ad::Tensor> weights;  // each [4Q x P]
  std::vector<ad::Tensor> biases;   // each [4Q]
};

struct PhaseNetParams {
  ArchConfig arch;
  std::vector<LayerParams> layers;  // num_layers - 1 entries
  ad::Tensor final_weight;          // [1 x P_L]
  ad::Tensor final_bias;            // [1]

  std::int64_t parameter_count() const;
  // Every trainable tensor, in serialization order.
  std::vector<ad::Tensor> parameter_tensors() const;
};

// Element indices (0-based, row-major over the physical grid) whose features
// are live at the given anchor stage: stage 0 keeps the centers of the 9x9
// blocks, stage 1 the centers of the 3x3 blocks, stage 2 every element.
// The grid dimensions must be divisible by 9.
std::vector<std::int64_t> anchor_grid(int stage, std::int64_t rows,
                                      std::int64_t cols);

// Target element of expansion filter `j` (1..9) applied to block-center
// `anchor` in a grid with `grid_cols` columns. Indices are 1-based with the
// flat index increasing along a row first, matching anchor*_grid order + 1.
std::int64_t expansion_target(std::int64_t anchor, int filter,
                              std::int64_t grid_cols);

// One shared-filter layer: concatenates, per (user, element), the
// current-user/current-element transform with the three aggregation
// classes (mean over elements, over other users, and over both).
ad::Tensor standard_layer(const ad::Tensor& features, const ad::Tensor& weights,
                          const ad::Tensor& bias);

// Expansion layer: applies the 9 filters of each class to every input anchor
// and scatters the results onto the 3x-refined anchor grid; every output
// anchor is written exactly once. `in_rows`/`in_cols` describe the logical
// grid formed by the input anchors.
ad::Tensor expansion_layer(const ad::Tensor& features,
                           const LayerParams& params, std::int64_t in_rows,
                           std::int64_t in_cols);

// Final layer: per-element affine map summed over users; linear output.
ad::Tensor final_layer(const ad::Tensor& features, const ad::Tensor& weight,
                       const ad::Tensor& bias, std::int64_t expected_elements);

// Full forward pass from channel features to per-element phases,
// differentiable with respect to every parameter tensor.
PhaseConfig forward(const ChannelFeature& feature,
                    const PhaseNetParams& params);

// Glorot-uniform weights (bound sqrt(6/(P+Q))), zero biases; deterministic
// for a given rng state.
PhaseNetParams init_params(const ArchConfig& arch, Rng& rng);

}  // namespace risopt
