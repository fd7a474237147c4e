#include "risopt/phase_net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "risopt/errors.hpp"

namespace risopt {

namespace {

// Four-class block shared by standard and expansion layers: relu transforms
// with the stacked weights, then the per-class aggregations.
ad::Tensor class_block(const ad::Tensor& features, const ad::Tensor& weights,
                       const ad::Tensor& bias) {
  if (features.rank() != 3)
    throw DimensionError("layer features must be [P x U x N]");
  const std::int64_t users = features.dim(1);
  const std::int64_t elements = features.dim(2);
  if (users < 2)
    throw ContractError("layer needs at least 2 users (other-user classes)");
  const std::int64_t q = weights.dim(0) / 4;

  const ad::Tensor act = ad::relu(ad::affine(weights, features, bias));
  const ad::Tensor cc = ad::slice_rows(act, 0, q);
  const ad::Tensor ca = ad::slice_rows(act, q, 2 * q);
  const ad::Tensor oc = ad::slice_rows(act, 2 * q, 3 * q);
  const ad::Tensor oa = ad::slice_rows(act, 3 * q, 4 * q);

  // Mean over elements for the current user; constant along the element axis.
  const ad::Tensor ca_out =
      ad::expand(ad::reduce(ca, 2, ad::Reduce::kMean), 2, elements);

  // Mean over the other users at the current element.
  const ad::Tensor oc_sum = ad::reduce(oc, 1, ad::Reduce::kSum);
  const ad::Tensor oc_out = ad::scalar_mul(
      ad::sub(ad::expand(oc_sum, 1, users), oc), 1.0 / (users - 1));

  // Mean over the other users and all elements.
  const ad::Tensor oa_row = ad::reduce(oa, 2, ad::Reduce::kSum);   // [Q x U]
  const ad::Tensor oa_all = ad::reduce(oa_row, 1, ad::Reduce::kSum);  // [Q]
  const ad::Tensor oa_small =
      ad::scalar_mul(ad::sub(ad::expand(oa_all, 1, users), oa_row),
                     1.0 / static_cast<double>(elements * (users - 1)));
  const ad::Tensor oa_out = ad::expand(oa_small, 2, elements);

  const ad::Tensor parts[] = {cc, ca_out, oc_out, oa_out};
  return ad::concat(parts, 0);
}

}  // namespace

ArchConfig ArchConfig::full_csi(std::int64_t rows, std::int64_t cols) {
  ArchConfig cfg;
  cfg.csi_mode = CsiMode::kFull;
  cfg.ris_rows = rows;
  cfg.ris_cols = cols;
  return cfg;
}

ArchConfig ArchConfig::partial_csi(std::int64_t rows, std::int64_t cols) {
  ArchConfig cfg;
  cfg.csi_mode = CsiMode::kPartial;
  cfg.expansion_layers = {3, 6};
  cfg.ris_rows = rows;
  cfg.ris_cols = cols;
  return cfg;
}

void ArchConfig::validate() const {
  if (num_layers < 2) throw ConfigError("ArchConfig: need at least 2 layers");
  if (hidden_width < 1) throw ConfigError("ArchConfig: hidden width must be >= 1");
  if (ris_rows < 1 || ris_cols < 1)
    throw ConfigError("ArchConfig: grid dimensions must be >= 1");
  if (csi_mode == CsiMode::kFull) {
    if (!expansion_layers.empty())
      throw ConfigError("ArchConfig: full-CSI mode has no expansion layers");
    return;
  }
  if (expansion_layers.size() != 2)
    throw ConfigError("ArchConfig: partial mode requires exactly 2 expansion layers");
  if (!std::is_sorted(expansion_layers.begin(), expansion_layers.end()) ||
      expansion_layers[0] == expansion_layers[1])
    throw ConfigError("ArchConfig: expansion layers must be strictly increasing");
  for (int layer : expansion_layers)
    if (layer < 1 || layer >= num_layers)
      throw ConfigError("ArchConfig: expansion layer index out of range");
  if (ris_rows % 9 != 0 || ris_cols % 9 != 0)
    throw ConfigError("ArchConfig: partial mode needs grid dimensions divisible by 9");
}

bool ArchConfig::is_expansion(int layer) const {
  return std::find(expansion_layers.begin(), expansion_layers.end(), layer) !=
         expansion_layers.end();
}

std::int64_t ArchConfig::input_width(int layer) const {
  return layer == 1 ? 4 : 4 * hidden_width;
}

std::int64_t PhaseNetParams::parameter_count() const {
  std::int64_t count = 0;
  for (const auto& layer : layers)
    for (std::size_t f = 0; f < layer.weights.size(); ++f)
      count += layer.weights[f].size() + layer.biases[f].size();
  return count + final_weight.size() + final_bias.size();
}

std::vector<ad::Tensor> PhaseNetParams::parameter_tensors() const {
  std::vector<ad::Tensor> out;
  for (const auto& layer : layers) {
    for (const auto& w : layer.weights) out.push_back(w);
    for (const auto& b : layer.biases) out.push_back(b);
  }
  out.push_back(final_weight);
  out.push_back(final_bias);
  return out;
}

std::vector<std::int64_t> anchor_grid(int stage, std::int64_t rows,
                                      std::int64_t cols) {
  if (rows % 9 != 0 || cols % 9 != 0)
    throw ConfigError("anchor_grid: grid dimensions must be divisible by 9");
  if (stage < 0 || stage > 2)
    throw ConfigError("anchor_grid: stage must be 0, 1 or 2");
  // Stage 0: centers of 9x9 blocks (offset 9k+4); stage 1: centers of 3x3
  // blocks (offset 3k+1); stage 2: everything.
  const std::int64_t stride = stage == 0 ? 9 : (stage == 1 ? 3 : 1);
  const std::int64_t offset = stage == 0 ? 4 : (stage == 1 ? 1 : 0);
  std::vector<std::int64_t> anchors;
  anchors.reserve((rows / stride) * (cols / stride));
  for (std::int64_t r = offset; r < rows; r += stride)
    for (std::int64_t c = offset; c < cols; c += stride)
      anchors.push_back(c + r * cols);
  return anchors;
}

std::int64_t expansion_target(std::int64_t anchor, int filter,
                              std::int64_t grid_cols) {
  if (filter < 1 || filter > 9)
    throw ContractError("expansion_target: filter must be in 1..9");
  if (anchor < 1)
    throw ContractError("expansion_target: anchor index is 1-based");
  std::int64_t target;
  if (filter <= 3)
    target = anchor - grid_cols - 2 + filter;
  else if (filter <= 6)
    target = anchor - 5 + filter;
  else
    target = anchor + grid_cols - 8 + filter;

  // A block center has a full 3x3 neighborhood; anything else walks off the
  // grid or wraps across a row boundary.
  const std::int64_t col = (anchor - 1) % grid_cols + 1;
  const std::int64_t expected_col = col + (filter - 1) % 3 - 1;
  if (expected_col < 1 || expected_col > grid_cols || target < 1)
    throw ContractError("expansion_target: result outside the grid");
  return target;
}

ad::Tensor standard_layer(const ad::Tensor& features, const ad::Tensor& weights,
                          const ad::Tensor& bias) {
  if (weights.rank() != 2 || weights.dim(0) % 4 != 0)
    throw DimensionError("standard_layer: stacked weights must be [4Q x P]");
  return class_block(features, weights, bias);
}

ad::Tensor expansion_layer(const ad::Tensor& features,
                           const LayerParams& params, std::int64_t in_rows,
                           std::int64_t in_cols) {
  if (params.weights.size() != 9 || params.biases.size() != 9)
    throw ConfigError("expansion_layer: expected 9 filters");
  if (features.rank() != 3 || features.dim(2) != in_rows * in_cols)
    throw ConfigError("expansion_layer: feature count does not match the anchor grid");
  const std::int64_t in_anchors = in_rows * in_cols;
  const std::int64_t out_cols = 3 * in_cols;
  const std::int64_t out_anchors = 9 * in_anchors;

  // Where each (input anchor, filter) result lands on the refined grid: the
  // input anchor at logical (r, c) is the center (3r+1, 3c+1) of its 3x3
  // output block, and the 9 filters tile that block exactly once each.
  std::vector<std::int64_t> gather_index(out_anchors, -1);
  for (std::int64_t k = 0; k < in_anchors; ++k) {
    const std::int64_t r = k / in_cols, c = k % in_cols;
    const std::int64_t center = (3 * r + 1) * out_cols + (3 * c + 1) + 1;
    for (int j = 1; j <= 9; ++j) {
      const std::int64_t target = expansion_target(center, j, out_cols) - 1;
      gather_index[target] = (j - 1) * in_anchors + k;
    }
  }

  std::vector<ad::Tensor> blocks;
  blocks.reserve(9);
  for (int j = 0; j < 9; ++j)
    blocks.push_back(
        class_block(features, params.weights[j], params.biases[j]));
  const ad::Tensor stacked = ad::concat(blocks, 2);
  return ad::gather_last(stacked, gather_index);
}

ad::Tensor final_layer(const ad::Tensor& features, const ad::Tensor& weight,
                       const ad::Tensor& bias,
                       std::int64_t expected_elements) {
  if (features.rank() != 3)
    throw DimensionError("final_layer: features must be [P x U x N]");
  if (features.dim(2) != expected_elements)
    throw ContractError("final_layer: anchor set does not cover all elements");
  const std::int64_t users = features.dim(1);
  const std::int64_t elements = features.dim(2);
  const ad::Tensor mapped = ad::affine(weight, features, bias);  // [1 x U x N]
  return ad::reduce(ad::reshape(mapped, {users, elements}), 0,
                    ad::Reduce::kSum);
}

PhaseConfig forward(const ChannelFeature& feature,
                    const PhaseNetParams& params) {
  const ArchConfig& arch = params.arch;
  arch.validate();
  const std::int64_t total = arch.ris_elements();

  std::int64_t rows = arch.ris_rows, cols = arch.ris_cols;
  if (arch.csi_mode == CsiMode::kPartial) {
    rows /= 9;
    cols /= 9;
    if (!feature.anchors || feature.elements() != rows * cols)
      throw ConfigError(
          "forward: partial mode expects features restricted to the stage-0 "
          "anchors");
    const auto expected = anchor_grid(0, arch.ris_rows, arch.ris_cols);
    if (*feature.anchors != expected)
      throw ConfigError("forward: anchor set does not match the stage-0 grid");
  } else if (feature.elements() != total) {
    throw ConfigError("forward: feature element count does not match the grid");
  }

  ad::Tensor f = feature.values;
  for (int layer = 1; layer < arch.num_layers; ++layer) {
    const LayerParams& lp = params.layers[layer - 1];
    if (arch.is_expansion(layer)) {
      f = expansion_layer(f, lp, rows, cols);
      rows *= 3;
      cols *= 3;
    } else {
      f = standard_layer(f, lp.weights[0], lp.biases[0]);
    }
  }
  return {final_layer(f, params.final_weight, params.final_bias, total)};
}

PhaseNetParams init_params(const ArchConfig& arch, Rng& rng) {
  arch.validate();
  PhaseNetParams params;
  params.arch = arch;
  const std::int64_t q = arch.hidden_width;
  for (int layer = 1; layer < arch.num_layers; ++layer) {
    const std::int64_t p = arch.input_width(layer);
    const double bound = std::sqrt(6.0 / static_cast<double>(p + q));
    const int filters = arch.is_expansion(layer) ? 9 : 1;
    LayerParams lp;
    for (int f = 0; f < filters; ++f) {
      std::vector<double> w(4 * q * p);
      for (auto& v : w) v = rng.uniform(-bound, bound);
      lp.weights.push_back(
          ad::Tensor::from_data({4 * q, p}, std::move(w), true));
      lp.biases.push_back(ad::Tensor::zeros({4 * q}, true));
    }
    params.layers.push_back(std::move(lp));
  }
  const std::int64_t p_final = arch.input_width(arch.num_layers);
  const double bound = std::sqrt(6.0 / static_cast<double>(p_final + 1));
  std::vector<double> w(p_final);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  params.final_weight = ad::Tensor::from_data({1, p_final}, std::move(w), true);
  params.final_bias = ad::Tensor::zeros({1}, true);
  return params;
}

}  // namespace risopt
