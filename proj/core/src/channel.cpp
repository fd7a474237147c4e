#include "risopt/channel.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "risopt/errors.hpp"

namespace risopt {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

MatrixXcd to_eigen(const ad::ComplexTensor& t) {
  const auto& s = t.shape();
  MatrixXcd m(s[0], s.size() > 1 ? s[1] : 1);
  auto re = t.re.data();
  auto im = t.im.data();
  for (std::int64_t r = 0; r < m.rows(); ++r)
    for (std::int64_t c = 0; c < m.cols(); ++c) {
      const auto k = r * m.cols() + c;
      m(r, c) = {re[k], im[k]};
    }
  return m;
}

ad::ComplexTensor from_eigen(const MatrixXcd& m) {
  std::vector<double> re(m.size()), im(m.size());
  for (std::int64_t r = 0; r < m.rows(); ++r)
    for (std::int64_t c = 0; c < m.cols(); ++c) {
      const auto k = r * m.cols() + c;
      re[k] = m(r, c).real();
      im[k] = m(r, c).imag();
    }
  ad::Shape shape{m.rows(), m.cols()};
  return {ad::Tensor::from_data(shape, std::move(re)),
          ad::Tensor::from_data(shape, std::move(im))};
}

// Uniform direction on the hemisphere z > 0 (the half space in front of a
// planar array, and an unbiased projection set for a linear one).
std::array<double, 3> random_hemisphere_direction(Rng& rng) {
  const double z = rng.uniform();
  const double phi = rng.uniform(0.0, kTwoPi);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

VectorXcd steering(const ArrayGeometry& geom,
                   const std::array<double, 3>& dir, double spacing) {
  VectorXcd v(geom.positions.size());
  for (std::size_t p = 0; p < geom.positions.size(); ++p) {
    const auto& pos = geom.positions[p];
    const double phase =
        kTwoPi * spacing *
        (pos[0] * dir[0] + pos[1] * dir[1] + pos[2] * dir[2]);
    v(p) = {std::cos(phase), std::sin(phase)};
  }
  return v;
}

constexpr double kElementSpacing = 0.5;  // wavelengths, both arrays

// Specular BS-RIS link: LOS plus weaker reflected paths with fixed power
// ratios. A fourth weak path keeps the rank at 4 when four users are served.
MatrixXcd draw_bs_ris_channel(const ScenarioConfig& cfg, Rng& h_rng,
                              PathDebug* debug) {
  const ArrayGeometry ris =
      ArrayGeometry::planar(cfg.ris_rows, cfg.ris_cols);
  const ArrayGeometry bs = ArrayGeometry::linear(cfg.bs_antennas);
  std::vector<double> powers{1.0, 0.5, 0.25};
  if (cfg.users >= 4) powers.push_back(0.1);

  MatrixXcd h = MatrixXcd::Zero(cfg.ris_elements(), cfg.bs_antennas);
  for (double p : powers) {
    const auto ris_dir = random_hemisphere_direction(h_rng);
    const auto bs_dir = random_hemisphere_direction(h_rng);
    const double phase = h_rng.uniform(0.0, kTwoPi);
    const std::complex<double> gain =
        std::sqrt(p) * std::complex<double>{std::cos(phase), std::sin(phase)};
    h += gain * steering(ris, ris_dir, kElementSpacing) *
         steering(bs, bs_dir, kElementSpacing).adjoint();
    if (debug) debug->bs_ris_paths.push_back({ris_dir, bs_dir, gain});
  }
  return h;
}

// One deterministic RIS-user row: 2..4 specular paths, strongest at least
// 1.5x the second strongest, scaled to unit average per-element power.
VectorXcd draw_user_row(const ArrayGeometry& ris, std::int64_t elements,
                        Rng& rng, std::vector<PathDebug::Path>* debug_paths) {
  const std::int64_t num_paths = 2 + rng.uniform_index(3);
  VectorXcd row = VectorXcd::Zero(elements);
  std::vector<PathDebug::Path> paths;
  for (std::int64_t p = 0; p < num_paths; ++p) {
    // First path has unit power; later ones at most 1/1.5 of it.
    const double power = p == 0 ? 1.0 : rng.uniform(0.05, 1.0 / 1.5);
    const auto dir = random_hemisphere_direction(rng);
    const double phase = rng.uniform(0.0, kTwoPi);
    const std::complex<double> gain =
        std::sqrt(power) *
        std::complex<double>{std::cos(phase), std::sin(phase)};
    row += gain * steering(ris, dir, kElementSpacing);
    paths.push_back({dir, {0.0, 0.0, 0.0}, gain});
  }
  const double scale =
      std::sqrt(static_cast<double>(elements) / row.squaredNorm());
  row *= scale;
  if (debug_paths) {
    for (auto& p : paths) p.gain *= scale;
    *debug_paths = std::move(paths);
  }
  return row;
}

// Surrogate for a minimum user spacing: redraw when any two deterministic
// rows are nearly collinear.
bool rows_diverse(const MatrixXcd& g) {
  for (std::int64_t u = 0; u < g.rows(); ++u)
    for (std::int64_t v = u + 1; v < g.rows(); ++v) {
      const double corr = std::abs(g.row(u).dot(g.row(v).conjugate())) /
                          (g.row(u).norm() * g.row(v).norm());
      if (corr > 0.9) return false;
    }
  return true;
}

MatrixXcd draw_deterministic_user_matrix(const ScenarioConfig& cfg, Rng& rng,
                                         PathDebug* debug) {
  const ArrayGeometry ris =
      ArrayGeometry::planar(cfg.ris_rows, cfg.ris_cols);
  MatrixXcd g(cfg.users, cfg.ris_elements());
  for (int attempt = 0; attempt < 1000; ++attempt) {
    std::vector<std::vector<PathDebug::Path>> paths(cfg.users);
    for (std::int64_t u = 0; u < cfg.users; ++u)
      g.row(u) = draw_user_row(ris, cfg.ris_elements(), rng,
                               debug ? &paths[u] : nullptr);
    if (cfg.users < 2 || rows_diverse(g)) {
      if (debug) debug->user_paths = std::move(paths);
      return g;
    }
  }
  throw NumericError("generate_sample: no diverse user draw in 1000 attempts");
}

MatrixXcd draw_iid_matrix(std::int64_t rows, std::int64_t cols,
                          double entry_power, Rng& rng) {
  const double s = std::sqrt(entry_power / 2.0);
  MatrixXcd m(rows, cols);
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c)
      m(r, c) = {s * rng.normal(), s * rng.normal()};
  return m;
}

// Direct BS-user entries sit 20 dB below the unit RIS-user scale: the direct
// link has no line of sight but must stay nonzero so the equivalent BS-side
// feature is well defined.
constexpr double kDirectLinkPower = 0.01;

}  // namespace

void ScenarioConfig::validate() const {
  if (bs_antennas < 1 || ris_rows < 1 || ris_cols < 1 || users < 1)
    throw ConfigError("ScenarioConfig: all counts must be >= 1");
  if (transmit_power <= 0.0)
    throw ConfigError("ScenarioConfig: transmit power must be > 0");
  if (noise_power <= 0.0)
    throw ConfigError("ScenarioConfig: noise power must be > 0");
  if (mix_power_ratio < 0.0)
    throw ConfigError("ScenarioConfig: mix_power_ratio must be >= 0");
}

ArrayGeometry ArrayGeometry::linear(std::int64_t count) {
  if (count < 1) throw ConfigError("linear array needs at least one element");
  ArrayGeometry g;
  g.positions.reserve(count);
  for (std::int64_t i = 0; i < count; ++i)
    g.positions.push_back({static_cast<double>(i), 0.0, 0.0});
  return g;
}

ArrayGeometry ArrayGeometry::planar(std::int64_t rows, std::int64_t cols) {
  if (rows < 1 || cols < 1)
    throw ConfigError("planar array needs positive dimensions");
  ArrayGeometry g;
  g.positions.reserve(rows * cols);
  // Row-major: the flat index of (r, c) is c + r*cols.
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t c = 0; c < cols; ++c)
      g.positions.push_back(
          {static_cast<double>(c), static_cast<double>(r), 0.0});
  return g;
}

ad::ComplexTensor steering_vector(const ArrayGeometry& geometry,
                                  const std::array<double, 3>& direction,
                                  double spacing) {
  const double norm = std::sqrt(direction[0] * direction[0] +
                                direction[1] * direction[1] +
                                direction[2] * direction[2]);
  if (std::abs(norm - 1.0) > 1e-9)
    throw ContractError("steering_vector: direction must be a unit vector");
  const auto n = static_cast<std::int64_t>(geometry.positions.size());
  std::vector<double> re(n), im(n);
  for (std::int64_t p = 0; p < n; ++p) {
    const auto& pos = geometry.positions[p];
    const double phase = kTwoPi * spacing *
                         (pos[0] * direction[0] + pos[1] * direction[1] +
                          pos[2] * direction[2]);
    re[p] = std::cos(phase);
    im[p] = std::sin(phase);
  }
  return {ad::Tensor::from_data({n}, std::move(re)),
          ad::Tensor::from_data({n}, std::move(im))};
}

ChannelSample generate_sample(const ScenarioConfig& config, Rng& rng,
                              PathDebug* debug) {
  config.validate();

  Rng h_rng = Rng(config.rng_seed).split(1);
  const MatrixXcd h = draw_bs_ris_channel(config, h_rng, debug);

  MatrixXcd g;
  switch (config.regime) {
    case ChannelRegime::kDeterministic:
      g = draw_deterministic_user_matrix(config, rng, debug);
      break;
    case ChannelRegime::kIid:
      g = draw_iid_matrix(config.users, config.ris_elements(), 1.0, rng);
      break;
    case ChannelRegime::kDeterministicPlusIid:
      g = draw_deterministic_user_matrix(config, rng, debug) +
          std::sqrt(config.mix_power_ratio) *
              draw_iid_matrix(config.users, config.ris_elements(), 1.0, rng);
      break;
  }
  const MatrixXcd d =
      draw_iid_matrix(config.users, config.bs_antennas, kDirectLinkPower, rng);

  return {from_eigen(h), from_eigen(g), from_eigen(d)};
}

ad::ComplexTensor pseudo_inverse(const ad::ComplexTensor& matrix) {
  if (matrix.shape().size() != 2)
    throw ContractError("pseudo_inverse: operand must be a matrix");
  const std::int64_t rows = matrix.shape()[0], cols = matrix.shape()[1];
  if (rows < cols)
    throw ContractError("pseudo_inverse: matrix must be tall (rows >= cols)");

  const MatrixXcd a = to_eigen(matrix);
  const MatrixXcd gram = a.adjoint() * a;
  Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(gram);
  const auto& lambda = eig.eigenvalues();
  const double lo = lambda.minCoeff(), hi = lambda.maxCoeff();
  if (lo <= 0.0 || hi / lo > 1e12)
    throw NumericError("pseudo_inverse: Gram matrix condition exceeds 1e12");
  const MatrixXcd inv_gram = eig.eigenvectors() *
                             lambda.cwiseInverse().asDiagonal() *
                             eig.eigenvectors().adjoint();
  return from_eigen(inv_gram * a.adjoint());
}

ChannelFeature channel_feature(const ChannelSample& sample) {
  const std::int64_t users = sample.users();
  const std::int64_t elements = sample.ris_elements();

  const ad::ComplexTensor pinv = pseudo_inverse(sample.bs_to_ris);
  const MatrixXcd j = to_eigen(sample.bs_to_users) * to_eigen(pinv);

  auto g_re = sample.ris_to_users.re.data();
  auto g_im = sample.ris_to_users.im.data();
  std::vector<double> values(4 * users * elements);
  const auto at = [&](std::int64_t f, std::int64_t u, std::int64_t n)
      -> double& { return values[(f * users + u) * elements + n]; };
  for (std::int64_t u = 0; u < users; ++u)
    for (std::int64_t n = 0; n < elements; ++n) {
      const std::complex<double> g{g_re[u * elements + n],
                                   g_im[u * elements + n]};
      at(0, u, n) = std::abs(g);
      at(1, u, n) = std::arg(g);
      at(2, u, n) = std::abs(j(u, n));
      at(3, u, n) = std::arg(j(u, n));
    }
  return {ad::Tensor::from_data({4, users, elements}, std::move(values)),
          std::nullopt};
}

ChannelFeature restrict_to_anchors(const ChannelFeature& feature,
                                   const std::vector<std::int64_t>& anchors) {
  const std::int64_t users = feature.users();
  const std::int64_t elements = feature.elements();
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (anchors[i] < 0 || anchors[i] >= elements)
      throw ContractError("restrict_to_anchors: index out of range");
    if (i > 0 && anchors[i] <= anchors[i - 1])
      throw ContractError("restrict_to_anchors: indices must be strictly increasing");
  }
  const auto k = static_cast<std::int64_t>(anchors.size());
  std::vector<double> values(4 * users * k);
  auto src = feature.values.data();
  for (std::int64_t f = 0; f < 4; ++f)
    for (std::int64_t u = 0; u < users; ++u)
      for (std::int64_t i = 0; i < k; ++i)
        values[(f * users + u) * k + i] =
            src[(f * users + u) * elements + anchors[i]];
  return {ad::Tensor::from_data({4, users, k}, std::move(values)), anchors};
}

}  // namespace risopt
