#include "risopt/baselines.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "eigen_bridge.hpp"
#include "risopt/errors.hpp"

namespace risopt {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

using detail::from_eigen;
using detail::to_eigen;
using Eigen::MatrixXcd;

double rate_of(const MatrixXcd& coupling, double noise_power) {
  double total = 0.0;
  for (std::int64_t u = 0; u < coupling.rows(); ++u) {
    double interference = 0.0;
    for (std::int64_t v = 0; v < coupling.cols(); ++v)
      if (v != u) interference += std::norm(coupling(u, v));
    total += std::log2(1.0 + std::norm(coupling(u, u)) /
                                 (interference + noise_power));
  }
  return total;
}

MatrixXcd effective(const MatrixXcd& g, const MatrixXcd& h, const MatrixXcd& d,
                    const std::vector<double>& psi) {
  MatrixXcd scaled = g;
  for (std::int64_t n = 0; n < g.cols(); ++n)
    scaled.col(n) *= std::complex<double>{std::cos(psi[n]), std::sin(psi[n])};
  return scaled * h + d;
}

}  // namespace

PhaseConfig random_phases(std::int64_t elements, Rng& rng) {
  if (elements < 1) throw ContractError("random_phases: need at least one element");
  std::vector<double> psi(elements);
  for (auto& p : psi) p = rng.uniform(0.0, kTwoPi);
  return {ad::Tensor::from_data({elements}, std::move(psi))};
}

BcdResult bcd_optimize(const ChannelSample& sample, const BcdConfig& config,
                       const WmmseSettings& wmmse) {
  if (config.grid_points < 2)
    throw ConfigError("bcd_optimize: need at least 2 grid points");
  if (config.outer_iters < 1)
    throw ConfigError("bcd_optimize: need at least 1 outer iteration");

  const MatrixXcd g = to_eigen(sample.ris_to_users);
  const MatrixXcd h = to_eigen(sample.bs_to_ris);
  const MatrixXcd d = to_eigen(sample.bs_to_users);
  const std::int64_t users = g.rows();
  const std::int64_t elements = g.cols();

  std::vector<double> psi(elements, 0.0);
  std::vector<std::complex<double>> candidates(config.grid_points);
  for (int k = 0; k < config.grid_points; ++k) {
    const double angle = kTwoPi * k / config.grid_points;
    candidates[k] = {std::cos(angle), std::sin(angle)};
  }

  BcdResult result;
  MatrixXcd beams;
  double rate = -1.0;
  for (int outer = 0; outer < config.outer_iters; ++outer) {
    const double round_start = rate;

    // (a) Precoder for the current phases; kept only if it helps, so the
    // trace stays monotone.
    {
      const MatrixXcd a = effective(g, h, d, psi);
      Precoder fresh = wmmse_precoder(
          {ad::ComplexTensor::from_values({users, a.cols()},
                                          {a.data(), a.data() + a.size()})},
          wmmse);
      const MatrixXcd fresh_beams = to_eigen(fresh.beams);
      const double fresh_rate = rate_of(a * fresh_beams, wmmse.noise_power);
      if (fresh_rate > rate) {
        beams = fresh_beams;
        rate = fresh_rate;
      }
      result.rate_trace.push_back(rate);
    }

    // (b) One sweep of per-element grid search. Each element contributes a
    // rank-one term phi_n * t_n to the coupling matrix, so candidate rates
    // are evaluated incrementally.
    MatrixXcd coupling = effective(g, h, d, psi) * beams;
    for (std::int64_t n = 0; n < elements; ++n) {
      const MatrixXcd term = g.col(n) * (h.row(n) * beams);  // U x U
      const std::complex<double> current{std::cos(psi[n]), std::sin(psi[n])};
      const MatrixXcd base = coupling - current * term;

      double best_rate = rate;
      int best_k = -1;
      for (int k = 0; k < config.grid_points; ++k) {
        const double cand_rate =
            rate_of(base + candidates[k] * term, wmmse.noise_power);
        if (cand_rate > best_rate) {
          best_rate = cand_rate;
          best_k = k;
        }
      }
      if (best_k >= 0) {
        psi[n] = kTwoPi * best_k / config.grid_points;
        coupling = base + candidates[best_k] * term;
        rate = best_rate;
      }
    }
    // Fresh evaluation clears the accumulated incremental rounding.
    coupling = effective(g, h, d, psi) * beams;
    rate = rate_of(coupling, wmmse.noise_power);
    result.rate_trace.push_back(rate);

    if (rate - round_start < config.tol) break;
  }

  result.phase = {ad::Tensor::from_data({elements}, std::move(psi))};
  std::vector<std::complex<double>> beam_values(beams.size());
  for (std::int64_t r = 0; r < beams.rows(); ++r)
    for (std::int64_t c = 0; c < beams.cols(); ++c)
      beam_values[r * beams.cols() + c] = beams(r, c);
  result.precoder = {ad::ComplexTensor::from_values(
      {beams.rows(), beams.cols()}, beam_values)};
  return result;
}

}  // namespace risopt
