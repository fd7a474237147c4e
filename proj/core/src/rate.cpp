#include "risopt/rate.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "risopt/errors.hpp"

namespace risopt {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kLog2e = std::numbers::log2e;

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

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

double plain_sum_rate(const MatrixXcd& combined, double noise_power) {
  double total = 0.0;
  for (std::int64_t u = 0; u < combined.rows(); ++u) {
    double interference = 0.0;
    for (std::int64_t v = 0; v < combined.cols(); ++v)
      if (v != u) interference += std::norm(combined(u, v));
    total += std::log2(1.0 + std::norm(combined(u, u)) /
                                 (interference + noise_power));
  }
  return total;
}

// Sum of squared beam norms for the regularized solve at multiplier mu,
// using the eigendecomposition of the Gram matrix.
double beam_power_at(const VectorXd& lambda,
                     const std::vector<VectorXcd>& projected_rhs, double mu) {
  double power = 0.0;
  for (const auto& rhs : projected_rhs)
    for (std::int64_t m = 0; m < lambda.size(); ++m) {
      const double denom = lambda(m) + mu;
      if (denom <= 0.0) return std::numeric_limits<double>::infinity();
      power += std::norm(rhs(m)) / (denom * denom);
    }
  return power;
}

}  // namespace

double Precoder::total_power() const {
  double p = 0.0;
  for (double v : beams.re.data()) p += v * v;
  for (double v : beams.im.data()) p += v * v;
  return p;
}

ad::ComplexTensor effective_channel(const ChannelSample& sample,
                                    const PhaseConfig& phase) {
  const std::int64_t users = sample.users();
  const std::int64_t elements = sample.ris_elements();
  if (phase.elements() != elements)
    throw DimensionError("effective_channel: phase count differs from RIS size");

  const ad::ComplexTensor phasor = ad::unit_phasor(phase.psi);
  const ad::ComplexTensor phasor_rows{ad::expand(phasor.re, 0, users),
                                      ad::expand(phasor.im, 0, users)};
  const ad::ComplexTensor scaled =
      ad::cmul(sample.ris_to_users, phasor_rows);  // G with phased columns
  return ad::cadd(ad::cmatmul(scaled, sample.bs_to_ris), sample.bs_to_users);
}

ad::ComplexTensor combined_channel(const ChannelSample& sample,
                                   const PhaseConfig& phase,
                                   const Precoder& precoder) {
  return ad::cmatmul(effective_channel(sample, phase), precoder.beams);
}

ad::Tensor sum_rate(const ad::ComplexTensor& combined, double noise_power) {
  if (noise_power <= 0.0)
    throw ContractError("sum_rate: noise power must be > 0");
  if (combined.shape().size() != 2 ||
      combined.shape()[0] != combined.shape()[1])
    throw DimensionError("sum_rate: combined matrix must be square");
  const std::int64_t users = combined.shape()[0];

  std::vector<double> eye(users * users, 0.0);
  for (std::int64_t u = 0; u < users; ++u) eye[u * users + u] = 1.0;
  const ad::Tensor mask = ad::Tensor::from_data({users, users}, std::move(eye));

  const ad::Tensor power = ad::cabs2(combined);
  const ad::Tensor signal = ad::reduce(ad::mul(power, mask), 1, ad::Reduce::kSum);
  const ad::Tensor row_total = ad::reduce(power, 1, ad::Reduce::kSum);
  const ad::Tensor interference = ad::sub(row_total, signal);
  const ad::Tensor sinr =
      ad::div(signal, ad::add_scalar(interference, noise_power));
  const ad::Tensor rate =
      ad::scalar_mul(ad::log(ad::add_scalar(sinr, 1.0)), kLog2e);
  return ad::reduce(rate, 0, ad::Reduce::kSum);
}

Precoder wmmse_precoder(const ad::ComplexTensor& channel,
                        const WmmseSettings& settings) {
  if (settings.transmit_power <= 0.0 || settings.noise_power <= 0.0)
    throw ContractError("wmmse_precoder: powers must be > 0");
  const MatrixXcd a = to_eigen(channel);
  const std::int64_t users = a.rows(), antennas = a.cols();
  if (a.norm() == 0.0)
    throw NumericError("wmmse_precoder: effective channel is zero");

  // Matched-filter start, scaled to use the full power budget.
  MatrixXcd beams = a.adjoint();
  beams *= std::sqrt(settings.transmit_power) / beams.norm();

  double prev_rate = plain_sum_rate(a * beams, settings.noise_power);
  for (int iter = 0; iter < settings.max_iters; ++iter) {
    const MatrixXcd coupling = a * beams;  // U x U

    // Scalar MMSE receivers and MSE weights.
    VectorXcd rx(users);
    VectorXd weight(users);
    for (std::int64_t u = 0; u < users; ++u) {
      double denom = settings.noise_power;
      for (std::int64_t v = 0; v < users; ++v) denom += std::norm(coupling(u, v));
      rx(u) = coupling(u, u) / denom;
      const std::complex<double> residual =
          1.0 - std::conj(rx(u)) * coupling(u, u);
      weight(u) = 1.0 / residual.real();
    }

    MatrixXcd gram = MatrixXcd::Zero(antennas, antennas);
    MatrixXcd rhs(antennas, users);
    for (std::int64_t u = 0; u < users; ++u) {
      const VectorXcd h_u = a.row(u).adjoint();
      gram += weight(u) * std::norm(rx(u)) * h_u * h_u.adjoint();
      rhs.col(u) = weight(u) * std::conj(rx(u)) * h_u;
    }

    Eigen::SelfAdjointEigenSolver<MatrixXcd> eig(gram);
    const VectorXd lambda = eig.eigenvalues();
    std::vector<VectorXcd> projected(users);
    for (std::int64_t u = 0; u < users; ++u)
      projected[u] = eig.eigenvectors().adjoint() * rhs.col(u);

    double mu = 0.0;
    if (beam_power_at(lambda, projected, 0.0) >
        settings.transmit_power + 1e-12) {
      double hi = 1.0;
      while (beam_power_at(lambda, projected, hi) > settings.transmit_power)
        hi *= 2.0;
      double lo = 0.0;
      for (int step = 0; step < 50; ++step) {
        const double mid = 0.5 * (lo + hi);
        if (beam_power_at(lambda, projected, mid) > settings.transmit_power)
          lo = mid;
        else
          hi = mid;
      }
      mu = hi;
    } else {
      // The unconstrained solve is used as-is; it must be well posed.
      const double lo = lambda.minCoeff(), hi_l = lambda.maxCoeff();
      if (lo <= 0.0 || hi_l / lo > 1e12)
        throw NumericError("wmmse_precoder: singular precoder system");
    }

    for (std::int64_t u = 0; u < users; ++u) {
      VectorXcd scaled = projected[u];
      for (std::int64_t m = 0; m < antennas; ++m) scaled(m) /= lambda(m) + mu;
      beams.col(u) = eig.eigenvectors() * scaled;
    }

    const double rate = plain_sum_rate(a * beams, settings.noise_power);
    const double improvement = rate - prev_rate;
    prev_rate = rate;
    if (std::abs(improvement) < settings.tol) break;
  }
  return {from_eigen(beams)};
}

double achieved_sum_rate(const ad::ComplexTensor& channel,
                         const Precoder& precoder, double noise_power) {
  return plain_sum_rate(to_eigen(channel) * to_eigen(precoder.beams),
                        noise_power);
}

PhaseConfig quantize_phases(const PhaseConfig& phase, int levels) {
  if (levels < 2) throw ContractError("quantize_phases: levels must be >= 2");
  const double step = kTwoPi / levels;
  std::vector<double> out(phase.psi.size());
  auto src = phase.psi.data();
  for (std::int64_t n = 0; n < phase.psi.size(); ++n) {
    double t = std::fmod(src[n], kTwoPi);
    if (t < 0.0) t += kTwoPi;
    const double x = t / step;
    double k = std::floor(x + 0.5);
    if (x - std::floor(x) == 0.5) k = std::floor(x);  // ties round down
    if (k >= levels) k -= levels;                      // wrap past 2pi
    out[n] = k * step;
  }
  return {ad::Tensor::from_data({phase.psi.size()}, std::move(out))};
}

}  // namespace risopt
