#pragma once

#include <Eigen/Dense>

#include "risopt/complex_tensor.hpp"

namespace risopt::detail {

// Bridges between the row-major (re, im) tensor pairs and Eigen's complex
// matrices. Vectors map to single-column matrices.
inline Eigen::MatrixXcd to_eigen(const ad::ComplexTensor& t) {
  const auto& s = t.shape();
  Eigen::MatrixXcd m(s[0], s.size() > 1 ? s[1] : 1);
  auto re = t.re.data();
  auto im = t.im.data();
  for (std::int64_t r = 0; r < m.rows(); ++r)
    for (std::int64_t c = 0; c < m.cols(); ++c) {
      const auto k = r * m.cols() + c;
      m(r, c) = {re[k], im[k]};
    }
  return m;
}

inline ad::ComplexTensor from_eigen(const Eigen::MatrixXcd& m) {
  std::vector<double> re(m.size()), im(m.size());
  for (std::int64_t r = 0; r < m.rows(); ++r)
    for (std::int64_t c = 0; c < m.cols(); ++c) {
      const auto k = r * m.cols() + c;
      re[k] = m(r, c).real();
      im[k] = m(r, c).imag();
    }
  ad::Shape shape{m.rows(), m.cols()};
  return {ad::Tensor::from_data(shape, std::move(re)),
          ad::Tensor::from_data(std::move(shape), std::move(im))};
}

}  // namespace risopt::detail
