#pragma once

#include <complex>
#include <vector>

#include "risopt/autodiff.hpp"

namespace risopt::ad {

// Complex values carried as a (real, imaginary) pair of equally shaped real
// tensors. All differentiation happens on the real parts.
struct ComplexTensor {
  Tensor re;
  Tensor im;

  ComplexTensor() = default;
  ComplexTensor(Tensor real, Tensor imag);

  static ComplexTensor zeros(Shape shape, bool requires_grad = false);
  static ComplexTensor from_values(Shape shape,
                                   const std::vector<std::complex<double>>& v,
                                   bool requires_grad = false);

  const Shape& shape() const { return re.shape(); }
  std::int64_t size() const { return re.size(); }
  std::vector<std::complex<double>> values() const;
  std::complex<double> at(std::initializer_list<std::int64_t> idx) const;
};

ComplexTensor cadd(const ComplexTensor& a, const ComplexTensor& b);
ComplexTensor csub(const ComplexTensor& a, const ComplexTensor& b);
// Elementwise complex product.
ComplexTensor cmul(const ComplexTensor& a, const ComplexTensor& b);
// (Ar + jAi)(Br + jBi) = (Ar Br - Ai Bi) + j(Ar Bi + Ai Br).
ComplexTensor cmatmul(const ComplexTensor& a, const ComplexTensor& b);
// Entrywise e^{j psi} = (cos psi, sin psi); unit modulus for any real psi.
ComplexTensor unit_phasor(const Tensor& psi);
// |a|^2 entrywise as a real tensor.
Tensor cabs2(const ComplexTensor& a);

}  // namespace risopt::ad
