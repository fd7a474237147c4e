#include "risopt/complex_tensor.hpp"

#include "risopt/errors.hpp"

namespace risopt::ad {

ComplexTensor::ComplexTensor(Tensor real, Tensor imag)
    : re(std::move(real)), im(std::move(imag)) {
  if (re.shape() != im.shape())
    throw DimensionError("ComplexTensor: real/imaginary shapes differ");
}

ComplexTensor ComplexTensor::zeros(Shape shape, bool requires_grad) {
  return {Tensor::zeros(shape, requires_grad),
          Tensor::zeros(std::move(shape), requires_grad)};
}

ComplexTensor ComplexTensor::from_values(
    Shape shape, const std::vector<std::complex<double>>& v,
    bool requires_grad) {
  std::vector<double> re(v.size()), im(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    re[i] = v[i].real();
    im[i] = v[i].imag();
  }
  return {Tensor::from_data(shape, std::move(re), requires_grad),
          Tensor::from_data(std::move(shape), std::move(im), requires_grad)};
}

std::vector<std::complex<double>> ComplexTensor::values() const {
  std::vector<std::complex<double>> out(re.size());
  auto r = re.data();
  auto i = im.data();
  for (std::int64_t k = 0; k < re.size(); ++k) out[k] = {r[k], i[k]};
  return out;
}

std::complex<double> ComplexTensor::at(
    std::initializer_list<std::int64_t> idx) const {
  return {re.at(idx), im.at(idx)};
}

ComplexTensor cadd(const ComplexTensor& a, const ComplexTensor& b) {
  return {add(a.re, b.re), add(a.im, b.im)};
}

ComplexTensor csub(const ComplexTensor& a, const ComplexTensor& b) {
  return {sub(a.re, b.re), sub(a.im, b.im)};
}

ComplexTensor cmul(const ComplexTensor& a, const ComplexTensor& b) {
  return {sub(mul(a.re, b.re), mul(a.im, b.im)),
          add(mul(a.re, b.im), mul(a.im, b.re))};
}

ComplexTensor cmatmul(const ComplexTensor& a, const ComplexTensor& b) {
  return {sub(matmul(a.re, b.re), matmul(a.im, b.im)),
          add(matmul(a.re, b.im), matmul(a.im, b.re))};
}

ComplexTensor unit_phasor(const Tensor& psi) { return {cos(psi), sin(psi)}; }

Tensor cabs2(const ComplexTensor& a) {
  return add(square(a.re), square(a.im));
}

}  // namespace risopt::ad
