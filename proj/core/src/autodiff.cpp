#include "risopt/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "risopt/errors.hpp"

namespace risopt::ad {

using detail::Node;
using detail::NodePtr;

namespace {

thread_local int g_no_grad_depth = 0;

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

NodePtr leaf_node(Shape shape, std::vector<double> value, bool requires_grad) {
  if (numel(shape) != static_cast<std::int64_t>(value.size()))
    throw DimensionError("tensor data length " + std::to_string(value.size()) +
                         " does not match shape " + shape_str(shape));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad && g_no_grad_depth == 0;
  return n;
}

// Builds an op node. History is recorded only when gradients are enabled and
// some parent needs them; otherwise the result is a plain constant.
Tensor make_op(Shape shape, std::vector<double> value,
               std::vector<NodePtr> parents,
               std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (g_no_grad_depth == 0) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->requires_grad;
    if (needs) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backprop = std::move(backprop);
    }
  }
  return Tensor::wrap(std::move(n));
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Grad accumulation helper; skips constants.
void accum(Node& parent, std::int64_t i, double v) {
  if (!parent.requires_grad) return;
  parent.ensure_grad();
  parent.grad[i] += v;
}

struct AxisSplit {
  std::int64_t outer, len, inner;
};

AxisSplit split_axis(const Shape& s, int axis, const char* op) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(s));
  AxisSplit r{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

Tensor elementwise_unary(const Tensor& x, const char* name,
                         double (*fwd)(double), double (*dfd)(double)) {
  std::vector<double> out(x.size());
  const auto xs = x.data();
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = fwd(xs[i]);
  auto xp = x.node();
  return make_op(x.shape(), std::move(out), {xp}, [dfd](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::int64_t i = 0; i < self.size(); ++i)
      p.grad[i] += self.grad[i] * dfd(p.value[i]);
  });
}

}  // namespace

// ---- Tensor ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = numel(shape);
  return wrap(leaf_node(std::move(shape), std::vector<double>(n, 0.0),
                        requires_grad));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = numel(shape);
  return wrap(
      leaf_node(std::move(shape), std::vector<double>(n, v), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  return wrap(leaf_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return wrap(leaf_node({}, {v}, requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::int64_t Tensor::rank() const {
  return static_cast<std::int64_t>(node_->shape.size());
}
std::int64_t Tensor::size() const { return node_->size(); }
std::int64_t Tensor::dim(int axis) const { return node_->shape.at(axis); }
bool Tensor::requires_grad() const { return node_->requires_grad; }

std::span<const double> Tensor::data() const { return node_->value; }

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("item(): tensor has " + std::to_string(size()) +
                        " elements");
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
  if (static_cast<std::int64_t>(idx.size()) != rank())
    throw ContractError("at(): index rank mismatch");
  std::int64_t flat = 0;
  int axis = 0;
  for (auto i : idx) {
    if (i < 0 || i >= node_->shape[axis])
      throw ContractError("at(): index out of range");
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

std::span<const double> Tensor::grad() const {
  if (!has_grad())
    throw ContractError("grad(): no gradient accumulated on this tensor");
  return node_->grad;
}

bool Tensor::has_grad() const {
  return node_ && node_->grad.size() == node_->value.size();
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detached(bool requires_grad) const {
  return wrap(leaf_node(node_->shape, node_->value, requires_grad));
}

// ---- NoGradGuard ----

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = av[i] + bv[i];
  return make_op(a.shape(), std::move(out), {a.node(), b.node()},
                 [](Node& self) {
                   for (int k = 0; k < 2; ++k) {
                     Node& p = *self.parents[k];
                     if (!p.requires_grad) continue;
                     p.ensure_grad();
                     for (std::int64_t i = 0; i < self.size(); ++i)
                       p.grad[i] += self.grad[i];
                   }
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = av[i] - bv[i];
  return make_op(a.shape(), std::move(out), {a.node(), b.node()},
                 [](Node& self) {
                   Node& pa = *self.parents[0];
                   if (pa.requires_grad) {
                     pa.ensure_grad();
                     for (std::int64_t i = 0; i < self.size(); ++i)
                       pa.grad[i] += self.grad[i];
                   }
                   Node& pb = *self.parents[1];
                   if (pb.requires_grad) {
                     pb.ensure_grad();
                     for (std::int64_t i = 0; i < self.size(); ++i)
                       pb.grad[i] -= self.grad[i];
                   }
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = av[i] * bv[i];
  return make_op(a.shape(), std::move(out), {a.node(), b.node()},
                 [](Node& self) {
                   Node& pa = *self.parents[0];
                   Node& pb = *self.parents[1];
                   if (pa.requires_grad) {
                     pa.ensure_grad();
                     for (std::int64_t i = 0; i < self.size(); ++i)
                       pa.grad[i] += self.grad[i] * pb.value[i];
                   }
                   if (pb.requires_grad) {
                     pb.ensure_grad();
                     for (std::int64_t i = 0; i < self.size(); ++i)
                       pb.grad[i] += self.grad[i] * pa.value[i];
                   }
                 });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  std::vector<double> out(a.size());
  const auto av = a.data(), bv = b.data();
  for (std::int64_t i = 0; i < a.size(); ++i) {
    if (bv[i] == 0.0) throw NumericError("div: zero denominator");
    out[i] = av[i] / bv[i];
  }
  return make_op(a.shape(), std::move(out), {a.node(), b.node()},
                 [](Node& self) {
                   Node& pa = *self.parents[0];
                   Node& pb = *self.parents[1];
                   if (pa.requires_grad) {
                     pa.ensure_grad();
                     for (std::int64_t i = 0; i < self.size(); ++i)
                       pa.grad[i] += self.grad[i] / pb.value[i];
                   }
                   if (pb.requires_grad) {
                     pb.ensure_grad();
                     for (std::int64_t i = 0; i < self.size(); ++i)
                       pb.grad[i] -= self.grad[i] * self.value[i] / pb.value[i];
                   }
                 });
}

Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  const auto av = a.data();
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = av[i] + c;
  return make_op(a.shape(), std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::int64_t i = 0; i < self.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor scalar_mul(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  const auto av = a.data();
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = av[i] * c;
  return make_op(a.shape(), std::move(out), {a.node()}, [c](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::int64_t i = 0; i < self.size(); ++i)
      p.grad[i] += self.grad[i] * c;
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xv = x.data();
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return make_op(x.shape(), std::move(out), {x.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    // Subgradient at exactly 0 is 0.
    for (std::int64_t i = 0; i < self.size(); ++i)
      if (p.value[i] > 0.0) p.grad[i] += self.grad[i];
  });
}

Tensor log(const Tensor& x) {
  std::vector<double> out(x.size());
  const auto xv = x.data();
  for (std::int64_t i = 0; i < x.size(); ++i) {
    if (xv[i] <= 0.0) throw NumericError("log: argument <= 0");
    out[i] = std::log(xv[i]);
  }
  return make_op(x.shape(), std::move(out), {x.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (std::int64_t i = 0; i < self.size(); ++i)
      p.grad[i] += self.grad[i] / p.value[i];
  });
}

Tensor cos(const Tensor& x) {
  return elementwise_unary(
      x, "cos", [](double v) { return std::cos(v); },
      [](double v) { return -std::sin(v); });
}

Tensor sin(const Tensor& x) {
  return elementwise_unary(
      x, "sin", [](double v) { return std::sin(v); },
      [](double v) { return std::cos(v); });
}

Tensor square(const Tensor& x) {
  return elementwise_unary(
      x, "square", [](double v) { return v * v; },
      [](double v) { return 2.0 * v; });
}

// ---- linear algebra ----

Tensor affine(const Tensor& W, const Tensor& x, const Tensor& b) {
  if (W.rank() != 2) throw DimensionError("affine: W must be rank 2");
  const std::int64_t Q = W.dim(0), P = W.dim(1);
  if (x.rank() < 1 || x.dim(0) != P)
    throw DimensionError("affine: x leading dim " + shape_str(x.shape()) +
                         " does not match W " + shape_str(W.shape()));
  if (b.rank() != 1 || b.dim(0) != Q)
    throw DimensionError("affine: b must have shape [" + std::to_string(Q) +
                         "]");
  const std::int64_t C = x.size() / P;

  std::vector<double> out(Q * C);
  {
    ConstMapMat Wm(W.data().data(), Q, P);
    ConstMapMat Xm(x.data().data(), P, C);
    MapMat Ym(out.data(), Q, C);
    Ym.noalias() = Wm * Xm;
    for (std::int64_t q = 0; q < Q; ++q) Ym.row(q).array() += b.data()[q];
  }
  Shape out_shape = x.shape();
  out_shape[0] = Q;
  return make_op(
      std::move(out_shape), std::move(out), {W.node(), x.node(), b.node()},
      [Q, P, C](Node& self) {
        Node& wn = *self.parents[0];
        Node& xn = *self.parents[1];
        Node& bn = *self.parents[2];
        ConstMapMat Gm(self.grad.data(), Q, C);
        if (wn.requires_grad) {
          wn.ensure_grad();
          MapMat dW(wn.grad.data(), Q, P);
          ConstMapMat Xm(xn.value.data(), P, C);
          dW.noalias() += Gm * Xm.transpose();
        }
        if (xn.requires_grad) {
          xn.ensure_grad();
          MapMat dX(xn.grad.data(), P, C);
          ConstMapMat Wm(wn.value.data(), Q, P);
          dX.noalias() += Wm.transpose() * Gm;
        }
        if (bn.requires_grad) {
          bn.ensure_grad();
          for (std::int64_t q = 0; q < Q; ++q) bn.grad[q] += Gm.row(q).sum();
        }
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul: operands must be rank 2");
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw DimensionError("matmul: inner dims disagree " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(m * n);
  {
    ConstMapMat Am(a.data().data(), m, k);
    ConstMapMat Bm(b.data().data(), k, n);
    MapMat Cm(out.data(), m, n);
    Cm.noalias() = Am * Bm;
  }
  return make_op({m, n}, std::move(out), {a.node(), b.node()},
                 [m, k, n](Node& self) {
                   Node& an = *self.parents[0];
                   Node& bn = *self.parents[1];
                   ConstMapMat Gm(self.grad.data(), m, n);
                   if (an.requires_grad) {
                     an.ensure_grad();
                     MapMat dA(an.grad.data(), m, k);
                     ConstMapMat Bm(bn.value.data(), k, n);
                     dA.noalias() += Gm * Bm.transpose();
                   }
                   if (bn.requires_grad) {
                     bn.ensure_grad();
                     MapMat dB(bn.grad.data(), k, n);
                     ConstMapMat Am(an.value.data(), m, k);
                     dB.noalias() += Am.transpose() * Gm;
                   }
                 });
}

// ---- structure ----

Tensor reduce(const Tensor& x, int axis, Reduce mode) {
  const auto sp = split_axis(x.shape(), axis, "reduce");
  Shape out_shape;
  for (int i = 0; i < static_cast<int>(x.rank()); ++i)
    if (i != axis) out_shape.push_back(x.shape()[i]);

  const double scale = mode == Reduce::kMean ? 1.0 / sp.len : 1.0;
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  const auto xv = x.data();
  for (std::int64_t o = 0; o < sp.outer; ++o)
    for (std::int64_t l = 0; l < sp.len; ++l) {
      const double* src = xv.data() + (o * sp.len + l) * sp.inner;
      double* dst = out.data() + o * sp.inner;
      for (std::int64_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  if (mode == Reduce::kMean)
    for (auto& v : out) v *= scale;

  return make_op(std::move(out_shape), std::move(out), {x.node()},
                 [sp, scale](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   for (std::int64_t o = 0; o < sp.outer; ++o)
                     for (std::int64_t l = 0; l < sp.len; ++l) {
                       double* dst = p.grad.data() + (o * sp.len + l) * sp.inner;
                       const double* src = self.grad.data() + o * sp.inner;
                       for (std::int64_t i = 0; i < sp.inner; ++i)
                         dst[i] += src[i] * scale;
                     }
                 });
}

Tensor expand(const Tensor& x, int axis, std::int64_t count) {
  if (axis < 0 || axis > static_cast<int>(x.rank()))
    throw DimensionError("expand: axis out of range");
  if (count < 1) throw DimensionError("expand: count must be >= 1");
  Shape out_shape = x.shape();
  out_shape.insert(out_shape.begin() + axis, count);
  const auto sp = split_axis(out_shape, axis, "expand");

  std::vector<double> out(x.size() * count);
  const auto xv = x.data();
  for (std::int64_t o = 0; o < sp.outer; ++o)
    for (std::int64_t l = 0; l < count; ++l) {
      const double* src = xv.data() + o * sp.inner;
      double* dst = out.data() + (o * count + l) * sp.inner;
      std::copy(src, src + sp.inner, dst);
    }
  return make_op(std::move(out_shape), std::move(out), {x.node()},
                 [sp, count](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   for (std::int64_t o = 0; o < sp.outer; ++o)
                     for (std::int64_t l = 0; l < count; ++l) {
                       const double* src =
                           self.grad.data() + (o * count + l) * sp.inner;
                       double* dst = p.grad.data() + o * sp.inner;
                       for (std::int64_t i = 0; i < sp.inner; ++i)
                         dst[i] += src[i];
                     }
                 });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  const Shape& first = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(first.size()))
    throw DimensionError("concat: axis out of range");
  std::int64_t axis_total = 0;
  for (const auto& t : parts) {
    if (t.rank() != parts[0].rank())
      throw DimensionError("concat: rank mismatch");
    for (int i = 0; i < static_cast<int>(first.size()); ++i)
      if (i != axis && t.shape()[i] != first[i])
        throw DimensionError("concat: shape mismatch off the concat axis");
    axis_total += t.shape()[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = axis_total;
  const auto sp = split_axis(out_shape, axis, "concat");

  std::vector<double> out(numel(out_shape));
  std::vector<std::int64_t> lens;
  lens.reserve(parts.size());
  for (const auto& t : parts) lens.push_back(t.shape()[axis]);

  for (std::int64_t o = 0; o < sp.outer; ++o) {
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const double* src = parts[k].data().data() + o * lens[k] * sp.inner;
      double* dst = out.data() + (o * axis_total + offset) * sp.inner;
      std::copy(src, src + lens[k] * sp.inner, dst);
      offset += lens[k];
    }
  }
  std::vector<NodePtr> parent_nodes;
  parent_nodes.reserve(parts.size());
  for (const auto& t : parts) parent_nodes.push_back(t.node());
  return make_op(std::move(out_shape), std::move(out), std::move(parent_nodes),
                 [sp, lens, axis_total](Node& self) {
                   for (std::int64_t o = 0; o < sp.outer; ++o) {
                     std::int64_t offset = 0;
                     for (std::size_t k = 0; k < self.parents.size(); ++k) {
                       Node& p = *self.parents[k];
                       if (p.requires_grad) {
                         p.ensure_grad();
                         const double* src =
                             self.grad.data() +
                             (o * axis_total + offset) * sp.inner;
                         double* dst = p.grad.data() + o * lens[k] * sp.inner;
                         for (std::int64_t i = 0; i < lens[k] * sp.inner; ++i)
                           dst[i] += src[i];
                       }
                       offset += lens[k];
                     }
                   }
                 });
}

Tensor gather_last(const Tensor& x, const std::vector<std::int64_t>& idx) {
  if (x.rank() < 1) throw DimensionError("gather_last: rank 0 operand");
  const std::int64_t L = x.shape().back();
  for (auto i : idx)
    if (i < 0 || i >= L)
      throw ContractError("gather_last: index " + std::to_string(i) +
                          " out of range [0, " + std::to_string(L) + ")");
  const std::int64_t outer = x.size() / L;
  const std::int64_t K = static_cast<std::int64_t>(idx.size());
  Shape out_shape = x.shape();
  out_shape.back() = K;

  std::vector<double> out(outer * K);
  const auto xv = x.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    const double* src = xv.data() + o * L;
    double* dst = out.data() + o * K;
    for (std::int64_t j = 0; j < K; ++j) dst[j] = src[idx[j]];
  }
  return make_op(std::move(out_shape), std::move(out), {x.node()},
                 [outer, L, K, idx](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   for (std::int64_t o = 0; o < outer; ++o) {
                     const double* src = self.grad.data() + o * K;
                     double* dst = p.grad.data() + o * L;
                     for (std::int64_t j = 0; j < K; ++j)
                       dst[idx[j]] += src[j];
                   }
                 });
}

Tensor slice_rows(const Tensor& x, std::int64_t r0, std::int64_t r1) {
  if (x.rank() < 1) throw DimensionError("slice_rows: rank 0 operand");
  const std::int64_t R = x.dim(0);
  if (r0 < 0 || r1 > R || r0 >= r1)
    throw ContractError("slice_rows: bad range [" + std::to_string(r0) + ", " +
                        std::to_string(r1) + ") for dim " + std::to_string(R));
  const std::int64_t inner = x.size() / R;
  Shape out_shape = x.shape();
  out_shape[0] = r1 - r0;

  std::vector<double> out(x.data().begin() + r0 * inner,
                          x.data().begin() + r1 * inner);
  return make_op(std::move(out_shape), std::move(out), {x.node()},
                 [r0, r1, inner](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   double* dst = p.grad.data() + r0 * inner;
                   for (std::int64_t i = 0; i < (r1 - r0) * inner; ++i)
                     dst[i] += self.grad[i];
                 });
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  if (numel(new_shape) != x.size())
    throw DimensionError("reshape: element count mismatch " +
                         shape_str(x.shape()) + " -> " + shape_str(new_shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op(std::move(new_shape), std::move(out), {x.node()},
                 [](Node& self) {
                   Node& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   for (std::int64_t i = 0; i < self.size(); ++i)
                     p.grad[i] += self.grad[i];
                 });
}

// ---- autodiff ----

GradTape::GradTape(const Tensor& root) : root_(root.node()) {
  if (!root_) throw ContractError("GradTape: undefined root tensor");
  // Iterative post-order DFS over parent edges: parents are emitted before
  // their consumers, so `order_` is topologically sorted and the reverse
  // sweep can walk it back to front.
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  if (root_->requires_grad) stack.emplace_back(root_.get(), 0);
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child == 0) {
      if (visited.count(node)) {
        stack.pop_back();
        continue;
      }
      visited.insert(node);
    }
    if (child < node->parents.size()) {
      Node* next = node->parents[child].get();
      ++child;
      if (next->requires_grad && !visited.count(next))
        stack.emplace_back(next, 0);
    } else {
      order_.push_back(node);
      stack.pop_back();
    }
  }
}

void GradTape::backward() {
  if (root_->size() != 1)
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_str(root_->shape));
  if (!root_->requires_grad)
    throw ContractError(
        "backward: loss does not depend on any gradient-tracked leaf");
  root_->ensure_grad();
  root_->grad[0] += 1.0;
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->grad.size() == n->value.size()) n->backprop(*n);
  }
}

void backward(const Tensor& loss) { GradTape(loss).backward(); }

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double eps) {
  Tensor leaf = x.detached(true);
  Tensor y = f(leaf);
  if (y.size() != 1) throw ContractError("grad_check: f must return a scalar");
  const double f0 = y.item();
  if (!std::isfinite(f0)) throw NumericError("grad_check: f(x) is not finite");
  backward(y);
  std::vector<double> analytic(x.size(), 0.0);
  if (leaf.has_grad()) {
    auto g = leaf.grad();
    analytic.assign(g.begin(), g.end());
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  std::vector<double> base(x.data().begin(), x.data().end());
  for (std::int64_t i = 0; i < x.size(); ++i) {
    std::vector<double> probe = base;
    probe[i] = base[i] + eps;
    const double fp = f(Tensor::from_data(x.shape(), probe)).item();
    probe[i] = base[i] - eps;
    const double fm = f(Tensor::from_data(x.shape(), probe)).item();
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("grad_check: perturbed evaluation is not finite");
    const double dplus = (fp - f0) / eps;
    const double dminus = (f0 - fm) / eps;
    // One-sided slopes that disagree indicate a kink inside the probe
    // interval; the coordinate is reported instead of checked.
    if (std::abs(dplus - dminus) >
        0.1 * std::max(std::abs(dplus), std::abs(dminus)) + 1e-9) {
      result.flagged.push_back(i);
      continue;
    }
    const double central = (fp - fm) / (2.0 * eps);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(central), 1e-12});
    result.max_rel_error =
        std::max(result.max_rel_error, std::abs(analytic[i] - central) / denom);
  }
  return result;
}

}  // namespace risopt::ad
