#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace risopt::ad {

using Shape = std::vector<std::int64_t>;

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One recorded operation. `value` is immutable once the node is built;
// `grad` is filled by the reverse sweep. `backprop` reads this node's grad
// and accumulates into the parents' grads.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;

  std::int64_t size() const { return static_cast<std::int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major tensor of 64-bit reals. A Tensor is a cheap handle onto an
// immutable graph node; copies share the node. Gradients accumulate on the
// node across backward passes until zero_grad().
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  // Rank-0 scalar.
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::int64_t rank() const;
  std::int64_t size() const;
  std::int64_t dim(int axis) const;
  bool requires_grad() const;

  std::span<const double> data() const;
  double item() const;  // value of a single-element tensor
  double at(std::initializer_list<std::int64_t> idx) const;

  // Gradient accumulated by backward(); contract error if none present.
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();

  // A fresh leaf with the same values and no history.
  Tensor detached(bool requires_grad = false) const;

  detail::NodePtr node() const { return node_; }
  static Tensor wrap(detail::NodePtr n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  detail::NodePtr node_;
};

// While alive, newly created nodes record no parents and no backprop
// functions, so forward evaluation is side-effect free. Nestable.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

bool grad_enabled();

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Guards: any zero denominator is a numeric error.
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor scalar_mul(const Tensor& a, double c);
Tensor relu(const Tensor& x);
// Guards: any argument <= 0 is a numeric error.
Tensor log(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor square(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---- linear algebra ----
// W [Q x P], x [P] or [P x ...cols]; b [Q], broadcast over columns.
Tensor affine(const Tensor& W, const Tensor& x, const Tensor& b);
// a [m x k], b [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);

// ---- structure ----
enum class Reduce { kSum, kMean };
Tensor reduce(const Tensor& x, int axis, Reduce mode);
// Inserts a new axis of length `count` at `axis`, repeating values; the
// adjoint of reduce over that axis.
Tensor expand(const Tensor& x, int axis, std::int64_t count);
Tensor concat(std::span<const Tensor> parts, int axis);
// out[..., o] = x[..., idx[o]] along the last axis.
Tensor gather_last(const Tensor& x, const std::vector<std::int64_t>& idx);
// Rows [r0, r1) along axis 0.
Tensor slice_rows(const Tensor& x, std::int64_t r0, std::int64_t r1);
Tensor reshape(const Tensor& x, Shape new_shape);

// ---- autodiff ----

// Reverse sweep bookkeeping: the topological order over the subgraph that
// reaches `root` through grad-requiring nodes.
class GradTape {
 public:
  explicit GradTape(const Tensor& root);
  // Seeds d(root)/d(root) = 1 and accumulates into every requires_grad leaf.
  void backward();
  std::size_t num_nodes() const { return order_.size(); }

 private:
  detail::NodePtr root_;
  std::vector<detail::Node*> order_;
};

// Contract error unless `loss` is a single-element tensor on a live graph.
void backward(const Tensor& loss);

struct GradCheckResult {
  double max_rel_error = 0.0;
  // Coordinates skipped because the two one-sided differences disagree
  // (an activation kink lies inside the probe interval).
  std::vector<std::int64_t> flagged;
};

// Central-difference check of d f / d x against the analytic gradient.
// Relative error uses max(|analytic|, |central|, 1e-12) as denominator.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f,
                           const Tensor& x, double eps);

}  // namespace risopt::ad
