#pragma once

// Dense double-precision tensors with reverse-mode automatic differentiation.
//
// A Tensor is a cheap handle onto a graph node. Operations on tensors that
// require gradients record their parents and a local backward rule; calling
// backward() on a scalar result orders the reachable nodes topologically and
// accumulates d(loss)/d(node) into every leaf that requires gradients.
//
// Only rank 0, 1 and 2 tensors are supported. Broadcasting is limited to the
// row-bias form add([m, n], [n]).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace interbin::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  const char* op = "leaf";

  bool is_leaf() const { return parents.empty(); }
  std::vector<double>& ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }
  // Rows/cols view a rank-1 tensor as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return node_->value; }
  // Direct write access, intended for parameters (optimizer updates, loading).
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double at(std::size_t i) const { return node_->value.at(i); }
  double at(std::size_t r, std::size_t c) const { return node_->value.at(r * cols() + c); }

  bool requires_grad() const { return node_->requires_grad; }
  // Zeros when no gradient has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  void backward() const;

  // Same values, no history.
  Tensor detach() const;

  const Node* id() const { return node_.get(); }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Topologically ordered nodes reachable from a root through nodes that
// require gradients. Parents always precede their children.
class ComputationTape {
 public:
  static ComputationTape record(const Tensor& root);
  const std::vector<Node*>& nodes() const { return nodes_; }

 private:
  std::vector<Node*> nodes_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---------------------------------------------------------------------------
// Operations

// [m, k] x [k, n] -> [m, n]; a rank-1 left operand [k] gives [n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);

struct MaxResult {
  Tensor values;
  std::vector<std::size_t> argmax;
};
// Ties resolve to the lowest index.
MaxResult max_over_axis(const Tensor& a, std::size_t axis);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
// log(max(a, floor)); the gradient is zero where the floor is active.
Tensor log(const Tensor& a, double floor = 0.0);

// Max-subtracted softmax along `axis`. Entries with mask == 0 get zero weight;
// a fully masked slice yields zeros. The mask, when given, has a.numel() entries.
Tensor softmax(const Tensor& a, std::size_t axis, std::span<const std::uint8_t> mask = {});

// Rows of `table` [V, d] selected by `indices`; negative indices select an
// all-zero row. Result [len, d].
Tensor embedding_gather(const Tensor& table, std::span<const std::int32_t> indices);

// Stride 1, no padding. input [l, c], kernels [f, n * c], bias [f] -> [l - n + 1, f].
Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t kernel_size);

// a [m, d1], w [d1, d2], b [n, d2] -> a w b^T, [m, n].
Tensor bilinear(const Tensor& a, const Tensor& w, const Tensor& b);

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);
// Rows with mask == 0 become zero.
Tensor mask_rows(const Tensor& a, std::span<const std::uint8_t> mask);
// Right-pads [m, n] with zero columns to [m, width].
Tensor pad_cols(const Tensor& a, std::size_t width);
// Scalar holding a.values()[index].
Tensor pick(const Tensor& a, std::size_t index);

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  // Elements re-evaluated with a smaller step.
  std::size_t refined = 0;
};

struct GradCheckOptions {
  double eps = 1e-4;
  // Lower bound on the error denominator; gradients far below it are compared
  // in absolute terms.
  double floor = 1e-6;
  // (-f(x+2h) + 8f(x+h) - 8f(x-h) + f(x-2h)) / 12h instead of the central
  // difference (f(x+h) - f(x-h)) / 2h.
  bool five_point = true;
  // An element whose error exceeds refine_above is re-evaluated with steps
  // eps / 10, eps / 100, ... and keeps the best agreement. A step that
  // straddles a ReLU or max-pool switch sees a different branch; a smaller
  // one around the same point does not.
  int refinements = 2;
  double refine_above = 1e-6;
};

// Compares backward() gradients of the scalar returned by `f` with finite
// differences for every element of every parameter. Error per element is
// |a - n| / max(|a| + |n|, floor).
GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                           const GradCheckOptions& options);
GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> params);

namespace detail {

// Building blocks for fused operations defined outside this module.
void check_finite(const Tensor& t, const char* op);
Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
                   const char* op);
void set_backward(Tensor& result, std::function<void(Node&)> fn);

}  // namespace detail

}  // namespace interbin::ad
