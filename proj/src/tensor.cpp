#include "interbin/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "interbin/error.hpp"

namespace interbin::ad {

namespace {

thread_local bool g_grad_enabled = true;

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + detail);
}

void require_rank(const Tensor& t, std::size_t lo, std::size_t hi, const char* op) {
  if (t.rank() < lo || t.rank() > hi) {
    shape_error(op, "unsupported rank " + std::to_string(t.rank()) + " for shape " + shape_str(t.shape()));
  }
}

void accumulate(Node& parent, std::span<const double> delta) {
  auto& g = parent.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

// Elementwise unary op with derivative expressed through input and output.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  detail::check_finite(a, op);
  std::vector<double> out(a.numel());
  const auto in = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  Tensor r = detail::make_result(a.shape(), std::move(out), {a}, op);
  detail::set_backward(r, [deriv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  });
  return r;
}

}  // namespace

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<double>& Node::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value.assign(numel_of(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel_of(shape) != values.size()) {
    shape_error("from", "shape " + shape_str(shape) + " needs " + std::to_string(numel_of(shape)) +
                            " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

std::size_t Tensor::rows() const {
  switch (rank()) {
    case 0:
    case 1: return 1;
    case 2: return shape()[0];
    default: shape_error("rows", "rank > 2");
  }
}

std::size_t Tensor::cols() const {
  switch (rank()) {
    case 0: return 1;
    case 1: return shape()[0];
    case 2: return shape()[1];
    default: shape_error("cols", "rank > 2");
  }
}

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorCode::NotScalar, "item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.size() == node_->value.size()) return node_->grad;
  return std::vector<double>(node_->value.size(), 0.0);
}

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

ComputationTape ComputationTape::record(const Tensor& root) {
  ComputationTape tape;
  if (!root.defined() || !root.requires_grad()) return tape;
  std::unordered_set<Node*> visited;
  // Iterative post-order DFS: a node is emitted after all of its parents.
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw Error(ErrorCode::NotScalar, "backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!requires_grad()) return;
  const ComputationTape tape = ComputationTape::record(*this);
  // Interior gradients restart from zero; leaf gradients accumulate across calls.
  for (Node* n : tape.nodes()) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), 0.0);
  }
  node_->ensure_grad()[0] += 1.0;
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

namespace detail {

void check_finite(const Tensor& t, const char* op) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, std::string(op) + ": operand holds NaN or Inf");
  }
}

Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs, const char* op) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto& t : inputs) node->parents.push_back(t.node());
    }
  }
  return Tensor(std::move(node));
}

void set_backward(Tensor& result, std::function<void(Node&)> fn) {
  if (result.requires_grad()) result.node()->backward_fn = std::move(fn);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 1, 2, "matmul");
  require_rank(b, 2, 2, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.dim(1);
  if (b.dim(0) != k) shape_error("matmul", shape_str(a.shape()) + " x " + shape_str(b.shape()));
  detail::check_finite(a, "matmul");
  detail::check_finite(b, "matmul");
  std::vector<double> out(m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = av[i * k + p];
      const double* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
  Shape shape = a.rank() == 1 ? Shape{n} : Shape{m, n};
  Tensor r = detail::make_result(std::move(shape), std::move(out), {a, b}, "matmul");
  detail::set_backward(r, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* g = self.grad.data();
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* brow = pb.value.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * brow[j];
          ga[i * k + p] += acc;
        }
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double s = pa.value[i * k + p];
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += s * g[i * n + j];
        }
    }
  });
  return r;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
  Tensor r = detail::make_result({n, m}, std::move(out), {a}, "transpose");
  detail::set_backward(r, [m, n](Node& self) {
    Node& p = *self.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
  return r;
}

Tensor bilinear(const Tensor& a, const Tensor& w, const Tensor& b) {
  require_rank(a, 2, 2, "bilinear");
  require_rank(w, 2, 2, "bilinear");
  require_rank(b, 2, 2, "bilinear");
  const std::size_t m = a.dim(0), d1 = a.dim(1), d2 = w.dim(1), n = b.dim(0);
  if (w.dim(0) != d1 || b.dim(1) != d2) {
    shape_error("bilinear", shape_str(a.shape()) + " " + shape_str(w.shape()) + " " + shape_str(b.shape()));
  }
  detail::check_finite(a, "bilinear");
  detail::check_finite(w, "bilinear");
  detail::check_finite(b, "bilinear");
  // t = a w, kept for the backward pass.
  auto t = std::make_shared<std::vector<double>>(m * d2, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < d1; ++p) {
      const double s = a.values()[i * d1 + p];
      for (std::size_t j = 0; j < d2; ++j) (*t)[i * d2 + j] += s * w.values()[p * d2 + j];
    }
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t q = 0; q < d2; ++q) acc += (*t)[i * d2 + q] * b.values()[j * d2 + q];
      out[i * n + j] = acc;
    }
  Tensor r = detail::make_result({m, n}, std::move(out), {a, w, b}, "bilinear");
  detail::set_backward(r, [t, m, d1, d2, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    const double* g = self.grad.data();
    // gt = g b  [m, d2]
    std::vector<double> gt(m * d2, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double s = g[i * n + j];
        if (s == 0.0) continue;
        for (std::size_t q = 0; q < d2; ++q) gt[i * d2 + q] += s * pb.value[j * d2 + q];
      }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double s = g[i * n + j];
          for (std::size_t q = 0; q < d2; ++q) gb[j * d2 + q] += s * (*t)[i * d2 + q];
        }
    }
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < d1; ++p) {
          double acc = 0.0;
          for (std::size_t q = 0; q < d2; ++q) acc += gt[i * d2 + q] * pw.value[p * d2 + q];
          ga[i * d1 + p] += acc;
        }
    }
    if (pw.requires_grad) {
      auto& gw = pw.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < d1; ++p) {
          const double s = pa.value[i * d1 + p];
          for (std::size_t q = 0; q < d2; ++q) gw[p * d2 + q] += s * gt[i * d2 + q];
        }
    }
  });
  return r;
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  const bool row_bias = a.rank() == 2 && b.rank() == 1 && b.dim(0) == a.dim(1);
  if (!row_bias && a.shape() != b.shape()) {
    shape_error("add", shape_str(a.shape()) + " + " + shape_str(b.shape()));
  }
  detail::check_finite(a, "add");
  detail::check_finite(b, "add");
  std::vector<double> out(a.values().begin(), a.values().end());
  const std::size_t n = b.numel();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i % n];
  Tensor r = detail::make_result(a.shape(), std::move(out), {a, b}, "add");
  detail::set_backward(r, [n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, self.grad);
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % n] += self.grad[i];
    }
  });
  return r;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", shape_str(a.shape()) + " - " + shape_str(b.shape()));
  detail::check_finite(a, "sub");
  detail::check_finite(b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  Tensor r = detail::make_result(a.shape(), std::move(out), {a, b}, "sub");
  detail::set_backward(r, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) accumulate(pa, self.grad);
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i];
    }
  });
  return r;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", shape_str(a.shape()) + " * " + shape_str(b.shape()));
  detail::check_finite(a, "mul");
  detail::check_finite(b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  Tensor r = detail::make_result(a.shape(), std::move(out), {a, b}, "mul");
  detail::set_backward(r, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * pa.value[i];
    }
  });
  return r;
}

Tensor div(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("div", shape_str(a.shape()) + " / " + shape_str(b.shape()));
  detail::check_finite(a, "div");
  detail::check_finite(b, "div");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] / b.values()[i];
  Tensor r = detail::make_result(a.shape(), std::move(out), {a, b}, "div");
  detail::set_backward(r, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] / pb.value[i];
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= self.grad[i] * self.value[i] / pb.value[i];
    }
  });
  return r;
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, "scale", [factor](double x) { return x * factor; },
               [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(a, "add_scalar", [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sqrt(const Tensor& a) {
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor log(const Tensor& a, double floor) {
  return unary(a, "log", [floor](double x) { return std::log(std::max(x, floor)); },
               [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

// ---------------------------------------------------------------------------
// Structural

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) shape_error("concat", "no inputs");
  const std::size_t rank = parts[0].rank();
  if (rank < 1 || rank > 2 || axis >= rank) shape_error("concat", "bad axis/rank");
  for (const auto& p : parts) {
    if (p.rank() != rank) shape_error("concat", "rank mismatch");
    if (rank == 2 && p.dim(1 - axis) != parts[0].dim(1 - axis)) {
      shape_error("concat", shape_str(p.shape()) + " vs " + shape_str(parts[0].shape()));
    }
  }
  Shape shape = parts[0].shape();
  shape[axis] = 0;
  for (const auto& p : parts) shape[axis] += p.dim(axis);

  std::vector<double> out;
  out.reserve(numel_of(shape));
  // Per part: offset of its first column (axis 1) or of its first element.
  std::vector<std::size_t> offsets;
  if (rank == 1 || axis == 0) {
    for (const auto& p : parts) {
      offsets.push_back(out.size());
      out.insert(out.end(), p.values().begin(), p.values().end());
    }
  } else {
    const std::size_t rows = shape[0];
    std::size_t col = 0;
    for (const auto& p : parts) {
      offsets.push_back(col);
      col += p.dim(1);
    }
    out.assign(numel_of(shape), 0.0);
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const std::size_t w = parts[k].dim(1);
      for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(parts[k].values().data() + r * w, w, out.data() + r * shape[1] + offsets[k]);
    }
  }

  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(out);
  node->op = "concat";
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (any && g_grad_enabled) {
    node->requires_grad = true;
    for (const auto& p : parts) node->parents.push_back(p.node());
    const bool by_rows = rank == 1 || axis == 0;
    const std::size_t total_cols = rank == 2 ? shape[1] : 0;
    node->backward_fn = [offsets, by_rows, total_cols](Node& self) {
      for (std::size_t k = 0; k < self.parents.size(); ++k) {
        Node& p = *self.parents[k];
        if (!p.requires_grad) continue;
        auto& g = p.ensure_grad();
        if (by_rows) {
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[k] + i];
        } else {
          const std::size_t w = p.shape[1];
          for (std::size_t r = 0; r < p.shape[0]; ++r)
            for (std::size_t c = 0; c < w; ++c) g[r * w + c] += self.grad[r * total_cols + offsets[k] + c];
        }
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor sum(const Tensor& a, std::size_t axis) {
  require_rank(a, 1, 2, "sum");
  if (axis >= a.rank()) shape_error("sum", "axis out of range");
  if (a.rank() == 1) return sum_all(a);
  const std::size_t m = a.dim(0), n = a.dim(1);
  const std::size_t out_n = axis == 0 ? n : m;
  std::vector<double> out(out_n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += a.values()[i * n + j];
  Tensor r = detail::make_result({out_n}, std::move(out), {a}, "sum");
  detail::set_backward(r, [axis, m, n](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[axis == 0 ? j : i];
  });
  return r;
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor r = detail::make_result({}, {s}, {a}, "sum_all");
  detail::set_backward(r, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (double& x : g) x += self.grad[0];
  });
  return r;
}

MaxResult max_over_axis(const Tensor& a, std::size_t axis) {
  require_rank(a, 1, 2, "max_over_axis");
  if (axis >= a.rank()) shape_error("max_over_axis", "axis out of range");
  const std::size_t m = a.rows(), n = a.cols();
  // For rank 1 the single row is reduced.
  const bool over_rows = a.rank() == 2 && axis == 0;
  const std::size_t out_n = a.rank() == 1 ? 1 : (over_rows ? n : m);
  const std::size_t len = over_rows ? m : n;
  if (len == 0) shape_error("max_over_axis", "empty axis");
  detail::check_finite(a, "max_over_axis");
  std::vector<double> out(out_n);
  std::vector<std::size_t> arg(out_n);
  for (std::size_t o = 0; o < out_n; ++o) {
    std::size_t best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < len; ++t) {
      const double v = over_rows ? a.values()[t * n + o] : a.values()[o * n + t];
      if (v > best_v) {
        best_v = v;
        best = t;
      }
    }
    out[o] = best_v;
    arg[o] = over_rows ? best * n + o : o * n + best;
  }
  Shape shape = a.rank() == 1 ? Shape{} : Shape{out_n};
  Tensor r = detail::make_result(std::move(shape), std::move(out), {a}, "max_over_axis");
  detail::set_backward(r, [arg](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t o = 0; o < arg.size(); ++o) g[arg[o]] += self.grad[o];
  });
  MaxResult res{r, {}};
  res.argmax.reserve(arg.size());
  for (std::size_t o = 0; o < arg.size(); ++o) res.argmax.push_back(over_rows ? arg[o] / n : arg[o] % n);
  return res;
}

Tensor softmax(const Tensor& a, std::size_t axis, std::span<const std::uint8_t> mask) {
  require_rank(a, 1, 2, "softmax");
  if (axis >= a.rank()) shape_error("softmax", "axis out of range");
  if (!mask.empty() && mask.size() != a.numel()) shape_error("softmax", "mask size mismatch");
  detail::check_finite(a, "softmax");
  const std::size_t m = a.rows(), n = a.cols();
  const bool over_rows = a.rank() == 2 && axis == 0;
  const std::size_t slices = over_rows ? n : m;
  const std::size_t len = over_rows ? m : n;
  if (len == 0) shape_error("softmax", "empty axis");
  const std::size_t stride = over_rows ? n : 1;
  auto base = [&](std::size_t s) { return over_rows ? s : s * n; };
  auto valid = [&](std::size_t idx) { return mask.empty() || mask[idx] != 0; };

  std::vector<double> out(a.numel(), 0.0);
  for (std::size_t s = 0; s < slices; ++s) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t idx = base(s) + t * stride;
      if (valid(idx)) mx = std::max(mx, a.values()[idx]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) continue;
    double z = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t idx = base(s) + t * stride;
      if (valid(idx)) {
        out[idx] = std::exp(a.values()[idx] - mx);
        z += out[idx];
      }
    }
    for (std::size_t t = 0; t < len; ++t) out[base(s) + t * stride] /= z;
  }
  Tensor r = detail::make_result(a.shape(), std::move(out), {a}, "softmax");
  detail::set_backward(r, [slices, len, stride, over_rows, n](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t s = 0; s < slices; ++s) {
      const std::size_t b0 = over_rows ? s : s * n;
      double dot = 0.0;
      for (std::size_t t = 0; t < len; ++t) dot += self.value[b0 + t * stride] * self.grad[b0 + t * stride];
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t idx = b0 + t * stride;
        g[idx] += self.value[idx] * (self.grad[idx] - dot);
      }
    }
  });
  return r;
}

Tensor embedding_gather(const Tensor& table, std::span<const std::int32_t> indices) {
  require_rank(table, 2, 2, "embedding_gather");
  const std::size_t v = table.dim(0), d = table.dim(1);
  std::vector<double> out(indices.size() * d, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::int32_t idx = indices[i];
    if (idx < 0) continue;
    if (static_cast<std::size_t>(idx) >= v) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "embedding index " + std::to_string(idx) + " >= table size " + std::to_string(v));
    }
    std::copy_n(table.values().data() + idx * d, d, out.data() + i * d);
  }
  std::vector<std::int32_t> idx(indices.begin(), indices.end());
  Tensor r = detail::make_result({indices.size(), d}, std::move(out), {table}, "embedding_gather");
  detail::set_backward(r, [idx = std::move(idx), d](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0) continue;
      for (std::size_t c = 0; c < d; ++c) g[idx[i] * d + c] += self.grad[i * d + c];
    }
  });
  return r;
}

Tensor conv1d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t kernel_size) {
  require_rank(input, 2, 2, "conv1d");
  require_rank(kernels, 2, 2, "conv1d");
  require_rank(bias, 1, 1, "conv1d");
  const std::size_t l = input.dim(0), c = input.dim(1), f = kernels.dim(0);
  const std::size_t width = kernel_size * c;
  if (kernel_size == 0 || kernels.dim(1) != width || bias.dim(0) != f) {
    shape_error("conv1d", "kernels " + shape_str(kernels.shape()) + " bias " + shape_str(bias.shape()) +
                              " do not fit input " + shape_str(input.shape()));
  }
  if (l < kernel_size) shape_error("conv1d", "input length shorter than kernel");
  detail::check_finite(input, "conv1d");
  detail::check_finite(kernels, "conv1d");
  detail::check_finite(bias, "conv1d");
  const std::size_t out_len = l - kernel_size + 1;
  std::vector<double> out(out_len * f);
  const double* x = input.values().data();
  const double* w = kernels.values().data();
  for (std::size_t k = 0; k < out_len; ++k) {
    const double* window = x + k * c;  // rows k..k+n-1 are contiguous
    for (std::size_t o = 0; o < f; ++o) {
      double acc = bias.values()[o];
      const double* wo = w + o * width;
      for (std::size_t q = 0; q < width; ++q) acc += wo[q] * window[q];
      out[k * f + o] = acc;
    }
  }
  Tensor r = detail::make_result({out_len, f}, std::move(out), {input, kernels, bias}, "conv1d");
  detail::set_backward(r, [out_len, f, width, c](Node& self) {
    Node& pin = *self.parents[0];
    Node& pk = *self.parents[1];
    Node& pb = *self.parents[2];
    for (std::size_t k = 0; k < out_len; ++k) {
      for (std::size_t o = 0; o < f; ++o) {
        const double g = self.grad[k * f + o];
        if (g == 0.0) continue;
        if (pb.requires_grad) pb.ensure_grad()[o] += g;
        if (pk.requires_grad) {
          double* gw = pk.ensure_grad().data() + o * width;
          const double* window = pin.value.data() + k * c;
          for (std::size_t q = 0; q < width; ++q) gw[q] += g * window[q];
        }
        if (pin.requires_grad) {
          double* gx = pin.ensure_grad().data() + k * c;
          const double* wo = pk.value.data() + o * width;
          for (std::size_t q = 0; q < width; ++q) gx[q] += g * wo[q];
        }
      }
    }
  });
  return r;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, 2, "slice_rows");
  if (begin > end || end > a.dim(0)) shape_error("slice_rows", "range out of bounds");
  const std::size_t n = a.dim(1);
  std::vector<double> out(a.values().begin() + begin * n, a.values().begin() + end * n);
  Tensor r = detail::make_result({end - begin, n}, std::move(out), {a}, "slice_rows");
  detail::set_backward(r, [begin, n](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
  });
  return r;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, 2, "slice_cols");
  if (begin > end || end > a.dim(1)) shape_error("slice_cols", "range out of bounds");
  const std::size_t m = a.dim(0), n = a.dim(1), w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(a.values().data() + i * n + begin, w, out.data() + i * w);
  Tensor r = detail::make_result({m, w}, std::move(out), {a}, "slice_cols");
  detail::set_backward(r, [begin, m, n, w](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += self.grad[i * w + j];
  });
  return r;
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) shape_error("reshape", shape_str(a.shape()) + " -> " + shape_str(shape));
  Tensor r = detail::make_result(std::move(shape), std::vector<double>(a.values().begin(), a.values().end()), {a},
                                 "reshape");
  detail::set_backward(r, [](Node& self) { accumulate(*self.parents[0], self.grad); });
  return r;
}

Tensor mask_rows(const Tensor& a, std::span<const std::uint8_t> mask) {
  require_rank(a, 2, 2, "mask_rows");
  if (mask.size() != a.dim(0)) shape_error("mask_rows", "mask length mismatch");
  const std::size_t n = a.dim(1);
  std::vector<double> out(a.values().begin(), a.values().end());
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (!mask[i]) std::fill_n(out.data() + i * n, n, 0.0);
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  Tensor r = detail::make_result(a.shape(), std::move(out), {a}, "mask_rows");
  detail::set_backward(r, [keep = std::move(keep), n](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (keep[i])
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * n + j];
  });
  return r;
}

Tensor pad_cols(const Tensor& a, std::size_t width) {
  require_rank(a, 2, 2, "pad_cols");
  if (width < a.dim(1)) shape_error("pad_cols", "target width smaller than input");
  if (width == a.dim(1)) return a;
  const Tensor parts[] = {a, Tensor::zeros({a.dim(0), width - a.dim(1)})};
  return concat(parts, 1);
}

Tensor pick(const Tensor& a, std::size_t index) {
  if (index >= a.numel()) throw Error(ErrorCode::IndexOutOfRange, "pick index out of range");
  Tensor r = detail::make_result({}, {a.values()[index]}, {a}, "pick");
  detail::set_backward(r, [index](Node& self) { self.parents[0]->ensure_grad()[index] += self.grad[0]; });
  return r;
}

// ---------------------------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> params, const GradCheckOptions& opt) {
  for (auto& p : params) p.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.grad());

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      auto at = [&](double offset) {
        values[i] = saved + offset;
        return f().item();
      };
      auto numeric_at = [&](double h) {
        NoGradGuard no_grad;
        if (opt.five_point) return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h);
        return (at(h) - at(-h)) / (2 * h);
      };
      const double a = analytic[k][i];
      auto error_of = [&](double n) { return std::abs(a - n) / std::max(std::abs(a) + std::abs(n), opt.floor); };
      double numeric = numeric_at(opt.eps);
      double err = error_of(numeric);
      double h = opt.eps;
      for (int r = 0; r < opt.refinements && err > opt.refine_above; ++r) {
        h /= 10.0;
        const double n = numeric_at(h);
        ++report.refined;
        if (error_of(n) < err) {
          numeric = n;
          err = error_of(n);
        }
      }
      values[i] = saved;
      if (err > report.max_relative_error) {
        const std::size_t refined = report.refined;
        report = {err, k, i, a, numeric, refined};
      }
    }
  }
  return report;
}

GradCheckReport grad_check(const std::function<Tensor()>& f, std::span<Tensor> params) {
  return grad_check(f, params, GradCheckOptions{});
}

}  // namespace interbin::ad
