#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <utility>

#include "d2sep/common.hpp"

namespace d2sep {

template <class S>
struct TensorNode;

template <class S>
using NodePtr = std::shared_ptr<TensorNode<S>>;

template <class S>
struct TensorNode {
  std::vector<std::size_t> shape;
  AlignedVec<S> value;
  AlignedVec<S> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  const char* op = "leaf";

  std::vector<NodePtr<S>> parents;
  std::function<void(TensorNode<S>&)> backward_fn;

  std::size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
};

namespace detail {

inline std::size_t numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

template <class S>
void check_finite(const S* p, std::size_t n, const char* op) {
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(p[i]))
      throw numeric_error(std::string("non-finite output in op '") + op + "'");
  }
}

}  // namespace detail

// Dense row-major tensor with optional reverse-mode gradient. Handles share
// the underlying node; values are immutable after an op completes except for
// the designated in-place optimizer updates on leaves.
template <class S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() : n_(std::make_shared<TensorNode<S>>()) {}
  explicit Tensor(NodePtr<S> n) : n_(std::move(n)) {}

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode<S>>();
    n->shape = std::move(shape);
    n->value.assign(detail::numel(n->shape), S(0));
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor full(std::vector<std::size_t> shape, S v, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.data(), t.data() + t.size(), v);
    return t;
  }

  static Tensor scalar(S v) { return full({1}, v); }

  static Tensor from_data(std::vector<std::size_t> shape, const std::vector<S>& data,
                          bool requires_grad = false) {
    if (detail::numel(shape) != data.size())
      throw shape_error("data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_string(shape));
    Tensor t = zeros(std::move(shape), requires_grad);
    std::copy(data.begin(), data.end(), t.data());
    return t;
  }

  static Tensor uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi,
                        bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data()[i] = static_cast<S>(rng.uniform(lo, hi));
    return t;
  }

  static Tensor identity(std::size_t n) {
    Tensor t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data()[i * n + i] = S(1);
    return t;
  }

  const std::vector<std::size_t>& shape() const { return n_->shape; }
  std::size_t size() const { return n_->size(); }
  std::size_t ndim() const { return n_->shape.size(); }
  std::size_t rows() const { return n_->shape.empty() ? 1 : n_->shape[0]; }
  std::size_t cols() const {
    if (n_->shape.size() < 2) return n_->shape.empty() ? 1 : 1;
    std::size_t c = 1;
    for (std::size_t i = 1; i < n_->shape.size(); ++i) c *= n_->shape[i];
    return c;
  }

  S* data() { return n_->value.data(); }
  const S* data() const { return n_->value.data(); }
  S operator[](std::size_t i) const { return n_->value[i]; }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }

  bool has_grad() const { return n_->grad.size() == n_->value.size(); }
  S* grad_data() {
    n_->ensure_grad();
    return n_->grad.data();
  }
  const AlignedVec<S>& grad() const { return n_->grad; }
  void zero_grad() {
    if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), S(0));
  }

  S item() const {
    if (size() != 1) throw shape_error("item() on non-scalar tensor " + shape_string(shape()));
    return n_->value[0];
  }

  NodePtr<S> node() const { return n_; }
  TensorNode<S>& node_ref() const { return *n_; }

  // Reverse pass from a scalar root. Releases the recorded graph afterwards
  // so parameter handles do not keep whole forward passes alive.
  void backward() {
    if (size() != 1) throw shape_error("backward() requires a scalar root");
    if (!n_->requires_grad)
      throw contract_error("backward() on a tensor that does not require grad");
    std::vector<TensorNode<S>*> order;
    topo_order(order);
    n_->ensure_grad();
    n_->grad[0] = S(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      TensorNode<S>* node = *it;
      if (node->backward_fn) node->backward_fn(*node);
    }
    for (TensorNode<S>* node : order) {
      node->parents.clear();
      node->backward_fn = nullptr;
    }
  }

 private:
  void topo_order(std::vector<TensorNode<S>*>& order) {
    // iterative post-order DFS over grad-requiring subgraph
    std::unordered_set<TensorNode<S>*> seen;
    std::vector<std::pair<TensorNode<S>*, std::size_t>> stack;
    stack.emplace_back(n_.get(), 0);
    seen.insert(n_.get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        TensorNode<S>* p = node->parents[idx].get();
        ++idx;
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  NodePtr<S> n_;
};

namespace detail {

template <class S>
Tensor<S> make_op(std::vector<std::size_t> shape, const char* op,
                  std::vector<NodePtr<S>> parents,
                  std::function<void(TensorNode<S>&)> backward_fn) {
  auto n = std::make_shared<TensorNode<S>>();
  n->shape = std::move(shape);
  n->value.resize(numel(n->shape));
  n->op = op;
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  n->requires_grad = rg;
  if (rg) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor<S>(n);
}

template <class S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MapM = Eigen::Map<EMat<S>>;
template <class S>
using CMapM = Eigen::Map<const EMat<S>>;

}  // namespace detail

// ---------------------------------------------------------------------------
// primitive ops

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0])
    throw shape_error("matmul shape mismatch: " + shape_string(a.shape()) + " * " +
                      shape_string(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  auto an = a.node();
  auto bn = b.node();
  Tensor<S> out = detail::make_op<S>(
      {m, n}, "matmul", {an, bn}, [an, bn, m, k, n](TensorNode<S>& self) {
        detail::CMapM<S> g(self.grad.data(), m, n);
        detail::CMapM<S> av(an->value.data(), m, k);
        detail::CMapM<S> bv(bn->value.data(), k, n);
        if (an->requires_grad) {
          an->ensure_grad();
          detail::MapM<S> ga(an->grad.data(), m, k);
          ga.noalias() += g * bv.transpose();
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          detail::MapM<S> gb(bn->grad.data(), k, n);
          gb.noalias() += av.transpose() * g;
        }
      });
  detail::MapM<S> o(out.data(), m, n);
  detail::CMapM<S> av(a.data(), m, k);
  detail::CMapM<S> bv(b.data(), k, n);
  o.noalias() = av * bv;
  detail::check_finite(out.data(), out.size(), "matmul");
  return out;
}

namespace detail {

template <class S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw shape_error(std::string(op) + " shape mismatch: " + shape_string(a.shape()) +
                      " vs " + shape_string(b.shape()));
}

}  // namespace detail

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "add");
  auto an = a.node();
  auto bn = b.node();
  Tensor<S> out = detail::make_op<S>(a.shape(), "add", {an, bn}, [an, bn](TensorNode<S>& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i) bn->grad[i] += self.grad[i];
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  detail::check_finite(out.data(), out.size(), "add");
  return out;
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "sub");
  auto an = a.node();
  auto bn = b.node();
  Tensor<S> out = detail::make_op<S>(a.shape(), "sub", {an, bn}, [an, bn](TensorNode<S>& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i) bn->grad[i] -= self.grad[i];
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  detail::check_finite(out.data(), out.size(), "sub");
  return out;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "mul");
  auto an = a.node();
  auto bn = b.node();
  Tensor<S> out = detail::make_op<S>(a.shape(), "mul", {an, bn}, [an, bn](TensorNode<S>& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i)
        an->grad[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.size(); ++i)
        bn->grad[i] += self.grad[i] * an->value[i];
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  detail::check_finite(out.data(), out.size(), "mul");
  return out;
}

// m: [M x N], bias: [M] (or [M x 1]); bias broadcast along the column axis.
template <class S>
Tensor<S> add_bias(const Tensor<S>& m, const Tensor<S>& bias) {
  if (m.ndim() != 2 || bias.size() != m.shape()[0])
    throw shape_error("add_bias shape mismatch: " + shape_string(m.shape()) + " + " +
                      shape_string(bias.shape()));
  const std::size_t rows = m.shape()[0], cols = m.shape()[1];
  auto mn = m.node();
  auto bn = bias.node();
  Tensor<S> out = detail::make_op<S>(
      m.shape(), "add_bias", {mn, bn}, [mn, bn, rows, cols](TensorNode<S>& self) {
        if (mn->requires_grad) {
          mn->ensure_grad();
          for (std::size_t i = 0; i < self.size(); ++i) mn->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            S acc = S(0);
            for (std::size_t c = 0; c < cols; ++c) acc += self.grad[r * cols + c];
            bn->grad[r] += acc;
          }
        }
      });
  for (std::size_t r = 0; r < rows; ++r) {
    const S bv = bias.data()[r];
    for (std::size_t c = 0; c < cols; ++c)
      out.data()[r * cols + c] = m.data()[r * cols + c] + bv;
  }
  detail::check_finite(out.data(), out.size(), "add_bias");
  return out;
}

template <class S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  auto xn = x.node();
  Tensor<S> out = detail::make_op<S>(x.shape(), "sigmoid", {xn}, [xn](TensorNode<S>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) {
      const S y = self.value[i];
      xn->grad[i] += self.grad[i] * y * (S(1) - y);
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = S(1) / (S(1) + std::exp(-x.data()[i]));
  detail::check_finite(out.data(), out.size(), "sigmoid");
  return out;
}

template <class S>
Tensor<S> tanh(const Tensor<S>& x) {
  auto xn = x.node();
  Tensor<S> out = detail::make_op<S>(x.shape(), "tanh", {xn}, [xn](TensorNode<S>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) {
      const S y = self.value[i];
      xn->grad[i] += self.grad[i] * (S(1) - y * y);
    }
  });
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(x.data()[i]);
  detail::check_finite(out.data(), out.size(), "tanh");
  return out;
}

template <class S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope = S(0.01)) {
  auto xn = x.node();
  Tensor<S> out =
      detail::make_op<S>(x.shape(), "leaky_relu", {xn}, [xn, slope](TensorNode<S>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i)
          xn->grad[i] += self.grad[i] * (xn->value[i] >= S(0) ? S(1) : slope);
      });
  for (std::size_t i = 0; i < out.size(); ++i) {
    const S v = x.data()[i];
    out.data()[i] = v >= S(0) ? v : slope * v;
  }
  detail::check_finite(out.data(), out.size(), "leaky_relu");
  return out;
}

template <class S>
Tensor<S> log1p(const Tensor<S>& x) {
  auto xn = x.node();
  Tensor<S> out = detail::make_op<S>(x.shape(), "log1p", {xn}, [xn](TensorNode<S>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i)
      xn->grad[i] += self.grad[i] / (S(1) + xn->value[i]);
  });
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::log1p(x.data()[i]);
  detail::check_finite(out.data(), out.size(), "log1p");
  return out;
}

template <class S>
Tensor<S> expm1(const Tensor<S>& x) {
  auto xn = x.node();
  Tensor<S> out = detail::make_op<S>(x.shape(), "expm1", {xn}, [xn](TensorNode<S>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i)
      xn->grad[i] += self.grad[i] * (self.value[i] + S(1));
  });
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::expm1(x.data()[i]);
  detail::check_finite(out.data(), out.size(), "expm1");
  return out;
}

template <class S>
Tensor<S> sum(const Tensor<S>& x) {
  auto xn = x.node();
  Tensor<S> out = detail::make_op<S>({1}, "sum", {xn}, [xn](TensorNode<S>& self) {
    xn->ensure_grad();
    const S g = self.grad[0];
    for (std::size_t i = 0; i < xn->size(); ++i) xn->grad[i] += g;
  });
  S acc = S(0);
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  out.data()[0] = acc;
  detail::check_finite(out.data(), 1, "sum");
  return out;
}

template <class S>
Tensor<S> scale(const Tensor<S>& x, S c) {
  auto xn = x.node();
  Tensor<S> out = detail::make_op<S>(x.shape(), "scale", {xn}, [xn, c](TensorNode<S>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.size(); ++i) xn->grad[i] += self.grad[i] * c;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = x.data()[i] * c;
  detail::check_finite(out.data(), out.size(), "scale");
  return out;
}

// Same data in a new shape (row-major order preserved).
template <class S>
Tensor<S> reshape(const Tensor<S>& x, std::vector<std::size_t> shape) {
  if (detail::numel(shape) != x.size())
    throw shape_error("reshape: " + shape_string(x.shape()) + " -> " +
                      shape_string(shape) + " changes element count");
  auto xn = x.node();
  Tensor<S> out =
      detail::make_op<S>(std::move(shape), "reshape", {xn}, [xn](TensorNode<S>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.size(); ++i) xn->grad[i] += self.grad[i];
      });
  std::copy(x.data(), x.data() + x.size(), out.data());
  return out;
}

// Mean squared error between two same-shape tensors.
template <class S>
Tensor<S> mse(const Tensor<S>& pred, const Tensor<S>& target) {
  detail::require_same_shape(pred, target, "mse");
  Tensor<S> d = sub(pred, target);
  Tensor<S> s = sum(mul(d, d));
  return scale(s, S(1) / static_cast<S>(pred.size()));
}

// ---------------------------------------------------------------------------
// gradient checking (64-bit only)

// Max over coordinates of |analytic - central difference| /
// (|analytic| + |difference| + 1e-12). Step per coordinate is
// h * max(1, |x_i|).
inline double grad_check(const std::function<Tensor<double>(const Tensor<double>&)>& f,
                         const Tensor<double>& x0, double h = 1e-5) {
  if (!(h > 0.0)) throw contract_error("grad_check: step size h must be positive");
  Tensor<double> x = Tensor<double>::from_data(x0.shape(),
                                               {x0.data(), x0.data() + x0.size()}, true);
  Tensor<double> y = f(x);
  if (y.size() != 1) throw shape_error("grad_check: f must return a scalar");
  if (!std::isfinite(y.item())) throw numeric_error("grad_check: non-finite f(x)");
  y.backward();
  std::vector<double> analytic(x.grad_data(), x.grad_data() + x.size());

  Tensor<double> xp = Tensor<double>::from_data(x0.shape(),
                                                {x0.data(), x0.data() + x0.size()}, false);
  double max_rel = 0.0;
  for (std::size_t i = 0; i < xp.size(); ++i) {
    const double orig = xp.data()[i];
    const double hi = h * std::max(1.0, std::abs(orig));
    xp.data()[i] = orig + hi;
    const double fp = f(xp).item();
    xp.data()[i] = orig - hi;
    const double fm = f(xp).item();
    xp.data()[i] = orig;
    const double diff = (fp - fm) / (2.0 * hi);
    const double rel =
        std::abs(analytic[i] - diff) / (std::abs(analytic[i]) + std::abs(diff) + 1e-12);
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace d2sep
