#pragma once

// Dense tensors with reverse-mode automatic differentiation.
//
// Every op runs eagerly and records a backward closure on the result node,
// so the expression DAG doubles as the tape. backward() topologically sorts
// the DAG from a scalar root and accumulates gradients additively into every
// requires_grad leaf; callers zero gradients explicitly between steps.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "unetgan/common.hpp"
#include "unetgan/rng.hpp"

namespace unetgan {

namespace detail {

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backprop;  // pushes this->grad into parents
  const char* op = "leaf";

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <class T>
inline void check_finite(const TensorNode<T>& n) {
#ifndef NDEBUG
  for (T v : n.value) {
    if (!std::isfinite(double(v)))
      throw std::runtime_error(std::string("non-finite value produced by op '") + n.op + "'");
  }
#else
  (void)n;
#endif
}

}  // namespace detail

template <class T>
class Tensor {
 public:
  using Node = detail::TensorNode<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (numel(shape) != data.size())
      throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> d(numel(shape), T(0));
    return from(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    std::vector<T> d(numel(shape), v);
    return from(std::move(shape), std::move(d), requires_grad);
  }

  // Uniform init in [-bound, bound], e.g. the fan-in rule for conv weights.
  static Tensor uniform(Shape shape, T bound, Rng& rng, bool requires_grad = true) {
    std::vector<T> d(numel(shape));
    for (auto& v : d) v = T(rng.uniform(-double(bound), double(bound)));
    return from(std::move(shape), std::move(d), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::vector<T>& data() { return node_->value; }
  const std::vector<T>& data() const { return node_->value; }
  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }
  std::shared_ptr<Node> node() const { return node_; }

  T item() const {
    if (size() != 1) throw ShapeError("item: tensor is not scalar, shape " + shape_str(shape()));
    return node_->value[0];
  }

  // Same values, cut from the graph; gradients stop here.
  Tensor detach() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->value = node_->value;
    n->op = "detach";
    return Tensor(n);
  }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

template <class T>
std::shared_ptr<TensorNode<T>> make_result(const char* op, Shape shape,
                                           std::vector<std::shared_ptr<TensorNode<T>>> parents) {
  auto n = std::make_shared<TensorNode<T>>();
  n->op = op;
  n->shape = std::move(shape);
  n->value.resize(numel(n->shape));
  for (auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  return n;
}

}  // namespace detail

// Topologically ordered view of the DAG under a root; backward() walks it in
// reverse so each node's closure fires exactly once.
template <class T>
struct Graph {
  std::vector<detail::TensorNode<T>*> order;  // parents before children

  static Graph build(const Tensor<T>& root) {
    Graph g;
    std::unordered_set<const detail::TensorNode<T>*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<detail::TensorNode<T>*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        auto* p = node->parents[idx++].get();
        if (seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        g.order.push_back(node);
        stack.pop_back();
      }
    }
    return g;
  }
};

template <class T>
void backward(const Tensor<T>& root) {
  if (root.size() != 1)
    throw ShapeError("backward: root must be scalar, got shape " + shape_str(root.shape()));
  Graph<T> g = Graph<T>::build(root);
  root.node()->ensure_grad();
  root.node()->grad[0] += T(1);
  for (auto it = g.order.rbegin(); it != g.order.rend(); ++it) {
    auto* n = *it;
    if (n->backprop && n->requires_grad && !n->grad.empty()) n->backprop();
  }
}

// ---------------------------------------------------------------------------
// Elementwise and reduction ops
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  auto n = detail::make_result<T>("add", a.shape(), {a.node(), b.node()});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.data()[i] + b.data()[i];
  auto an = a.node(), bn = b.node();
  auto self = n.get();
  n->backprop = [self, an, bn] {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += self->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i) bn->grad[i] += self->grad[i];
    }
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  auto n = detail::make_result<T>("sub", a.shape(), {a.node(), b.node()});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.data()[i] - b.data()[i];
  auto an = a.node(), bn = b.node();
  auto self = n.get();
  n->backprop = [self, an, bn] {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += self->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i) bn->grad[i] -= self->grad[i];
    }
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  auto n = detail::make_result<T>("mul", a.shape(), {a.node(), b.node()});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.data()[i] * b.data()[i];
  auto an = a.node(), bn = b.node();
  auto self = n.get();
  n->backprop = [self, an, bn] {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        an->grad[i] += self->grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self->grad.size(); ++i)
        bn->grad[i] += self->grad[i] * an->value[i];
    }
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  auto n = detail::make_result<T>("scale", a.shape(), {a.node()});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.data()[i] * c;
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an, c] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += self->grad[i] * c;
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  auto n = detail::make_result<T>("add_scalar", a.shape(), {a.node()});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = a.data()[i] + c;
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += self->grad[i];
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  auto n = detail::make_result<T>("sum", Shape{1}, {a.node()});
  T acc = 0;
  for (T v : a.data()) acc += v;
  n->value[0] = acc;
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (auto& g : an->grad) g += self->grad[0];
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  auto n = detail::make_result<T>("mean", Shape{1}, {a.node()});
  T acc = 0;
  for (T v : a.data()) acc += v;
  T inv = T(1) / T(a.size());
  n->value[0] = acc * inv;
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an, inv] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (auto& g : an->grad) g += self->grad[0] * inv;
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

template <class T>
Tensor<T> log_op(const Tensor<T>& a) {
  auto n = detail::make_result<T>("log", a.shape(), {a.node()});
  for (std::size_t i = 0; i < n->value.size(); ++i) n->value[i] = std::log(a.data()[i]);
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i)
      an->grad[i] += self->grad[i] / an->value[i];
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

// Clamp to [lo, hi]; gradient is zero where the input was clipped.
template <class T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  auto n = detail::make_result<T>("clamp", a.shape(), {a.node()});
  for (std::size_t i = 0; i < n->value.size(); ++i)
    n->value[i] = std::min(hi, std::max(lo, a.data()[i]));
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an, lo, hi] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i)
      if (an->value[i] > lo && an->value[i] < hi) an->grad[i] += self->grad[i];
  };
  detail::check_finite(*n);
  return Tensor<T>(n);
}

template <class T>
Tensor<T> identity(const Tensor<T>& a) {
  auto n = detail::make_result<T>("identity", a.shape(), {a.node()});
  n->value = a.data();
  auto an = a.node();
  auto self = n.get();
  n->backprop = [self, an] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self->grad.size(); ++i) an->grad[i] += self->grad[i];
  };
  return Tensor<T>(n);
}

}  // namespace unetgan
