#pragma once

#include <cmath>
#include <functional>
#include <initializer_list>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "wavefuse/common.hpp"

namespace wavefuse {

// Reverse-mode autodiff over dense row-major buffers. A Tensor is a cheap
// handle onto a shared node; nodes record their parents and a pullback that
// accumulates vector-Jacobian products into parent gradients. Values are
// immutable once an op has produced them; only leaf tensors (parameters)
// are mutated, and only between tape lifetimes.
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until needed; same length as value when live
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  std::function<void(TensorNode<T>&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

namespace detail {
inline bool& grad_enabled_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

// RAII switch that disables tape recording (inference / finite differences).
struct NoGradGuard {
  NoGradGuard() : prev_(detail::grad_enabled_flag()) {
    detail::grad_enabled_flag() = false;
  }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    node_->value.assign(numel(node_->shape), fill);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    if (numel(shape) != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<T>{v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  const std::vector<T>& data() const { return node_->value; }
  const std::vector<T>& grad() const { return node_->grad; }

  // Leaf mutation (parameter updates, fixture setup). Never call on an op
  // result that is still referenced by a live tape.
  std::vector<T>& mutable_data() { return node_->value; }
  std::vector<T>& mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }

  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor of size " + std::to_string(size()));
    return node_->value[0];
  }

  T at(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != ndim()) throw ShapeError("at(): rank mismatch");
    std::size_t flat = 0, i = 0;
    for (auto v : idx) {
      if (v >= node_->shape[i]) throw ShapeError("at(): index out of range");
      flat = flat * node_->shape[i] + v;
      ++i;
    }
    return node_->value[flat];
  }

  void zero_grad() {
    if (node_) node_->grad.clear();
  }

  void set_requires_grad(bool v) { node_->requires_grad = v; }

  // Reverse sweep from a scalar output. Accumulates into .grad of every
  // requires-grad node reachable through the tape.
  void backward() {
    if (size() != 1) throw ShapeError("backward() requires a scalar output");
    if (!std::isfinite(static_cast<double>(item())))
      throw EvalError("backward() on non-finite loss");
    std::vector<Node*> order = topo_order();
    node_->ensure_grad();
    node_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

  std::shared_ptr<Node> node() const { return node_; }

  static Tensor from_node(std::shared_ptr<Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::vector<Node*> topo_order() const {
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    // Iterative post-order DFS; graphs get deep enough that recursion is
    // not safe.
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, child] = stack.back();
      if (child < n->parents.size()) {
        Node* p = n->parents[child].get();
        ++child;
        if (p && !visited.count(p)) {
          visited.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    return order;
  }

  std::shared_ptr<Node> node_;
};

namespace detail {

// Builds an op-result node. `backward` may be empty for non-differentiable
// outputs; it is dropped entirely when no parent needs gradients.
template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value,
                  std::vector<Tensor<T>> parents,
                  std::function<void(TensorNode<T>&)> backward) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->is_leaf = false;
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents)
      if (p.requires_grad()) needs = true;
  }
  node->requires_grad = needs;
  if (needs) {
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
void accumulate(TensorNode<T>& parent, const std::vector<T>& contrib) {
  if (!parent.requires_grad) return;
  parent.ensure_grad();
  for (std::size_t i = 0; i < contrib.size(); ++i) parent.grad[i] += contrib[i];
}

}  // namespace detail

}  // namespace wavefuse
