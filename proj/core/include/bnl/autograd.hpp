#pragma once

#include <functional>
#include <memory>
#include <span>
#include <unordered_set>
#include <vector>

#include "bnl/tensor.hpp"

namespace bnl {

namespace detail {
inline thread_local bool grad_mode_enabled = true;
}

/// Disables graph construction for the lifetime of the guard (inference,
/// target computation).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
  ~NoGradGuard() { detail::grad_mode_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode_enabled; }

template <typename T>
struct Node {
  using Ptr = std::shared_ptr<Node>;
  using BackwardFn =
      std::function<void(const Tensor<T>& grad_out, const Tensor<T>& out, std::span<const Ptr> parents)>;

  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<Ptr> parents;
  BackwardFn backward;

  bool is_leaf() const { return !backward; }

  Tensor<T>& grad_buffer() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    return grad;
  }

  void accumulate(std::span<const T> g) {
    auto& buf = grad_buffer();
    auto dst = buf.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }
};

/// Handle onto a node of the reverse-mode graph. Copies share the node.
template <typename T>
class Var {
 public:
  using NodePtr = typename Node<T>::Ptr;

  Var() = default;

  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  /// Gradient buffer; zeros when no backward pass has reached this node.
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad_buffer().fill(T{0}); }

  const NodePtr& node() const { return node_; }

  Var detach() const { return Var(node_->value, false); }

  /// Backpropagates from a scalar root with seed 1.
  void backward() {
    if (value().size() != 1) throw ShapeError("backward() without seed needs a scalar root");
    backward(Tensor<T>(value().shape(), T{1}));
  }

  /// Leaf gradients accumulate across calls; interior gradients are
  /// recomputed on every call.
  void backward(const Tensor<T>& seed) {
    if (seed.shape() != value().shape()) throw ShapeError("backward seed shape mismatch");
    if (!node_->requires_grad) return;
    std::vector<Node<T>*> order;
    topo_sort(order);
    for (Node<T>* n : order) {
      if (!n->is_leaf()) n->grad_buffer().fill(T{0});
    }
    node_->accumulate(seed.data());
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node<T>* n = *it;
      if (n->is_leaf()) continue;
      require_finite(n->grad, "backward pass");
      n->backward(n->grad, n->value, std::span<const NodePtr>(n->parents));
    }
  }

 private:
  void topo_sort(std::vector<Node<T>*>& order) const {
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, next] = stack.back();
      if (next < n->parents.size()) {
        Node<T>* p = n->parents[next++].get();
        if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  NodePtr node_;
};

using VarF = Var<float>;
using VarD = Var<double>;

/// Wraps an op result. The backward closure is only kept when some parent
/// participates in differentiation and grad mode is on.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, typename Node<T>::BackwardFn backward,
                   const char* op_name) {
  require_finite(value, op_name);
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

}  // namespace bnl
