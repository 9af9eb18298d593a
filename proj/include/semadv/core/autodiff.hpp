#pragma once

// Minimal tape-free reverse-mode differentiation over Tensor values.
//
// Every differentiable operation returns a Var (shared node) that remembers its
// parents and a closure propagating its gradient into theirs. Nodes that do
// not require a gradient are never visited during backward(), so constant
// leaves (model weights held by a read-only model) can be shared by graphs
// built concurrently on different threads.

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "semadv/core/tensor.hpp"

namespace semadv::ad {

class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  const Shape& shape() const noexcept { return value.shape(); }

  /// Gradient buffer, allocated as zeros on first use.
  Tensor& grad_buffer() {
    if (grad.shape() != value.shape()) grad = Tensor(value.shape());
    return grad;
  }

  void zero_grad() {
    if (!grad.empty()) grad.fill(0.0);
  }
};

inline Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

inline Var leaf(Tensor value, bool requires_grad = true) {
  auto n = constant(std::move(value));
  n->requires_grad = requires_grad;
  return n;
}

/// Creates the result node of an operation. The backward closure is kept
/// only when at least one parent needs a gradient.
inline Var make_result(Tensor value, std::vector<Var> parents,
                       std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents)
    if (p && p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

/// Back-propagates from a scalar root. Leaf gradients accumulate; call
/// zero_grad() on leaves between passes, or use gradients().
inline void backward(const Var& root) {
  if (!root || !root->requires_grad) return;
  if (root->value.size() != 1)
    throw Error("backward() requires a scalar root, got shape " +
                to_string(root->shape()));

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order)
    if (n->backward_fn) n->grad = Tensor(n->value.shape());
  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

/// Zeroes the given leaves, back-propagates, and returns copies of their
/// gradients (zeros for leaves the root does not depend on).
inline std::vector<Tensor> gradients(const Var& root,
                                     const std::vector<Var>& leaves) {
  for (const auto& l : leaves) {
    l->grad = Tensor(l->value.shape());
  }
  backward(root);
  std::vector<Tensor> out;
  out.reserve(leaves.size());
  for (const auto& l : leaves) out.push_back(l->grad);
  return out;
}

inline double scalar(const Var& v) {
  if (v->value.size() != 1) throw Error("scalar(): value is not a scalar");
  return v->value[0];
}

}  // namespace semadv::ad
