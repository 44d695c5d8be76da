#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "effipose/tensor.hpp"

namespace effipose {

// Reverse-mode tape. A node owns its forward value and (lazily) its gradient;
// parents are kept alive by shared ownership until the graph is dropped.
template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  explicit Node(Tensor<T> v, bool rg = false) : value(std::move(v)), requires_grad(rg) {}

  const Shape& shape() const { return value.shape(); }

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  void zero_grad() { grad = Tensor<T>(); }
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> constant(Tensor<T> v) {
  return std::make_shared<Node<T>>(std::move(v), false);
}

template <class T>
Var<T> leaf(Tensor<T> v) {
  return std::make_shared<Node<T>>(std::move(v), true);
}

/// Builds a result node; the backward closure is attached only when some
/// parent needs gradients.
template <class T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<void(Node<T>&)> backward_fn) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto node = std::make_shared<Node<T>>(std::move(value), rg);
  if (rg) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return node;
}

/// Runs reverse accumulation from `root`, seeding d(root)/d(root) = 1.
template <class T>
void backward(const Var<T>& root) {
  if (!root->requires_grad) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  // Iterative post-order DFS; graphs can be thousands of nodes deep.
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->grad_buffer().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

/// A named model tensor. Non-trainable parameters (BN running statistics)
/// are never touched by the optimizer.
template <class T>
struct Parameter {
  std::string name;
  Var<T> var;
  bool trainable = true;

  Tensor<T>& value() { return var->value; }
  const Tensor<T>& value() const { return var->value; }
};

}  // namespace effipose
