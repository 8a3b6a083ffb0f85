#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "gdnet/common.hpp"

namespace gdnet {

// Dense n-dimensional array participating in a reverse-mode autodiff graph.
// Tensor is a cheap handle onto a shared node; the graph is the set of nodes
// reachable through parent links. A node records how to push its gradient
// into its parents; backward() replays those closures in reverse execution
// order. Scalar type T is float for training, double for gradient checks.
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily on first backward pass
  bool requires_grad = false;
  bool backward_done = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  // Reads this->grad, accumulates into parents' grad.
  std::function<void(TensorNode<T>&)> backprop;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor from_data(Shape shape, std::vector<T> data,
                          bool requires_grad = false) {
    if (numel(shape) != data.size())
      fail("Tensor", "shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<T> d(numel(shape), T(0));
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor full(Shape shape, T v, bool requires_grad = false) {
    std::vector<T> d(numel(shape), v);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->value.size(); }
  std::vector<T>& data() { return node_->value; }
  const std::vector<T>& data() const { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op_name() const { return node_->op; }

  const std::vector<T>& grad() const {
    if (node_->grad.size() != node_->value.size())
      fail("Tensor::grad", "no gradient has been accumulated on this tensor");
    return node_->grad;
  }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }

  void zero_grad() {
    node_->grad.clear();
    node_->backward_done = false;
  }

  T item() const {
    if (size() != 1) fail("Tensor::item", "tensor of shape " + shape_str(shape()) + " is not scalar");
    return node_->value[0];
  }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

template <typename T>
void topo_sort(TensorNode<T>* root,
               std::vector<TensorNode<T>*>& order) {
  // Iterative post-order DFS over parent links; order ends up topological
  // (parents before children), so the reverse is valid for backprop.
  std::unordered_set<TensorNode<T>*> visited;
  std::vector<std::pair<TensorNode<T>*, std::size_t>> stack;
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      TensorNode<T>* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Each reachable requires-grad node
/// receives d(loss)/d(node), accumulated additively across fan-out.
/// Calling backward twice on the same loss without zero_grad is an error.
template <typename T>
void backward(const Tensor<T>& loss) {
  auto root = loss.node();
  if (numel(root->shape) != 1)
    fail("backward", "loss must be scalar, got shape " + shape_str(root->shape));
  if (!root->requires_grad)
    fail("backward", "loss is detached from the graph (requires_grad is false)");
  if (root->backward_done)
    fail("backward", "backward already ran on this loss; zero_grad first");
  root->backward_done = true;

  std::vector<TensorNode<T>*> order;
  detail::topo_sort(root.get(), order);

  root->ensure_grad();
  root->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* n = *it;
    if (n->backprop) {
      for (auto& p : n->parents)
        if (p->requires_grad) p->ensure_grad();
      n->backprop(*n);
    }
  }
}

}  // namespace gdnet
