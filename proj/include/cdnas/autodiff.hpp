#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cdnas/tensor.hpp"

namespace cdnas {

/// Global switch for graph recording (thread-local). Off means ops return
/// plain values with no backward closure.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  using BackwardFn = std::function<void(const Tensor<T>& grad_out)>;

  Tensor<T> value;
  Tensor<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  const char* tag = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward_fn;

  void accumulate(const Tensor<T>& g) {
    if (!requires_grad) return;
    if (grad.empty() && !g.empty()) {
      grad = g;
    } else if (grad.shape() == g.shape()) {
      grad += g;
    } else if (grad.empty()) {
      grad = g;
    } else {
      throw ShapeError(std::string("gradient shape ") + shape_str(g.shape()) +
                       " does not match value " + shape_str(value.shape()) + " at " + tag);
    }
  }
};

/// Handle to a value in the autodiff graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  /// Direct access for optimizers; only meaningful on leaves.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t i) const { return node_->value.dim(i); }
  std::size_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  const char* tag() const { return node_->tag; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer, or zeros when nothing has been accumulated.
  Tensor<T> grad() const {
    return node_->grad.empty() ? Tensor<T>(node_->value.shape()) : node_->grad;
  }
  void zero_grad() { node_->grad = Tensor<T>(); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds a result node. When recording is off or no input needs a gradient,
/// the closure is dropped and the result is a constant.
template <typename T>
Var<T> make_result(Tensor<T> value, const std::vector<Var<T>>& inputs, const char* tag,
                   typename Node<T>::BackwardFn fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->tag = tag;
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->leaf = false;
    node->inputs.reserve(inputs.size());
    for (const auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(fn);
  }
  return Var<T>(std::move(node));
}

/// Nodes reachable from `root` that take part in differentiation, inputs
/// before consumers.
template <typename T>
std::vector<Node<T>*> topological_order(const Var<T>& root);

/// Reverse sweep from a scalar loss. Leaf gradients accumulate additively
/// across calls; the interior graph is released afterwards, so a second call
/// on the same loss throws.
template <typename T>
void backward(const Var<T>& loss);

template <typename T>
void zero_grad(std::vector<Var<T>>& params) {
  for (auto& p : params) p.zero_grad();
}

extern template std::vector<Node<float>*> topological_order(const Var<float>&);
extern template std::vector<Node<double>*> topological_order(const Var<double>&);
extern template void backward(const Var<float>&);
extern template void backward(const Var<double>&);

}  // namespace cdnas
