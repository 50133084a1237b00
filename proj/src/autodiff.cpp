#include "cdnas/autodiff.hpp"

#include <unordered_set>
#include <utility>

namespace cdnas {

namespace {
thread_local bool grad_enabled = true;
}

bool GradMode::enabled() { return grad_enabled; }
void GradMode::set_enabled(bool on) { grad_enabled = on; }

template <typename T>
std::vector<Node<T>*> topological_order(const Var<T>& root) {
  std::vector<Node<T>*> order;
  if (!root.defined() || !root.requires_grad()) return order;
  std::unordered_set<Node<T>*> seen;
  // Iterative post-order DFS; recursion would overflow on deep supernets.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.defined()) throw AutodiffError("backward on undefined value");
  if (loss.numel() != 1) {
    throw AutodiffError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  auto* root = loss.node().get();
  if (root->consumed) {
    throw AutodiffError("backward called twice on the same graph; re-run the forward pass");
  }
  if (!root->requires_grad) return;

  auto order = topological_order(loss);
  root->accumulate(Tensor<T>(loss.shape(), T(1)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->leaf) continue;
    if (!node->grad.empty() && node->backward_fn) node->backward_fn(node->grad);
  }
  // Interior nodes give up their closures and gradients; leaves keep grads.
  for (Node<T>* node : order) {
    if (node->leaf) continue;
    node->backward_fn = nullptr;
    node->inputs.clear();
    node->grad = Tensor<T>();
    node->consumed = true;
  }
}

template std::vector<Node<float>*> topological_order(const Var<float>&);
template std::vector<Node<double>*> topological_order(const Var<double>&);
template void backward(const Var<float>&);
template void backward(const Var<double>&);

}  // namespace cdnas
