#include "zsm/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace zsm {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

template <typename T>
void backward(const Var<T>& root) {
  if (!root.defined()) throw std::invalid_argument("backward: undefined root");
  if (root.value().size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; graphs from long sequences are deep.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && node->has_grad()) {
      node->backward_fn(*node);
      node->grad = Tensor<T>();  // interior grads are not observable
    }
  }
}

template void backward<float>(const Var<float>&);
template void backward<double>(const Var<double>&);

}  // namespace zsm
