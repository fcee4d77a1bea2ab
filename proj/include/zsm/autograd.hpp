#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "zsm/tensor.hpp"

namespace zsm {

/// Global switch for graph recording. Inference wraps its forward pass in a
/// NoGradGuard so intermediate activations are released as soon as they are
/// consumed.
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
  Tensor<T> value;
  Tensor<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward_fn;

  Tensor<T>& grad_buffer() {
    if (grad.shape() != value.shape() || grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  [[nodiscard]] bool has_grad() const { return !grad.empty() && grad.shape() == value.shape(); }
};

/// Handle to a value in the computation graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }
  [[nodiscard]] const Tensor<T>& value() const { return node_->value; }
  [[nodiscard]] Tensor<T>& mutable_value() { return node_->value; }
  [[nodiscard]] const Shape& shape() const { return node_->value.shape(); }
  [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Gradient accumulated by the last backward(); zeros if none reached this node.
  [[nodiscard]] Tensor<T> grad() const {
    if (node_->has_grad()) return node_->grad;
    return Tensor<T>(node_->value.shape());
  }
  void zero_grad() { node_->grad = Tensor<T>(); }
  [[nodiscard]] T item() const { return node_->value[0]; }

  [[nodiscard]] const std::shared_ptr<Node<T>>& node() const { return node_; }

  /// Builds an interior node. When no input needs a gradient (or recording is
  /// off) the result is a plain constant and `backward_fn` is discarded.
  static Var make(Tensor<T> value, std::vector<Var> inputs,
                  std::function<void(Node<T>&)> backward_fn) {
    Var out(std::move(value));
    if (!GradMode::enabled()) return out;
    bool any = false;
    for (const auto& v : inputs) any = any || v.requires_grad();
    if (!any) return out;
    out.node_->requires_grad = true;
    out.node_->inputs.reserve(inputs.size());
    for (auto& v : inputs) out.node_->inputs.push_back(v.node_);
    out.node_->backward_fn = std::move(backward_fn);
    return out;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Reverse-mode sweep from a scalar (1x1x1x1) root, seeded with d(root)=1.
template <typename T>
void backward(const Var<T>& root);

}  // namespace zsm
