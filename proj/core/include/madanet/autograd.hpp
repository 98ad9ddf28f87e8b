// Copyright 2026 The Madanet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "madanet/tensor.hpp"

namespace madanet {

namespace detail {
inline thread_local bool g_grad_enabled = true;
}  // namespace detail

inline bool grad_enabled() { return detail::g_grad_enabled; }

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::g_grad_enabled) {
    detail::g_grad_enabled = false;
  }
  ~NoGradGuard() { detail::g_grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads `grad` and accumulates into the gradients of `inputs`.
  std::function<void(const Tensor<T>&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

/// Handle to a node in the differentiation graph. Copies share the node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Gradient accumulated by the last backward pass (empty if none).
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.fill(T(0));
  }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

  /// Gradient sink for an op's backward, or nullptr if none is needed.
  Tensor<T>* grad_sink() const {
    return requires_grad() ? &node_->grad_buffer() : nullptr;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Creates an op output. The backward function is only retained when
/// recording is enabled and at least one input requires a gradient.
template <typename T, typename F>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> inputs, F&& backward) {
  Var<T> out(std::move(value), false);
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return out;
  Node<T>* node = out.node();
  node->requires_grad = true;
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) node->inputs.push_back(in.ptr());
  node->backward = std::forward<F>(backward);
  return out;
}

/// Reverse-mode sweep from a scalar root. Interior gradients and closures
/// are released as the sweep proceeds; leaf gradients accumulate.
template <typename T>
void backward(const Var<T>& root) {
  if (root.shape().numel() != 1) {
    throw ShapeError("backward root must be a scalar, got " +
                     root.shape().str());
  }
  if (!root.requires_grad()) return;
  // Owning pointers: releasing a closure must not free nodes still queued.
  std::vector<std::shared_ptr<Node<T>>> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<std::shared_ptr<Node<T>>, std::size_t>> stack{{root.ptr(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      std::shared_ptr<Node<T>> child = node->inputs[next++];
      if (child->requires_grad && seen.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer().fill(T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = it->get();
    if (!node->backward) continue;
    if (!node->grad.empty()) node->backward(node->grad);
    node->backward = nullptr;
    node->inputs.clear();
    node->grad = Tensor<T>();
  }
}

template <typename T>
void accumulate(Tensor<T>& into, const Tensor<T>& g) {
  T* dst = into.data();
  const T* src = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.span()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace madanet
