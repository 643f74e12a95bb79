// Copyright (c) 2026 The MUTE Lab Authors. All Rights Reserved.
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

#include "numerics/tensor.hpp"

#include <sstream>
#include <unordered_set>
#include <utility>

namespace mute::num {

namespace {
thread_local bool t_grad_enabled = true;
thread_local bool t_gradient_fault = false;
}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<Real>& Node::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), Real(0));
  return grad;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, Real(0), requires_grad);
}

Tensor Tensor::full(const Shape& shape, Real value, bool requires_grad) {
  return from(shape, std::vector<Real>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<Real> values, bool requires_grad) {
  for (auto e : shape)
    if (e == 0) fail(ErrorKind::Dimension, "tensor extents must be positive: " + shape_str(shape));
  require(values.size() == shape_numel(shape), ErrorKind::Dimension,
          "data length " + std::to_string(values.size()) + " does not match shape " +
              shape_str(shape));
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Real Tensor::item() const {
  require(numel() == 1, ErrorKind::Contract,
          "item() on non-scalar tensor " + shape_str(shape()));
  return node_->data[0];
}

std::vector<Real> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<Real>(node_->data.size(), Real(0));
  return node_->grad;
}

Tensor Tensor::detach() const {
  return from(node_->shape, node_->data, false);
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor make_result(const char* op, Shape shape, std::vector<Real> data,
                   std::vector<Tensor> parents, BackwardFn backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  if (t_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node_ptr());
      node->backward = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

std::vector<Node*> reverse_topological(const Tensor& root) {
  // Iterative post-order DFS; reversing the post-order gives an order in
  // which every node precedes all of its parents.
  std::vector<Node*> post;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  return {post.rbegin(), post.rend()};
}

void backward(const Tensor& loss) {
  require(loss.defined() && loss.numel() == 1, ErrorKind::Contract,
          "backward requires a scalar loss, got shape " +
              (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad()) return;
  auto order = reverse_topological(loss);
  // Interior grads hold the result of the latest sweep only; leaves
  // (parameters) accumulate across calls until zeroed.
  for (Node* node : order) {
    if (node->backward) node->grad.clear();
  }
  loss.node()->grad_buffer()[0] += Real(1);
  for (Node* node : order) {
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

namespace testing {
void set_gradient_fault(bool enabled) { t_gradient_fault = enabled; }
bool gradient_fault() { return t_gradient_fault; }
}  // namespace testing

}  // namespace mute::num
