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

#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"

namespace mute::num {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Backward closure of a recorded op: reads the output node's grad and
// accumulates into its parents' grads.
using BackwardFn = std::function<void(Node& out)>;

struct Node {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward;
  const char* op = "leaf";

  std::vector<Real>& grad_buffer();
};

// Handle to a node of the compute graph. Copies share storage; forward ops
// never mutate their inputs.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, Real value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<Real> values,
                     bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const Real> data() const { return node_->data; }
  // Direct storage access; only for parameters and freshly built leaves.
  std::span<Real> mutable_data() { return node_->data; }
  Real item() const;
  Real at(std::size_t flat) const { return node_->data.at(flat); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient buffer; zeros when nothing has been accumulated yet.
  std::vector<Real> grad() const;
  void zero_grad() { node_->grad.clear(); }

  // Fresh leaf holding a copy of the values, detached from the graph.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }

 private:
  NodePtr node_;
};

// True while gradient recording is enabled on this thread.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op output. When recording is enabled and any parent requires a
// gradient, the output is linked to its parents and keeps the closure.
Tensor make_result(const char* op, Shape shape, std::vector<Real> data,
                   std::vector<Tensor> parents, BackwardFn backward);

// Accumulates d loss / d t into every requires_grad ancestor of `loss`.
// Nodes that are not ancestors are left untouched.
void backward(const Tensor& loss);

// Nodes reachable from `root` in reverse topological order (root first).
std::vector<Node*> reverse_topological(const Tensor& root);

namespace testing {
// When set on the current thread, the relu backward rule returns a doubled
// gradient. Used to prove the gradient suite catches a broken rule.
void set_gradient_fault(bool enabled);
bool gradient_fault();
}  // namespace testing

}  // namespace mute::num
