// Copyright 2026 The ecdiff Authors
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

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ecdiff/numerics/tensor.hpp"

namespace ecdiff::num {

class Var;

namespace detail {

struct Node {
  Tensor value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Handle to a value on the autodiff graph.
///
/// Leaves (parameters, inputs) live as long as any handle does. Every op
/// producing a Var from an input that requires grad records a backward
/// closure and its parents; the graph built by one loss evaluation is the
/// tape and is released with the loss handle. Creation order is a valid
/// topological order, but backward() sorts explicitly so graphs assembled
/// across helper functions remain correct.
///
/// A tape must stay on one thread. Leaves shared between two live tapes
/// on different threads would race on gradient accumulation.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  /// Mutable access for leaves only (optimizer updates, finite differences).
  Tensor& mutable_value();
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_ && !node_->backward; }
  bool defined() const { return static_cast<bool>(node_); }

  /// Gradient as a tensor of the value's shape (zeros if never touched).
  Tensor grad() const;
  std::span<const double> grad_span() const { return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& shared() const { return node_; }

  /// Builds an op result. If no parent requires grad the result is a
  /// constant and `backward` is dropped.
  static Var make(Tensor value, std::vector<Var> parents,
                  std::function<void(detail::Node&)> backward);

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Leaf that accumulates gradient.
Var parameter(Tensor value);
/// Leaf that never receives gradient.
Var constant(Tensor value);

/// While alive, ops on this thread record no tape: results are constants
/// even when inputs require grad. For inference.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse sweep from a scalar. Gradients add into leaf grads, so call
/// zero_grad() between independent evaluations.
void backward(const Var& loss);

}  // namespace ecdiff::num
