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
#include "ecdiff/numerics/autodiff.hpp"

#include <cassert>
#include <unordered_set>

namespace ecdiff::num {

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<detail::Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Tensor& Var::mutable_value() {
  if (node_->backward) throw std::logic_error("var: only leaves are mutable");
  return node_->value;
}

Tensor Var::grad() const {
  if (node_->grad.empty()) return Tensor(node_->value.shape(), 0.0);
  return Tensor(node_->value.shape(), node_->grad);
}

void Var::zero_grad() {
  if (node_) node_->grad.clear();
}

namespace {
thread_local bool grad_disabled = false;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(grad_disabled) { grad_disabled = true; }
NoGradGuard::~NoGradGuard() { grad_disabled = previous_; }

Var Var::make(Tensor value, std::vector<Var> parents, std::function<void(detail::Node&)> backward) {
  if (!value.all_finite()) {
    throw NumericError("op produced a non-finite value, shape " + shape_str(value.shape()));
  }
  bool any = false;
  if (!grad_disabled) {
    for (const auto& p : parents) any = any || p.requires_grad();
  }
  Var out(std::move(value), any);
  if (any) {
    out.node_->parents.reserve(parents.size());
    for (auto& p : parents) out.node_->parents.push_back(p.node_);
    out.node_->backward = std::move(backward);
  }
  return out;
}

Var parameter(Tensor value) { return Var(std::move(value), true); }
Var constant(Tensor value) { return Var(std::move(value), false); }

void backward(const Var& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward: loss must be a scalar");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; the graph is acyclic because parents always
  // exist before their children are created.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  visited.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior nodes hold grads only for this sweep.
  for (detail::Node* n : order) {
    if (n->backward) n->grad.clear();
  }
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (detail::Node* n : order) {
    if (n->backward) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

}  // namespace ecdiff::num
