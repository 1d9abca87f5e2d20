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
#include "ecdiff/numerics/adam.hpp"

#include <cmath>

namespace ecdiff::num {

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state,
               const AdamOptions& options) {
  if (grad.size() != param.size()) {
    throw ShapeError("adam_step: " + std::to_string(param.size()) + " params vs " +
                     std::to_string(grad.size()) + " grads");
  }
  if (state.m.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  if (state.m.size() != param.size() || state.v.size() != param.size()) {
    throw ShapeError("adam_step: moment buffers do not match parameter");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = options.beta1 * state.m[i] + (1.0 - options.beta1) * grad[i];
    state.v[i] = options.beta2 * state.v[i] + (1.0 - options.beta2) * grad[i] * grad[i];
    double m_hat = state.m[i] / c1;
    double v_hat = state.v[i] / c2;
    param[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
  }
}

Adam::Adam(std::vector<Var> params, AdamOptions options)
    : params_(std::move(params)), states_(params_.size()), options_(options) {
  for (const Var& p : params_) {
    if (!p.is_leaf() || !p.requires_grad()) {
      throw std::invalid_argument("Adam: every parameter must be a grad leaf");
    }
  }
}

void Adam::zero_grad() {
  for (Var& p : params_) p.zero_grad();
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i];
    Tensor& value = p.mutable_value();
    if (!p.has_grad()) {
      // An untouched parameter still advances its moments with g = 0.
      std::vector<double> zeros(value.size(), 0.0);
      adam_step(value.data(), zeros, states_[i], options_);
    } else {
      adam_step(value.data(), p.grad_span(), states_[i], options_);
    }
  }
}

std::size_t Adam::step_count() const { return states_.empty() ? 0 : states_.front().step_count; }

}  // namespace ecdiff::num
