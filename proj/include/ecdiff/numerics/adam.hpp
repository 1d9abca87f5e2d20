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

#include <cstddef>
#include <span>
#include <vector>

#include "ecdiff/numerics/autodiff.hpp"

namespace ecdiff::num {

struct AdamOptions {
  double lr = 8e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments for one parameter tensor.
struct AdamState {
  std::size_t step_count = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// One bias-corrected Adam update of `param` in place.
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state,
               const AdamOptions& options);

/// Adam over a fixed list of parameter leaves.
class Adam {
 public:
  Adam(std::vector<Var> params, AdamOptions options);

  void zero_grad();
  /// Applies one update from the leaves' accumulated grads.
  void step();

  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }
  std::size_t step_count() const;
  const std::vector<AdamState>& states() const { return states_; }

 private:
  std::vector<Var> params_;
  std::vector<AdamState> states_;
  AdamOptions options_;
};

}  // namespace ecdiff::num
