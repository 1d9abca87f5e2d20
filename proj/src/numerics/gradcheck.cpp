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
#include "ecdiff/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ecdiff::num {

GradCheckReport finite_diff_check(const std::function<Var()>& loss_fn, std::span<Var> params,
                                  const GradCheckOptions& options) {
  if (!(options.epsilon >= 1e-7 && options.epsilon <= 1e-3)) {
    throw std::invalid_argument("finite_diff_check: epsilon must lie in [1e-7, 1e-3]");
  }
  for (Var& p : params) p.zero_grad();
  Var loss = loss_fn();
  const double base = loss.item();
  if (loss_fn().item() != base) {
    throw std::runtime_error("finite_diff_check: loss function is not deterministic");
  }
  backward(loss);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Var& p = params[pi];
    Tensor analytic = p.grad();
    std::span<double> values = p.mutable_value().data();
    std::size_t n = values.size();
    std::size_t stride = 1;
    if (options.max_entries_per_param > 0 && n > options.max_entries_per_param) {
      stride = (n + options.max_entries_per_param - 1) / options.max_entries_per_param;
    }
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + options.epsilon;
      const double up = loss_fn().item();
      values[i] = saved - options.epsilon;
      const double down = loss_fn().item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.epsilon);
      const double a = analytic[i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.n_checked;
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = pi;
        report.worst_index = i;
      }
    }
  }
  report.passed = report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace ecdiff::num
