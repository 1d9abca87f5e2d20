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
#include <functional>
#include <span>

#include "ecdiff/numerics/autodiff.hpp"

namespace ecdiff::num {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t n_checked = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double epsilon = 1e-6;
  double tolerance = 1e-4;
  /// Check at most this many entries per parameter (0 = all), chosen by an
  /// evenly strided sweep so the selection is deterministic.
  std::size_t max_entries_per_param = 0;
};

/// Compares backward() gradients of `loss_fn` against central differences
/// over every entry of `params`. Relative error is |a - n| / max(1, |a|, |n|).
///
/// Throws std::invalid_argument if epsilon is outside [1e-7, 1e-3] and
/// std::runtime_error if two evaluations at the same point disagree.
GradCheckReport finite_diff_check(const std::function<Var()>& loss_fn, std::span<Var> params,
                                  const GradCheckOptions& options = {});

}  // namespace ecdiff::num
