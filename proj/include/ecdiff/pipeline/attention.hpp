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

// Attention consistency: do particles of one object attend to each other
// across time more than random particle pairs do?

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ecdiff/pipeline/dataset.hpp"
#include "ecdiff/pipeline/evaluation.hpp"

namespace ecdiff::pipeline {

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
  double mean_a = 0.0;
  double mean_b = 0.0;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
};

/// Welch's unequal-variance two-sample t-test. Needs at least two values
/// per sample. When both variances vanish, equal means give t = 0, p = 1 and
/// different means an infinite t with p = 0.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

struct AttentionSample {
  enum class Label { kSameObject, kRandom };
  Label label = Label::kRandom;
  double value = 0.0;
};

struct AttentionOptions {
  /// Same-object pairs to collect; as many random pairs are drawn.
  std::size_t n_pairs = 2000;
  std::size_t batch = 16;
  std::uint64_t seed = 0;
};

struct AttentionReport {
  std::vector<AttentionSample> samples;
  WelchResult welch;  // a = same object, b = random
};

/// Attention weights averaged over layers and heads, read at random
/// diffusion steps on noised dataset windows. Same-object pairs are
/// ordered token pairs showing one object at two different timestep slots;
/// random pairs are two distinct particle tokens drawn uniformly from the
/// same window.
AttentionReport attention_consistency_test(const Policy& policy, const Dataset& dataset,
                                           const AttentionOptions& options);

}  // namespace ecdiff::pipeline
