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

// Ablation runs and the object-count generalization sweep.

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "ecdiff/pipeline/evaluation.hpp"
#include "ecdiff/pipeline/training.hpp"

namespace ecdiff::pipeline {

struct AblationRow {
  denoiser::Mode mode = denoiser::Mode::kFull;
  std::size_t n_objects = 0;
  double final_loss = 0.0;
  double success_rate = 0.0;
  double success_fraction = 0.0;
};

/// Trains `mode` on `dataset` into `run_dir`, evaluates the last checkpoint
/// and appends the episodes to run_dir/metrics.csv.
AblationRow run_ablation(denoiser::Mode mode, const Dataset& dataset, TrainConfig train_config,
                         const EvalOptions& eval, const std::filesystem::path& run_dir,
                         const std::string& config_text = {});

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

struct GeneralizationRow {
  std::size_t n_objects = 0;
  std::size_t particles = 0;
  double success_rate = 0.0;
  double success_fraction = 0.0;
};

struct GeneralizationResult {
  std::vector<GeneralizationRow> rows;
  std::vector<EvalResult> evaluations;  // parallel to rows
};

/// Evaluates `policy` at every object count in `eval_ns` with the options
/// of `eval` otherwise; particles per count follow eval_particles().
GeneralizationResult generalization_suite(const Policy& policy,
                                          const std::vector<std::size_t>& eval_ns,
                                          const EvalOptions& eval);

void write_generalization_csv(const std::filesystem::path& path,
                              const std::vector<GeneralizationRow>& rows);

}  // namespace ecdiff::pipeline
