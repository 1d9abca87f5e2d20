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

// Training loop: batches of normalized windows, the per-mode objective and
// Adam with per-epoch checkpoints.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ecdiff/denoiser/denoiser.hpp"
#include "ecdiff/diffusion/diffusion.hpp"
#include "ecdiff/pipeline/dataset.hpp"

namespace ecdiff::pipeline {

enum class LrSchedule {
  kConstant,
  kCosine,  // lr * (1 + cos(pi * step / total)) / 2
};

LrSchedule parse_lr_schedule(const std::string& name);
std::string lr_schedule_name(LrSchedule schedule);

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr = 8e-5;
  int diffusion_steps = 5;
  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::kCosine;
  std::size_t horizon = 3;
  std::size_t epochs = 50;
  /// Optimizer steps per epoch; 0 means one pass worth of windows,
  /// ceil(transitions / batch_size).
  std::size_t steps_per_epoch = 0;
  std::uint64_t seed = 0;
  denoiser::Mode mode = denoiser::Mode::kFull;
  std::size_t hidden = 128;
  std::size_t heads = 8;
  std::size_t layers = 4;
  std::size_t mlp_ratio = 4;
  /// Loss weight of each action entry relative to a state entry. 1 is the
  /// plain mean over all entries.
  double action_weight = 1.0;
  LrSchedule lr_schedule = LrSchedule::kConstant;

  /// Learning rate for optimizer step `step` of `total` (0-based).
  double lr_at(std::size_t step, std::size_t total) const;
  void validate() const;
  denoiser::DenoiserConfig model_config(std::size_t particles, std::size_t views) const;
};

/// What a checkpoint needs besides weights to drive a rollout.
struct PolicyInfo {
  int diffusion_steps = 5;
  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::kCosine;
  /// Text of the run configuration that produced the checkpoint.
  std::string config_text;

  std::string to_metadata() const;
  /// Throws num::FormatError on metadata not written by to_metadata().
  static PolicyInfo from_metadata(const std::string& metadata);
};

struct Batch {
  num::Tensor x0;    // [B, x_dim], normalized
  num::Tensor cond;  // [B, cond_dim], normalized
};

Batch sample_batch(const Dataset& dataset, const entities::NormalizationStats& stats,
                   const denoiser::Denoiser& model, std::size_t batch_size, num::SeededRng& rng);

/// Query fed to the no-diffusion model: the current state repeated as the
/// next state and zero actions, at step 1.
num::Tensor direct_query(const num::Tensor& cond, const denoiser::WindowLayout& layout);

/// Training objective of one batch. Diffusion modes use the l1 noise
/// prediction loss at random steps; the no-diffusion mode compares its
/// direct prediction to x0 with chamfer_l1 per state set plus l1 on actions,
/// divided by the number of entries. Action entries count `action_weight`
/// times in both sums.
num::Var batch_loss(const denoiser::Denoiser& model, const diffusion::Schedule& schedule,
                    const Batch& batch, num::SeededRng& rng, double action_weight = 1.0);

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochReport {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<double> epoch_loss;
  std::size_t best_epoch = 0;
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
};

/// Trains from scratch and writes into `run_dir`: loss.csv (epoch,
/// mean_loss), checkpoints/last.ckpt after every epoch and
/// checkpoints/best.ckpt whenever the epoch loss improves. Normalization is
/// fitted on `dataset`. Throws TrainingDiverged on a non-finite loss.
TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const std::filesystem::path& run_dir, const std::string& config_text = {},
                  const std::function<void(const EpochReport&)>& on_epoch = {});

}  // namespace ecdiff::pipeline
