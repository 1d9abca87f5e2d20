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

// Closed-loop evaluation: at every environment step the policy samples a
// window conditioned on the current and goal observations and executes
// only its first action.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecdiff/denoiser/denoiser.hpp"
#include "ecdiff/diffusion/diffusion.hpp"
#include "ecdiff/pipeline/training.hpp"
#include "ecdiff/pushworld/pushworld.hpp"

namespace ecdiff::pipeline {

struct Policy {
  denoiser::Denoiser model;
  entities::NormalizationStats stats;
  diffusion::Schedule schedule;
  PolicyInfo info;

  static Policy load(const std::filesystem::path& checkpoint);
};

/// The first generated action of a normalized window row, denormalized.
/// Reads only the action entries of the row.
pushworld::Vec2 first_action(std::span<const double> row, const denoiser::WindowLayout& layout,
                             const entities::NormalizationStats& stats);

struct EvalOptions {
  std::size_t n_episodes = 96;
  std::size_t n_objects = 1;
  pushworld::ColorMode color_mode = pushworld::ColorMode::kFixedDistinct;
  std::uint64_t seed = 0;
  /// Particles per set; 0 lets eval_particles() decide.
  std::size_t particles = 0;
  pushworld::EnvParams env;
  /// Episodes stepped together in one batched model call.
  std::size_t chunk = 32;
  /// Worker threads; 0 lets worker_count() decide.
  std::size_t threads = 0;
  /// Keep full trajectories and generated windows of the first k episodes.
  std::size_t record_episodes = 0;
};

/// Per-step plan in world units: for each generated timestep, the view-0
/// particle rows [particles, kParticleDim].
struct Plan {
  std::vector<std::vector<double>> steps;
};

struct EpisodeResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::size_t n_objects = 0;
  pushworld::MetricsReport metrics;
  int steps = 0;
  /// Set when the policy produced a non-finite action.
  bool aborted = false;
  /// Present only for recorded episodes.
  std::vector<pushworld::SceneState> states;
  std::vector<Plan> plans;
  pushworld::GoalSpec goal;
};

struct EvalResult {
  std::vector<EpisodeResult> episodes;

  double success_rate() const;
  double mean_success_fraction() const;
};

/// Particles per set for `n_objects`: the fixed option if set, the trained
/// count for the unstructured mode (its weights fix the set width), else
/// max(trained, n_objects + 2).
std::size_t eval_particles(const Policy& policy, const EvalOptions& options, std::size_t n_objects);

std::uint64_t episode_seed(std::uint64_t master, std::size_t index);

EvalResult evaluate_policy(const Policy& policy, const EvalOptions& options);

/// One episode from an explicit start and goal, sampling with streams
/// derived from `seed`. Always records the trajectory.
EpisodeResult mpc_rollout(const Policy& policy, const pushworld::SceneState& start,
                          const pushworld::GoalSpec& goal, std::uint64_t seed,
                          const EvalOptions& options);

/// Appends one row per episode; writes the header when the file is new.
void write_metrics_csv(const std::filesystem::path& path, const std::string& run_id,
                       const std::string& task, const EvalResult& result);

/// JSON dumps consumed by the renderer.
void write_trajectory_json(const std::filesystem::path& path, const EpisodeResult& episode,
                           const pushworld::EnvParams& env);
void write_plans_json(const std::filesystem::path& path, const EpisodeResult& episode,
                      const pushworld::EnvParams& env);

}  // namespace ecdiff::pipeline
