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

// Expert demonstration datasets: generation, a versioned binary file format
// and window sampling for training.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "ecdiff/denoiser/denoiser.hpp"
#include "ecdiff/entities/entities.hpp"
#include "ecdiff/numerics/rng.hpp"
#include "ecdiff/pushworld/pushworld.hpp"

namespace ecdiff::pipeline {

using Action = std::array<double, entities::kActionDim>;

/// One expert demonstration. Particles are stored unnormalized.
struct EpisodeRecord {
  std::uint64_t seed = 0;
  std::size_t n_objects = 0;
  std::vector<entities::Observation> observations;  // actions.size() + 1 entries
  std::vector<Action> actions;
  /// The final observation without the agent.
  entities::Observation goal;

  std::size_t length() const { return actions.size(); }
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

struct Dataset {
  std::size_t particles = 0;
  std::size_t views = entities::kNumViews;
  std::size_t n_objects = 0;
  pushworld::ColorMode color_mode = pushworld::ColorMode::kFixedDistinct;
  std::uint64_t seed = 0;
  std::vector<EpisodeRecord> episodes;

  /// Total number of actions over all episodes.
  std::size_t transitions() const;
  /// Shortest episode length; windows of up to this + 1 states need no padding.
  std::size_t min_length() const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct GenerateOptions {
  std::size_t n_episodes = 500;
  std::size_t n_objects = 2;
  pushworld::ColorMode color_mode = pushworld::ColorMode::kFixedDistinct;
  /// Particles per set; 0 picks n_objects + 2 (objects, agent, one pad).
  std::size_t particles = 0;
  std::size_t views = entities::kNumViews;
  std::uint64_t seed = 0;
  /// Visit objects in a random per-episode order instead of nearest first.
  bool random_order = true;
  pushworld::EnvParams env;
};

class ExpertFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t default_particles(std::size_t n_objects);

/// Rolls out the expert on `n_episodes` seeded resets and encodes every
/// state with independent per-(timestep, view) shuffles. Throws
/// ExpertFailure if any episode ends unsolved.
Dataset generate_dataset(const GenerateOptions& options);

/// Binary, little-endian: magic "ECDDATA\0", u32 version, header (particles,
/// views, objects, minimum length, color mode, seed, episode count), then
/// each episode prefixed by its length.
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

/// Min/max over every particle (goals included) and action of `dataset`.
entities::NormalizationStats fit_normalization(const Dataset& dataset);

/// One training window in raw units, laid out as WindowLayout describes.
struct Window {
  std::vector<double> x0;
  std::vector<double> cond;
  std::size_t episode = 0;
  std::size_t start = 0;
  /// Provenance of every particle row of x0's states, then of cond.
  std::vector<int> x0_entity;
  std::vector<int> cond_entity;
};

/// Window of `horizon` states starting at `start`: the state there and the
/// episode goal form cond, the following steps form x0. Steps past the end
/// repeat the final state with zero actions. Sets are canonically ordered in
/// the unstructured mode; the no-diffusion mode generates a single step.
Window extract_window(const Dataset& dataset, std::size_t episode, std::size_t start,
                      std::size_t horizon, denoiser::Mode mode);
/// Uniform episode, then uniform start over its actions.
Window sample_window(const Dataset& dataset, std::size_t horizon, denoiser::Mode mode,
                     num::SeededRng& rng);

/// Normalizes a window in place: particle rows and action entries.
void normalize_window(const entities::NormalizationStats& stats,
                      const denoiser::WindowLayout& layout, Window& window);

}  // namespace ecdiff::pipeline
