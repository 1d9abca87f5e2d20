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

// Ground-truth particle encoding of push scenes, feature normalization to
// [-1, 1], and set distances.
//
// Particle vector layout, fixed and bit-exact:
//   [z_p.x, z_p.y, z_s.x, z_s.y, z_d, z_trans, z_f[0..kFeatureDim)]
// z_f is a one-hot color over the six palette slots, the agent slot, and one
// always-zero pad slot.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ecdiff/numerics/autodiff.hpp"
#include "ecdiff/numerics/rng.hpp"
#include "ecdiff/pushworld/pushworld.hpp"

namespace ecdiff::entities {

inline constexpr std::size_t kFeatureDim = 8;
inline constexpr std::size_t kParticleDim = 6 + kFeatureDim;
inline constexpr std::size_t kActionDim = 2;

inline constexpr std::size_t kPosX = 0;
inline constexpr std::size_t kPosY = 1;
inline constexpr std::size_t kScaleX = 2;
inline constexpr std::size_t kScaleY = 3;
inline constexpr std::size_t kDepth = 4;
inline constexpr std::size_t kTransparency = 5;
inline constexpr std::size_t kFeatures = 6;

// Provenance ids of non-object particles. Objects use their scene index.
inline constexpr int kAgentEntity = -1;
inline constexpr int kPadEntity = -2;

inline constexpr std::size_t kNumViews = 2;

/// Fixed planar frames: view 0 is the identity, view 1 rotates the unit
/// square by 90 degrees about its center, (x, y) -> (1 - y, x).
pushworld::Vec2 to_view(std::size_t view, pushworld::Vec2 p);
pushworld::Vec2 from_view(std::size_t view, pushworld::Vec2 p);

/// M particles of one view, row-major [M, kParticleDim]. `entity` records
/// which scene entity produced each row; it is a side channel for analysis
/// and is never fed to a model.
struct ParticleSet {
  std::size_t view = 0;
  std::vector<double> data;
  std::vector<int> entity;

  std::size_t size() const { return entity.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data).subspan(i * kParticleDim, kParticleDim);
  }
  friend bool operator==(const ParticleSet&, const ParticleSet&) = default;
};

/// One particle set per view.
using Observation = std::vector<ParticleSet>;

/// Encodes objects and the agent (if `include_agent`) as particles in
/// `view`, pads to `m` rows, and shuffles the row order with `rng`.
/// Throws std::invalid_argument when the entities do not fit in `m`.
ParticleSet encode_ground_truth(const pushworld::SceneState& scene, std::size_t view, std::size_t m,
                                num::SeededRng& rng, bool include_agent = true);

Observation encode_observation(const pushworld::SceneState& scene, std::size_t n_views,
                               std::size_t m, num::SeededRng& rng, bool include_agent = true);

/// The pad particle: everything zero, transparency zero.
std::vector<double> pad_particle();

/// Rows sorted by color slot, then position; pads last. Two sets holding
/// the same multiset of particles sort to the same data.
ParticleSet canonical_order(const ParticleSet& set);

class NormalizationStats {
 public:
  NormalizationStats() = default;
  NormalizationStats(std::vector<double> particle_min, std::vector<double> particle_max,
                     std::vector<double> action_min, std::vector<double> action_max);

  /// Per-dimension extrema over `particles` ([rows, kParticleDim]) and
  /// `actions` ([rows, kActionDim]). Throws on empty input.
  static NormalizationStats fit(std::span<const double> particles, std::span<const double> actions);

  /// In place. Maps [min, max] onto [-1, 1], clamps outside, and sends
  /// degenerate dimensions to 0.
  void normalize_particles(std::span<double> rows) const;
  void normalize_actions(std::span<double> rows) const;
  /// In place inverse of the affine map; degenerate dimensions return min.
  void denormalize_particles(std::span<double> rows) const;
  void denormalize_actions(std::span<double> rows) const;

  const std::vector<double>& particle_min() const { return p_min_; }
  const std::vector<double>& particle_max() const { return p_max_; }
  const std::vector<double>& action_min() const { return a_min_; }
  const std::vector<double>& action_max() const { return a_max_; }

  friend bool operator==(const NormalizationStats&, const NormalizationStats&) = default;

 private:
  std::vector<double> p_min_, p_max_, a_min_, a_max_;
};

/// Symmetric nearest-neighbour l1 distance between row sets a [na, dim] and
/// b [nb, dim]. Throws std::invalid_argument on empty sets or ragged input.
double chamfer_l1(std::span<const double> a, std::span<const double> b, std::size_t dim);

/// chamfer_l1 between each group of `set_size` consecutive rows of
/// `prediction` and the matching rows of `target`, summed over groups.
/// Differentiable in `prediction`; nearest neighbours are held fixed for
/// the backward pass.
num::Var chamfer_l1_loss(const num::Var& prediction, const num::Tensor& target,
                         std::size_t set_size);

}  // namespace ecdiff::entities
