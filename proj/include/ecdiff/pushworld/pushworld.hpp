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

// Planar multi-object pushing: a disc-shaped agent pushes colored discs to
// color-matched goal positions inside the unit square.

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ecdiff/numerics/rng.hpp"

namespace ecdiff::pushworld {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  friend bool operator==(Vec2, Vec2) = default;
};

inline constexpr int kNumColors = 6;
/// Feature slot reserved for the agent; colors use slots [0, kNumColors).
inline constexpr int kAgentColorSlot = kNumColors;

enum class ColorMode {
  kFixedDistinct,  // object i gets color i
  kRandom,         // n distinct colors drawn from the palette per episode
};

struct EnvParams {
  double agent_radius = 0.03;
  double object_radius = 0.05;
  /// Euclidean bound on one action; below object_radius so pushes cannot
  /// tunnel through an object.
  double action_limit = 0.04;
  /// Success threshold as a fraction of object_radius.
  double threshold_ratio = 0.8;
  /// Objects, goals and the agent are sampled in [margin, 1 - margin]^2.
  double placement_margin = 0.2;
  /// Minimum spacing between sampled goals, in object radii.
  double goal_spacing = 3.0;
  int max_steps_per_object = 60;

  double threshold() const { return threshold_ratio * object_radius; }
  int max_steps(std::size_t n_objects) const {
    return max_steps_per_object * static_cast<int>(n_objects);
  }
};

struct Object {
  Vec2 pos;
  int color = 0;
  double radius = 0.05;
  friend bool operator==(const Object&, const Object&) = default;
};

struct SceneState {
  Vec2 agent;
  double agent_radius = 0.03;
  std::vector<Object> objects;
  friend bool operator==(const SceneState&, const SceneState&) = default;
};

struct Goal {
  Vec2 pos;
  int color = 0;
  friend bool operator==(const Goal&, const Goal&) = default;
};

struct GoalSpec {
  std::vector<Goal> goals;
  double threshold = 0.04;
  friend bool operator==(const GoalSpec&, const GoalSpec&) = default;
};

struct MetricsReport {
  bool success = false;
  double success_fraction = 0.0;
  double max_obj_dist = 0.0;
  double avg_obj_dist = 0.0;
};

class PlacementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Random non-overlapping scene and goals. Throws PlacementError when
/// rejection sampling exhausts its retry budget.
std::pair<SceneState, GoalSpec> reset(const EnvParams& params, std::size_t n_objects,
                                      ColorMode mode, num::SeededRng& rng);

/// Clips `action` to the action limit.
Vec2 clip_action(const EnvParams& params, Vec2 action);

/// One deterministic transition. The agent moves by the clipped action and is
/// clamped to the workspace; every object it then overlaps is projected out
/// along the contact normal by the penetration depth and clamped.
SceneState step(const EnvParams& params, const SceneState& state, Vec2 action);

/// For each object, the index of its goal. Colors must match one-to-one
/// as multisets; objects sharing a color are paired by the assignment with
/// minimal total distance.
std::vector<std::size_t> assign_goals(const SceneState& state, const GoalSpec& goal);

MetricsReport evaluate(const SceneState& state, const GoalSpec& goal);

/// Scripted pushing expert.
///
/// Targets one unsolved object at a time: by default the one nearest to the
/// agent (lowest index on ties); with a visit order, the first unsolved
/// object in that order. It stays committed to a target until that object
/// is placed, so bumping a placed neighbour on the way cannot make it flip
/// between targets forever. It plans a path around all objects to the staging
/// point behind the target on the line to its goal, then pushes along that
/// line.
class Expert {
 public:
  explicit Expert(EnvParams params, std::vector<std::size_t> visit_order = {});

  Vec2 act(const SceneState& state, const GoalSpec& goal);
  void reset_commitment() { committed_.reset(); }

  /// Distance below which the expert considers an object placed.
  double placed_tolerance() const { return 0.5 * params_.threshold(); }

 private:
  std::optional<std::size_t> pick_target(const SceneState& state,
                                         const std::vector<std::size_t>& assignment,
                                         const GoalSpec& goal) const;
  /// Next waypoint toward `target` that keeps clear of the object discs in
  /// `obstacles` where possible.
  Vec2 plan_waypoint(Vec2 agent, Vec2 target, const std::vector<Vec2>& obstacles) const;

  EnvParams params_;
  std::vector<std::size_t> order_;
  std::optional<std::size_t> committed_;
};

struct ExpertRollout {
  std::vector<SceneState> states;  // initial state first; states.size() == actions.size() + 1
  std::vector<Vec2> actions;
  MetricsReport metrics;
};

/// Runs the expert from `start` until success or `max_steps` actions.
ExpertRollout rollout_expert(const EnvParams& params, const SceneState& start, const GoalSpec& goal,
                             Expert& expert, int max_steps);

}  // namespace ecdiff::pushworld
