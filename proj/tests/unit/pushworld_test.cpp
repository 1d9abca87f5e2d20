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

#include "ecdiff/pushworld/pushworld.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "ecdiff/numerics/rng.hpp"

namespace ecdiff::pushworld {
namespace {

SceneState single_object_scene(Vec2 agent, Vec2 object) {
  SceneState s;
  s.agent = agent;
  s.agent_radius = 0.03;
  s.objects.push_back({object, 0, 0.05});
  return s;
}

// Straight-line metric recomputation: tries every color-respecting pairing.
MetricsReport brute_force_metrics(const SceneState& s, const GoalSpec& g) {
  const std::size_t n = s.objects.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_perm;
  do {
    bool ok = true;
    double cost = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (s.objects[i].color != g.goals[perm[i]].color) ok = false;
      double dx = s.objects[i].pos.x - g.goals[perm[i]].pos.x;
      double dy = s.objects[i].pos.y - g.goals[perm[i]].pos.y;
      cost += std::sqrt(dx * dx + dy * dy);
    }
    if (ok && cost < best) {
      best = cost;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  MetricsReport m;
  int placed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double dx = s.objects[i].pos.x - g.goals[best_perm[i]].pos.x;
    double dy = s.objects[i].pos.y - g.goals[best_perm[i]].pos.y;
    double d = std::sqrt(dx * dx + dy * dy);
    if (d <= g.threshold) ++placed;
    m.max_obj_dist = std::max(m.max_obj_dist, d);
    m.avg_obj_dist += d / n;
  }
  m.success_fraction = static_cast<double>(placed) / n;
  m.success = placed == static_cast<int>(n);
  return m;
}

TEST(Reset, SingleObjectHasNoOverlap) {
  EnvParams p;
  num::SeededRng rng(1);
  auto [scene, goal] = reset(p, 1, ColorMode::kFixedDistinct, rng);
  ASSERT_EQ(scene.objects.size(), 1u);
  ASSERT_EQ(goal.goals.size(), 1u);
  EXPECT_GE((scene.agent - scene.objects[0].pos).norm(), p.agent_radius + p.object_radius);
  EXPECT_DOUBLE_EQ(goal.threshold, 0.04);
}

TEST(Reset, SameSeedSameScene) {
  EnvParams p;
  num::SeededRng a(99), b(99);
  EXPECT_EQ(reset(p, 3, ColorMode::kRandom, a), reset(p, 3, ColorMode::kRandom, b));
}

TEST(Reset, RejectsBadObjectCount) {
  EnvParams p;
  num::SeededRng rng(1);
  EXPECT_THROW(reset(p, 0, ColorMode::kRandom, rng), std::invalid_argument);
  EXPECT_THROW(reset(p, 7, ColorMode::kRandom, rng), std::invalid_argument);
}

TEST(Reset, ThousandResetsNeverOverlap) {
  EnvParams p;
  num::SeededRng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    std::size_t n = 1 + trial % 6;
    auto [scene, goal] =
        reset(p, n, trial % 2 ? ColorMode::kRandom : ColorMode::kFixedDistinct, rng);
    ASSERT_EQ(scene.objects.size(), n);
    std::vector<int> colors;
    for (std::size_t i = 0; i < n; ++i) {
      const Object& o = scene.objects[i];
      EXPECT_GE(o.pos.x, o.radius);
      EXPECT_LE(o.pos.x, 1.0 - o.radius);
      EXPECT_GE(o.pos.y, o.radius);
      EXPECT_LE(o.pos.y, 1.0 - o.radius);
      EXPECT_GE((scene.agent - o.pos).norm(), p.agent_radius + o.radius);
      for (std::size_t j = i + 1; j < n; ++j) {
        EXPECT_GE((scene.objects[j].pos - o.pos).norm(), 2.0 * p.object_radius);
      }
      colors.push_back(o.color);
    }
    std::sort(colors.begin(), colors.end());
    EXPECT_EQ(std::adjacent_find(colors.begin(), colors.end()), colors.end());
    EXPECT_TRUE(evaluate(scene, goal).success_fraction < 1.0);
  }
}

TEST(Step, FarAgentMovesAlone) {
  EnvParams p;
  SceneState s = single_object_scene({0.2, 0.2}, {0.7, 0.7});
  SceneState next = step(p, s, {0.01, -0.02});
  EXPECT_DOUBLE_EQ(next.agent.x, 0.21);
  EXPECT_DOUBLE_EQ(next.agent.y, 0.18);
  EXPECT_EQ(next.objects, s.objects);
}

TEST(Step, PenetrationAlongXShiftsObjectByDepth) {
  EnvParams p;
  // Contact distance is 0.08; moving 0.03 right leaves the agent 0.07 away.
  SceneState s = single_object_scene({0.4, 0.5}, {0.5, 0.5});
  SceneState next = step(p, s, {0.03, 0.0});
  EXPECT_NEAR(next.objects[0].pos.x, 0.51, 1e-15);
  EXPECT_DOUBLE_EQ(next.objects[0].pos.y, 0.5);
}

TEST(Step, ZeroActionIsIdentity) {
  EnvParams p;
  num::SeededRng rng(5);
  auto [scene, goal] = reset(p, 4, ColorMode::kRandom, rng);
  EXPECT_EQ(step(p, scene, {0.0, 0.0}), scene);
}

TEST(Step, ActionsAreClipped) {
  EnvParams p;
  SceneState s = single_object_scene({0.5, 0.5}, {0.1, 0.9});
  SceneState next = step(p, s, {1.0, 0.0});
  EXPECT_DOUBLE_EQ(next.agent.x, 0.54);
  Vec2 c = clip_action(p, {0.03, 0.04});
  EXPECT_NEAR(c.norm(), 0.04, 1e-15);
}

TEST(Step, DeterministicAndNoTunneling) {
  EnvParams p;
  num::SeededRng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto [scene, goal] = reset(p, 1 + trial % 6, ColorMode::kRandom, rng);
    for (int t = 0; t < 40; ++t) {
      Vec2 a{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
      SceneState next = step(p, scene, a);
      ASSERT_EQ(next, step(p, scene, a));
      for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        EXPECT_LE((next.objects[i].pos - scene.objects[i].pos).norm(), p.action_limit + 1e-12);
      }
      scene = next;
    }
  }
}

TEST(Evaluate, AllAtGoal) {
  SceneState s = single_object_scene({0.1, 0.1}, {0.5, 0.5});
  GoalSpec g{{{{0.5, 0.5}, 0}}, 0.04};
  MetricsReport m = evaluate(s, g);
  EXPECT_TRUE(m.success);
  EXPECT_EQ(m.success_fraction, 1.0);
  EXPECT_EQ(m.max_obj_dist, 0.0);
  EXPECT_EQ(m.avg_obj_dist, 0.0);
}

TEST(Evaluate, TwoOfThreePlaced) {
  SceneState s;
  s.objects = {{{0.2, 0.2}, 0, 0.05}, {{0.5, 0.5}, 1, 0.05}, {{0.8, 0.8}, 2, 0.05}};
  GoalSpec g{{{{0.8, 0.5}, 2}, {{0.21, 0.2}, 0}, {{0.5, 0.5}, 1}}, 0.04};
  MetricsReport m = evaluate(s, g);
  EXPECT_FALSE(m.success);
  EXPECT_DOUBLE_EQ(m.success_fraction, 2.0 / 3.0);
  EXPECT_NEAR(m.max_obj_dist, 0.3, 1e-15);
}

TEST(Evaluate, DuplicateColorsUseCheapestPairing) {
  SceneState s;
  s.objects = {{{0.2, 0.2}, 3, 0.05}, {{0.8, 0.8}, 3, 0.05}};
  GoalSpec g{{{{0.8, 0.8}, 3}, {{0.2, 0.2}, 3}}, 0.04};
  EXPECT_TRUE(evaluate(s, g).success);
}

TEST(Evaluate, MatchesBruteForceAndIgnoresOrder) {
  EnvParams p;
  num::SeededRng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t n = 1 + trial % 6;
    auto [scene, goal] = reset(p, n, ColorMode::kRandom, rng);
    // Duplicate some colors and nudge objects toward goals so all branches run.
    if (n > 2 && trial % 3 == 0) {
      scene.objects[1].color = scene.objects[0].color;
      goal.goals[1].color = goal.goals[0].color;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (rng.uniform() < 0.5) {
        scene.objects[i].pos = goal.goals[i].pos + Vec2{rng.uniform(-0.03, 0.03), 0.0};
      }
    }
    MetricsReport got = evaluate(scene, goal);
    MetricsReport want = brute_force_metrics(scene, goal);
    EXPECT_EQ(got.success, want.success);
    EXPECT_DOUBLE_EQ(got.success_fraction, want.success_fraction);
    EXPECT_NEAR(got.max_obj_dist, want.max_obj_dist, 1e-12);
    EXPECT_NEAR(got.avg_obj_dist, want.avg_obj_dist, 1e-12);

    SceneState shuffled = scene;
    rng.shuffle(shuffled.objects);
    MetricsReport again = evaluate(shuffled, goal);
    EXPECT_EQ(again.success, got.success);
    EXPECT_DOUBLE_EQ(again.success_fraction, got.success_fraction);
    EXPECT_NEAR(again.max_obj_dist, got.max_obj_dist, 1e-12);
    EXPECT_NEAR(again.avg_obj_dist, got.avg_obj_dist, 1e-12);
  }
}

TEST(Expert, SolvedSceneGivesZeroAction) {
  Expert expert{EnvParams{}};
  SceneState s = single_object_scene({0.1, 0.1}, {0.5, 0.5});
  GoalSpec g{{{{0.51, 0.5}, 0}}, 0.04};
  EXPECT_EQ(expert.act(s, g), (Vec2{0.0, 0.0}));
}

TEST(Expert, PushesFromBehindTowardGoal) {
  EnvParams p;
  Expert expert{p};
  SceneState s = single_object_scene({0.32, 0.5}, {0.4, 0.5});
  GoalSpec g{{{{0.7, 0.5}, 0}}, 0.04};
  Vec2 a = expert.act(s, g);
  EXPECT_NEAR(a.norm(), p.action_limit, 1e-15);
  EXPECT_NEAR(a.x / a.norm(), 1.0, 1e-12);
  EXPECT_NEAR(a.y, 0.0, 1e-12);
}

class ExpertBattery : public ::testing::TestWithParam<std::size_t> {};

TEST_P(ExpertBattery, SolvesEverySeed) {
  const std::size_t n = GetParam();
  EnvParams p;
  for (std::uint64_t seed = 0; seed < 96; ++seed) {
    num::SeededRng rng(num::derive_seed(seed, n));
    auto [scene, goal] = reset(p, n, ColorMode::kFixedDistinct, rng);
    Expert expert{p};
    ExpertRollout r = rollout_expert(p, scene, goal, expert, p.max_steps(n));
    EXPECT_TRUE(r.metrics.success) << "seed " << seed;
    EXPECT_LE(static_cast<int>(r.actions.size()), p.max_steps(n));
  }
}

INSTANTIATE_TEST_SUITE_P(OneToThreeObjects, ExpertBattery, ::testing::Values(1, 2, 3));

TEST(Expert, RandomVisitOrderAlsoSolves) {
  EnvParams p;
  for (std::uint64_t seed = 0; seed < 48; ++seed) {
    num::SeededRng rng(seed);
    auto [scene, goal] = reset(p, 3, ColorMode::kRandom, rng);
    std::vector<std::size_t> order{0, 1, 2};
    rng.shuffle(order);
    Expert expert{p, order};
    EXPECT_TRUE(rollout_expert(p, scene, goal, expert, p.max_steps(3)).metrics.success);
  }
}

}  // namespace
}  // namespace ecdiff::pushworld
