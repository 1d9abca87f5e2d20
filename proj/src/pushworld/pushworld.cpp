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

#include <algorithm>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

namespace ecdiff::pushworld {
namespace {

constexpr int kPlacementRetries = 10000;

Vec2 clamp_box(Vec2 p, double lo, double hi) {
  return {std::clamp(p.x, lo, hi), std::clamp(p.y, lo, hi)};
}

Vec2 sample_point(const EnvParams& params, num::SeededRng& rng) {
  double lo = params.placement_margin;
  double hi = 1.0 - params.placement_margin;
  double x = rng.uniform(lo, hi);
  double y = rng.uniform(lo, hi);
  return {x, y};
}

template <typename Pred>
Vec2 place(const EnvParams& params, num::SeededRng& rng, Pred ok, const char* what) {
  for (int i = 0; i < kPlacementRetries; ++i) {
    Vec2 p = sample_point(params, rng);
    if (ok(p)) return p;
  }
  throw PlacementError(std::string("reset: could not place ") + what + " without overlap");
}

// Shortest distance from `c` to segment [a, b].
double segment_distance(Vec2 a, Vec2 b, Vec2 c) {
  Vec2 ab = b - a;
  double len2 = ab.dot(ab);
  double t = len2 > 0.0 ? std::clamp((c - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + ab * t - c).norm();
}

}  // namespace

std::pair<SceneState, GoalSpec> reset(const EnvParams& params, std::size_t n_objects,
                                      ColorMode mode, num::SeededRng& rng) {
  if (n_objects < 1 || n_objects > static_cast<std::size_t>(kNumColors)) {
    throw std::invalid_argument("reset: n_objects must be in [1, 6], got " +
                                std::to_string(n_objects));
  }
  const double r = params.object_radius;
  std::vector<int> colors(kNumColors);
  std::iota(colors.begin(), colors.end(), 0);
  if (mode == ColorMode::kRandom) rng.shuffle(colors);
  colors.resize(n_objects);

  SceneState scene;
  scene.agent_radius = params.agent_radius;
  const double object_gap = 2.0 * r + 0.02;
  for (std::size_t i = 0; i < n_objects; ++i) {
    Vec2 p = place(
        params, rng,
        [&](Vec2 c) {
          return std::all_of(scene.objects.begin(), scene.objects.end(),
                             [&](const Object& o) { return (o.pos - c).norm() >= object_gap; });
        },
        "objects");
    scene.objects.push_back({p, colors[i], r});
  }

  GoalSpec goal;
  goal.threshold = params.threshold();
  const double goal_gap = params.goal_spacing * r;
  for (std::size_t i = 0; i < n_objects; ++i) {
    Vec2 g = place(
        params, rng,
        [&](Vec2 c) {
          if ((scene.objects[i].pos - c).norm() < 2.0 * r) return false;
          return std::all_of(goal.goals.begin(), goal.goals.end(),
                             [&](const Goal& o) { return (o.pos - c).norm() >= goal_gap; });
        },
        "goals");
    goal.goals.push_back({g, colors[i]});
  }

  const double agent_gap = params.agent_radius + r + 0.02;
  scene.agent = place(
      params, rng,
      [&](Vec2 c) {
        return std::all_of(scene.objects.begin(), scene.objects.end(),
                           [&](const Object& o) { return (o.pos - c).norm() >= agent_gap; });
      },
      "agent");
  return {std::move(scene), std::move(goal)};
}

Vec2 clip_action(const EnvParams& params, Vec2 action) {
  double n = action.norm();
  if (!std::isfinite(n)) return {};
  if (n > params.action_limit) return action * (params.action_limit / n);
  return action;
}

SceneState step(const EnvParams& params, const SceneState& state, Vec2 action) {
  SceneState next = state;
  Vec2 a = clip_action(params, action);
  const double ra = state.agent_radius;
  next.agent = clamp_box(state.agent + a, ra, 1.0 - ra);
  for (Object& o : next.objects) {
    Vec2 d = o.pos - next.agent;
    double dist = d.norm();
    double contact = ra + o.radius;
    if (dist >= contact) continue;
    Vec2 normal =
        dist > 0.0 ? d * (1.0 / dist) : (a.norm() > 0.0 ? a * (1.0 / a.norm()) : Vec2{1.0, 0.0});
    o.pos = clamp_box(o.pos + normal * (contact - dist), o.radius, 1.0 - o.radius);
  }
  return next;
}

std::vector<std::size_t> assign_goals(const SceneState& state, const GoalSpec& goal) {
  const std::size_t n = state.objects.size();
  if (goal.goals.size() != n) {
    throw std::invalid_argument("assign_goals: object and goal counts differ");
  }
  std::map<int, std::vector<std::size_t>> objects_by_color, goals_by_color;
  for (std::size_t i = 0; i < n; ++i) {
    objects_by_color[state.objects[i].color].push_back(i);
    goals_by_color[goal.goals[i].color].push_back(i);
  }
  std::vector<std::size_t> assignment(n);
  for (auto& [color, objs] : objects_by_color) {
    auto it = goals_by_color.find(color);
    if (it == goals_by_color.end() || it->second.size() != objs.size()) {
      throw std::invalid_argument("assign_goals: colors of objects and goals differ");
    }
    std::vector<std::size_t> perm = it->second;  // sorted ascending
    std::vector<std::size_t> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      double cost = 0.0;
      for (std::size_t k = 0; k < objs.size(); ++k) {
        cost += (state.objects[objs[k]].pos - goal.goals[perm[k]].pos).norm();
      }
      if (cost < best_cost) {
        best_cost = cost;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    for (std::size_t k = 0; k < objs.size(); ++k) assignment[objs[k]] = best[k];
  }
  return assignment;
}

MetricsReport evaluate(const SceneState& state, const GoalSpec& goal) {
  const std::size_t n = state.objects.size();
  if (n == 0) throw std::invalid_argument("evaluate: scene has no objects");
  auto assignment = assign_goals(state, goal);
  MetricsReport m;
  std::size_t placed = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = (state.objects[i].pos - goal.goals[assignment[i]].pos).norm();
    if (d <= goal.threshold) ++placed;
    m.max_obj_dist = std::max(m.max_obj_dist, d);
    total += d;
  }
  m.success_fraction = static_cast<double>(placed) / static_cast<double>(n);
  m.success = placed == n;
  m.avg_obj_dist = total / static_cast<double>(n);
  return m;
}

Expert::Expert(EnvParams params, std::vector<std::size_t> visit_order)
    : params_(params), order_(std::move(visit_order)) {}

std::optional<std::size_t> Expert::pick_target(const SceneState& state,
                                               const std::vector<std::size_t>& assignment,
                                               const GoalSpec& goal) const {
  auto unsolved = [&](std::size_t i) {
    return (state.objects[i].pos - goal.goals[assignment[i]].pos).norm() > placed_tolerance();
  };
  if (committed_ && *committed_ < state.objects.size() && unsolved(*committed_)) {
    return committed_;
  }
  for (std::size_t i : order_) {
    if (i < state.objects.size() && unsolved(i)) return i;
  }
  std::optional<std::size_t> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < state.objects.size(); ++i) {
    if (!unsolved(i)) continue;
    double d = (state.objects[i].pos - state.agent).norm();
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return best;
}

Vec2 Expert::plan_waypoint(Vec2 agent, Vec2 target, const std::vector<Vec2>& obstacles) const {
  const double contact = params_.agent_radius + params_.object_radius;
  auto clear = [&](Vec2 a, Vec2 b) {
    return std::all_of(obstacles.begin(), obstacles.end(),
                       [&](Vec2 o) { return segment_distance(a, b, o) >= contact + 0.001; });
  };
  if (clear(agent, target)) return target;

  // 8-connected A* over a grid of the agent's reachable box. Cells closer
  // than the clearance to an object are passable at a steep penalty so the
  // agent can always leave contact and reach crowded staging points.
  constexpr int kCells = 50;
  constexpr double kPenalty = 25.0;
  const double clearance = contact + 0.005;
  const double lo = params_.agent_radius;
  const double h = (1.0 - 2.0 * lo) / kCells;
  const int side = kCells + 1;
  auto point = [&](int c) { return Vec2{lo + (c / side) * h, lo + (c % side) * h}; };
  auto cell_of = [&](Vec2 p) {
    int i = std::clamp(static_cast<int>(std::lround((p.x - lo) / h)), 0, kCells);
    int j = std::clamp(static_cast<int>(std::lround((p.y - lo) / h)), 0, kCells);
    return i * side + j;
  };
  std::vector<double> penalty(side * side, 0.0);
  for (int c = 0; c < side * side; ++c) {
    for (Vec2 o : obstacles) {
      if ((point(c) - o).norm() < clearance) penalty[c] = kPenalty;
    }
  }
  const int start = cell_of(agent);
  const int goal = cell_of(target);
  auto heuristic = [&](int c) {
    return std::hypot(c / side - goal / side, c % side - goal % side);
  };

  std::vector<double> cost(side * side, std::numeric_limits<double>::infinity());
  std::vector<int> from(side * side, -1);
  using Entry = std::pair<double, int>;
  std::vector<Entry> heap;
  auto cmp = [](const Entry& a, const Entry& b) {
    return a.first > b.first || (a.first == b.first && a.second > b.second);
  };
  cost[start] = 0.0;
  heap.emplace_back(heuristic(start), start);
  while (!heap.empty()) {
    std::pop_heap(heap.begin(), heap.end(), cmp);
    auto [f, cur] = heap.back();
    heap.pop_back();
    if (cur == goal) break;
    if (f > cost[cur] + heuristic(cur) + 1e-9) continue;
    int ci = cur / side, cj = cur % side;
    for (int di = -1; di <= 1; ++di) {
      for (int dj = -1; dj <= 1; ++dj) {
        if (!di && !dj) continue;
        int ni = ci + di, nj = cj + dj;
        if (ni < 0 || nj < 0 || ni >= side || nj >= side) continue;
        int nxt = ni * side + nj;
        double c = cost[cur] + ((di && dj) ? std::numbers::sqrt2 : 1.0) + penalty[nxt];
        if (c < cost[nxt]) {
          cost[nxt] = c;
          from[nxt] = cur;
          heap.emplace_back(c + heuristic(nxt), nxt);
          std::push_heap(heap.begin(), heap.end(), cmp);
        }
      }
    }
  }

  // Path from start outward, ending at the exact target.
  std::vector<Vec2> path{target};
  for (int c = goal; c >= 0 && c != start; c = from[c]) path.push_back(point(c));
  std::reverse(path.begin(), path.end());
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    if (clear(agent, *it)) return *it;
  }
  return path.front();
}

Vec2 Expert::act(const SceneState& state, const GoalSpec& goal) {
  auto assignment = assign_goals(state, goal);
  auto target = pick_target(state, assignment, goal);
  committed_ = target;
  if (!target) return {};
  const Object& obj = state.objects[*target];
  Vec2 to_goal = goal.goals[assignment[*target]].pos - obj.pos;
  double dist = to_goal.norm();
  Vec2 u = to_goal * (1.0 / dist);
  Vec2 normal{-u.y, u.x};
  const double contact = state.agent_radius + obj.radius;

  Vec2 rel = obj.pos - state.agent;
  double along = rel.dot(u);
  double offset = (state.agent - obj.pos).dot(normal);
  if (along > 0.0 && along < contact + 0.02 && std::abs(offset) < 0.004) {
    // Aligned behind the object: advance so the object lands on its goal.
    Vec2 push = u * (along - contact + dist) - normal * offset;
    return clip_action(params_, push);
  }
  Vec2 staging = obj.pos - u * (contact + 0.01);
  std::vector<Vec2> obstacles;
  for (const Object& o : state.objects) obstacles.push_back(o.pos);
  return clip_action(params_, plan_waypoint(state.agent, staging, obstacles) - state.agent);
}

ExpertRollout rollout_expert(const EnvParams& params, const SceneState& start, const GoalSpec& goal,
                             Expert& expert, int max_steps) {
  ExpertRollout out;
  out.states.push_back(start);
  expert.reset_commitment();
  out.metrics = evaluate(start, goal);
  while (!out.metrics.success && static_cast<int>(out.actions.size()) < max_steps) {
    Vec2 a = expert.act(out.states.back(), goal);
    out.actions.push_back(a);
    out.states.push_back(step(params, out.states.back(), a));
    out.metrics = evaluate(out.states.back(), goal);
  }
  return out;
}

}  // namespace ecdiff::pushworld
