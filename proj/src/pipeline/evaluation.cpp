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

#include "ecdiff/pipeline/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "ecdiff/numerics/binary_io.hpp"
#include "ecdiff/pipeline/parallel.hpp"

namespace ecdiff::pipeline {

namespace {

using entities::kParticleDim;
using pushworld::GoalSpec;
using pushworld::SceneState;

struct LiveEpisode {
  EpisodeResult result;
  SceneState state;
  entities::Observation goal_obs;
  num::SeededRng sample_rng;
  num::SeededRng encode_rng;
  int max_steps = 0;
  bool record = false;
  bool done = false;
};

SceneState goal_scene(const GoalSpec& goal, const pushworld::EnvParams& env) {
  SceneState s;
  s.agent_radius = env.agent_radius;
  for (const auto& g : goal.goals) s.objects.push_back({g.pos, g.color, env.object_radius});
  return s;
}

LiveEpisode make_live(const SceneState& start, const GoalSpec& goal, std::uint64_t seed,
                      std::size_t index, std::size_t views, std::size_t particles,
                      const EvalOptions& options, bool record) {
  LiveEpisode live;
  live.sample_rng = num::SeededRng(num::derive_seed(seed, 1));
  live.encode_rng = num::SeededRng(num::derive_seed(seed, 2));
  live.result.index = index;
  live.result.seed = seed;
  live.result.n_objects = start.objects.size();
  live.result.goal = goal;
  live.state = start;
  live.goal_obs = entities::encode_observation(goal_scene(goal, options.env), views, particles,
                                               live.encode_rng, false);
  live.max_steps = options.env.max_steps(start.objects.size());
  live.record = record;
  if (record) live.result.states.push_back(start);
  return live;
}

void append_sets(const entities::Observation& obs, bool canonical, double* dst) {
  for (const auto& raw : obs) {
    const auto set = canonical ? entities::canonical_order(raw) : raw;
    dst = std::copy(set.data.begin(), set.data.end(), dst);
  }
}

Plan extract_plan(std::span<const double> row, const denoiser::WindowLayout& layout,
                  const entities::NormalizationStats& stats) {
  Plan plan;
  if (!layout.has_states) return plan;
  for (std::size_t k = 0; k < layout.steps; ++k) {
    auto set = row.subspan(k * layout.views * layout.set_size(), layout.set_size());
    std::vector<double> rows(set.begin(), set.end());
    stats.denormalize_particles(rows);
    plan.steps.push_back(std::move(rows));
  }
  return plan;
}

/// Steps every episode in `live` together until all finish.
void run_lockstep(const Policy& policy, std::size_t particles, const EvalOptions& options,
                  std::vector<LiveEpisode>& live) {
  num::NoGradGuard no_grad;
  const auto& model = policy.model;
  const auto layout = model.layout(particles);
  const bool canonical = model.config().mode == denoiser::Mode::kUnstructured;
  const bool direct = model.config().mode == denoiser::Mode::kNoDiffusion;
  const std::size_t obs_width = layout.views * layout.set_size();

  std::vector<std::size_t> active;
  while (true) {
    active.clear();
    for (std::size_t i = 0; i < live.size(); ++i) {
      auto& ep = live[i];
      if (ep.done) continue;
      if (pushworld::evaluate(ep.state, ep.result.goal).success ||
          ep.result.steps >= ep.max_steps) {
        ep.done = true;
        continue;
      }
      active.push_back(i);
    }
    if (active.empty()) break;

    num::Tensor cond({active.size(), layout.cond_dim()});
    std::vector<num::SeededRng*> rngs;
    for (std::size_t a = 0; a < active.size(); ++a) {
      auto& ep = live[active[a]];
      auto obs =
          entities::encode_observation(ep.state, layout.views, particles, ep.encode_rng, true);
      double* row = cond.ptr() + a * layout.cond_dim();
      append_sets(obs, canonical, row);
      append_sets(ep.goal_obs, canonical, row + obs_width);
      policy.stats.normalize_particles(std::span<double>(row, layout.cond_dim()));
      rngs.push_back(&ep.sample_rng);
    }

    num::Tensor x;
    try {
      if (direct) {
        std::vector<int> t(active.size(), 1);
        x = model.predict(direct_query(cond, layout), t, cond, particles).value();
        for (double& v : x.data()) v = std::clamp(v, -1.0, 1.0);
      } else {
        x = diffusion::sample(model.noise_model(particles), cond, layout.x_dim(), policy.schedule,
                              rngs);
      }
    } catch (const num::NumericError&) {
      for (std::size_t i : active) {
        live[i].result.aborted = true;
        live[i].done = true;
      }
      continue;
    }

    for (std::size_t a = 0; a < active.size(); ++a) {
      auto& ep = live[active[a]];
      auto row = x.data().subspan(a * layout.x_dim(), layout.x_dim());
      pushworld::Vec2 action = first_action(row, layout, policy.stats);
      if (!std::isfinite(action.x) || !std::isfinite(action.y)) {
        ep.result.aborted = true;
        ep.done = true;
        continue;
      }
      ep.state =
          pushworld::step(options.env, ep.state, pushworld::clip_action(options.env, action));
      ++ep.result.steps;
      if (ep.record) {
        ep.result.states.push_back(ep.state);
        ep.result.plans.push_back(extract_plan(row, layout, policy.stats));
      }
    }
  }
  for (auto& ep : live) {
    ep.result.metrics = pushworld::evaluate(ep.state, ep.result.goal);
    if (ep.result.aborted) ep.result.metrics.success = false;
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::json goals_json(const GoalSpec& goal) {
  auto arr = nlohmann::json::array();
  for (const auto& g : goal.goals)
    arr.push_back({{"x", g.pos.x}, {"y", g.pos.y}, {"color", g.color}});
  return arr;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace

Policy Policy::load(const std::filesystem::path& checkpoint) {
  auto ck = denoiser::load_checkpoint(checkpoint);
  auto info = PolicyInfo::from_metadata(ck.metadata);
  auto schedule = diffusion::make_schedule(info.diffusion_steps, info.schedule);
  return Policy{std::move(ck.model), std::move(ck.stats), std::move(schedule), std::move(info)};
}

pushworld::Vec2 first_action(std::span<const double> row, const denoiser::WindowLayout& layout,
                             const entities::NormalizationStats& stats) {
  if (row.size() != layout.x_dim()) throw std::invalid_argument("first_action: row size");
  std::array<double, entities::kActionDim> a{row[layout.state_dim()], row[layout.state_dim() + 1]};
  stats.denormalize_actions(a);
  return {a[0], a[1]};
}

double EvalResult::success_rate() const {
  if (episodes.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : episodes) s += e.metrics.success ? 1.0 : 0.0;
  return s / static_cast<double>(episodes.size());
}

double EvalResult::mean_success_fraction() const {
  if (episodes.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : episodes) s += e.metrics.success_fraction;
  return s / static_cast<double>(episodes.size());
}

std::size_t eval_particles(const Policy& policy, const EvalOptions& options,
                           std::size_t n_objects) {
  if (options.particles) return options.particles;
  const auto& cfg = policy.model.config();
  if (cfg.mode == denoiser::Mode::kUnstructured) return cfg.particles;
  return std::max(cfg.particles, default_particles(n_objects));
}

std::uint64_t episode_seed(std::uint64_t master, std::size_t index) {
  return num::derive_seed(master, index);
}

EvalResult evaluate_policy(const Policy& policy, const EvalOptions& options) {
  if (options.n_objects == 0) throw std::invalid_argument("evaluation needs at least one object");
  const std::size_t particles = eval_particles(policy, options, options.n_objects);
  if (particles < options.n_objects + 1) {
    throw std::invalid_argument("eval particles must cover every object and the agent");
  }
  const std::size_t chunk = std::max<std::size_t>(options.chunk, 1);
  const std::size_t n_chunks = (options.n_episodes + chunk - 1) / chunk;
  const std::size_t views = policy.model.config().views;

  EvalResult result;
  result.episodes.resize(options.n_episodes);
  parallel_for(n_chunks, worker_count(options.threads), [&](std::size_t c) {
    std::vector<LiveEpisode> live;
    for (std::size_t i = c * chunk; i < std::min(options.n_episodes, (c + 1) * chunk); ++i) {
      std::uint64_t seed = episode_seed(options.seed, i);
      num::SeededRng env_rng(num::derive_seed(seed, 0));
      auto [start, goal] =
          pushworld::reset(options.env, options.n_objects, options.color_mode, env_rng);
      live.push_back(
          make_live(start, goal, seed, i, views, particles, options, i < options.record_episodes));
    }
    run_lockstep(policy, particles, options, live);
    for (auto& ep : live) result.episodes[ep.result.index] = std::move(ep.result);
  });
  return result;
}

EpisodeResult mpc_rollout(const Policy& policy, const SceneState& start, const GoalSpec& goal,
                          std::uint64_t seed, const EvalOptions& options) {
  const std::size_t particles = eval_particles(policy, options, start.objects.size());
  std::vector<LiveEpisode> live;
  live.push_back(
      make_live(start, goal, seed, 0, policy.model.config().views, particles, options, true));
  run_lockstep(policy, particles, options, live);
  return std::move(live.front().result);
}

void write_metrics_csv(const std::filesystem::path& path, const std::string& run_id,
                       const std::string& task, const EvalResult& result) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (fresh) out << "run_id,task,n_objects,seed,success,success_fraction,max_dist,avg_dist,steps\n";
  for (const auto& e : result.episodes) {
    out << run_id << ',' << task << ',' << e.n_objects << ',' << e.seed << ','
        << (e.metrics.success ? 1 : 0) << ',' << format_double(e.metrics.success_fraction) << ','
        << format_double(e.metrics.max_obj_dist) << ',' << format_double(e.metrics.avg_obj_dist)
        << ',' << e.steps << '\n';
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_trajectory_json(const std::filesystem::path& path, const EpisodeResult& episode,
                           const pushworld::EnvParams& env) {
  nlohmann::json j;
  j["kind"] = "trajectory";
  j["episode"] = episode.index;
  j["seed"] = episode.seed;
  j["agent_radius"] = env.agent_radius;
  j["object_radius"] = env.object_radius;
  j["goals"] = goals_json(episode.goal);
  auto frames = nlohmann::json::array();
  for (const auto& s : episode.states) {
    auto objects = nlohmann::json::array();
    for (const auto& o : s.objects) {
      objects.push_back({{"x", o.pos.x}, {"y", o.pos.y}, {"color", o.color}});
    }
    frames.push_back({{"agent", {s.agent.x, s.agent.y}}, {"objects", objects}});
  }
  j["frames"] = frames;
  write_json(path, j);
}

void write_plans_json(const std::filesystem::path& path, const EpisodeResult& episode,
                      const pushworld::EnvParams& env) {
  nlohmann::json j;
  j["kind"] = "plans";
  j["episode"] = episode.index;
  j["seed"] = episode.seed;
  j["agent_radius"] = env.agent_radius;
  j["object_radius"] = env.object_radius;
  j["goals"] = goals_json(episode.goal);
  auto frames = nlohmann::json::array();
  for (std::size_t k = 0; k < episode.plans.size(); ++k) {
    for (std::size_t tau = 0; tau < episode.plans[k].steps.size(); ++tau) {
      const auto& rows = episode.plans[k].steps[tau];
      auto particles = nlohmann::json::array();
      for (std::size_t r = 0; r + kParticleDim <= rows.size(); r += kParticleDim) {
        std::vector<double> p(rows.begin() + r, rows.begin() + r + kParticleDim);
        particles.push_back(p);
      }
      frames.push_back({{"env_step", k}, {"tau", tau + 1}, {"particles", particles}});
    }
  }
  j["frames"] = frames;
  write_json(path, j);
}

}  // namespace ecdiff::pipeline
