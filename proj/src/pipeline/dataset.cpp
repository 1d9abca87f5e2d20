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

#include "ecdiff/pipeline/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "ecdiff/numerics/binary_io.hpp"

namespace ecdiff::pipeline {

namespace {

constexpr char kDatasetMagic[] = "ECDDATA";  // 8 bytes with the terminator
constexpr std::uint32_t kDatasetVersion = 1;

using entities::kActionDim;
using entities::kParticleDim;
using entities::Observation;
using entities::ParticleSet;

void write_set(num::BinaryWriter& w, const ParticleSet& set) {
  w.u64(set.view);
  w.f64s(set.data);
  for (int e : set.entity) w.i64(e);
}

ParticleSet read_set(num::BinaryReader& r, std::size_t m) {
  ParticleSet set;
  set.view = r.u64();
  set.data = r.f64s();
  if (set.data.size() != m * kParticleDim) {
    throw num::FormatError("particle set has " + std::to_string(set.data.size()) +
                           " values, expected " + std::to_string(m * kParticleDim));
  }
  set.entity.resize(m);
  for (int& e : set.entity) e = static_cast<int>(r.i64());
  return set;
}

void write_observation(num::BinaryWriter& w, const Observation& obs) {
  for (const auto& set : obs) write_set(w, set);
}

Observation read_observation(num::BinaryReader& r, std::size_t views, std::size_t m) {
  Observation obs;
  for (std::size_t v = 0; v < views; ++v) obs.push_back(read_set(r, m));
  return obs;
}

void append_observation(const Observation& obs, bool canonical, std::vector<double>& data,
                        std::vector<int>& entity) {
  for (const auto& raw : obs) {
    const ParticleSet set = canonical ? entities::canonical_order(raw) : raw;
    data.insert(data.end(), set.data.begin(), set.data.end());
    entity.insert(entity.end(), set.entity.begin(), set.entity.end());
  }
}

std::uint32_t color_mode_code(pushworld::ColorMode mode) {
  return mode == pushworld::ColorMode::kRandom ? 1 : 0;
}

}  // namespace

std::size_t Dataset::transitions() const {
  std::size_t total = 0;
  for (const auto& ep : episodes) total += ep.length();
  return total;
}

std::size_t Dataset::min_length() const {
  if (episodes.empty()) return 0;
  std::size_t best = episodes.front().length();
  for (const auto& ep : episodes) best = std::min(best, ep.length());
  return best;
}

std::size_t default_particles(std::size_t n_objects) { return n_objects + 2; }

Dataset generate_dataset(const GenerateOptions& options) {
  if (options.n_objects == 0) throw std::invalid_argument("dataset needs at least one object");
  if (options.views == 0 || options.views > entities::kNumViews) {
    throw std::invalid_argument("views must be in [1, " + std::to_string(entities::kNumViews) +
                                "]");
  }
  Dataset ds;
  ds.particles = options.particles ? options.particles : default_particles(options.n_objects);
  if (ds.particles < options.n_objects + 1) {
    throw std::invalid_argument("particles must cover every object and the agent");
  }
  ds.views = options.views;
  ds.n_objects = options.n_objects;
  ds.color_mode = options.color_mode;
  ds.seed = options.seed;
  ds.episodes.reserve(options.n_episodes);

  const pushworld::EnvParams& env = options.env;
  for (std::size_t i = 0; i < options.n_episodes; ++i) {
    EpisodeRecord ep;
    ep.seed = num::derive_seed(options.seed, i);
    ep.n_objects = options.n_objects;
    num::SeededRng env_rng(num::derive_seed(ep.seed, 0));
    num::SeededRng enc_rng(num::derive_seed(ep.seed, 1));
    auto [start, goal] = pushworld::reset(env, options.n_objects, options.color_mode, env_rng);
    std::vector<std::size_t> order;
    if (options.random_order) {
      order.resize(options.n_objects);
      std::iota(order.begin(), order.end(), std::size_t{0});
      env_rng.shuffle(order);
    }
    pushworld::Expert expert(env, order);
    auto rollout =
        pushworld::rollout_expert(env, start, goal, expert, env.max_steps(options.n_objects));
    if (!rollout.metrics.success) {
      throw ExpertFailure("expert failed on episode " + std::to_string(i) + " (seed " +
                          std::to_string(ep.seed) + ", success fraction " +
                          std::to_string(rollout.metrics.success_fraction) + ")");
    }
    for (const auto& s : rollout.states) {
      ep.observations.push_back(
          entities::encode_observation(s, ds.views, ds.particles, enc_rng, true));
    }
    for (const auto& a : rollout.actions) ep.actions.push_back({a.x, a.y});
    ep.goal =
        entities::encode_observation(rollout.states.back(), ds.views, ds.particles, enc_rng, false);
    ds.episodes.push_back(std::move(ep));
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  num::BinaryWriter w(path);
  w.bytes(kDatasetMagic, sizeof(kDatasetMagic));
  w.u32(kDatasetVersion);
  w.u64(ds.particles);
  w.u64(ds.views);
  w.u64(ds.n_objects);
  w.u64(ds.min_length());
  w.u32(color_mode_code(ds.color_mode));
  w.u64(ds.seed);
  w.u64(ds.episodes.size());
  for (const auto& ep : ds.episodes) {
    w.u64(ep.length());
    w.u64(ep.seed);
    w.u64(ep.n_objects);
    for (const auto& obs : ep.observations) write_observation(w, obs);
    for (const auto& a : ep.actions) {
      for (double v : a) w.f64(v);
    }
    write_observation(w, ep.goal);
  }
  w.close();
}

Dataset load_dataset(const std::filesystem::path& path) {
  num::BinaryReader r(path);
  r.expect_magic(std::string(kDatasetMagic, sizeof(kDatasetMagic)));
  std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw num::FormatError("dataset " + path.string() + " has version " + std::to_string(version) +
                           ", expected " + std::to_string(kDatasetVersion));
  }
  Dataset ds;
  ds.particles = r.u64();
  ds.views = r.u64();
  ds.n_objects = r.u64();
  std::size_t min_length = r.u64();
  std::uint32_t mode = r.u32();
  if (mode > 1) throw num::FormatError("dataset has unknown color mode " + std::to_string(mode));
  ds.color_mode = mode ? pushworld::ColorMode::kRandom : pushworld::ColorMode::kFixedDistinct;
  ds.seed = r.u64();
  std::size_t count = r.u64();
  if (ds.views == 0 || ds.views > entities::kNumViews || ds.particles == 0) {
    throw num::FormatError("dataset header of " + path.string() + " is inconsistent");
  }
  for (std::size_t i = 0; i < count; ++i) {
    EpisodeRecord ep;
    std::size_t length = r.u64();
    ep.seed = r.u64();
    ep.n_objects = r.u64();
    for (std::size_t k = 0; k <= length; ++k) {
      ep.observations.push_back(read_observation(r, ds.views, ds.particles));
    }
    ep.actions.resize(length);
    for (auto& a : ep.actions) {
      for (double& v : a) v = r.f64();
    }
    ep.goal = read_observation(r, ds.views, ds.particles);
    ds.episodes.push_back(std::move(ep));
  }
  if (!r.at_end()) throw num::FormatError("trailing bytes in dataset " + path.string());
  if (ds.min_length() != min_length) {
    throw num::FormatError("dataset " + path.string() + " header disagrees with its episodes");
  }
  return ds;
}

entities::NormalizationStats fit_normalization(const Dataset& ds) {
  std::vector<double> particles, actions;
  for (const auto& ep : ds.episodes) {
    for (const auto& obs : ep.observations) {
      for (const auto& set : obs)
        particles.insert(particles.end(), set.data.begin(), set.data.end());
    }
    for (const auto& set : ep.goal)
      particles.insert(particles.end(), set.data.begin(), set.data.end());
    for (const auto& a : ep.actions) actions.insert(actions.end(), a.begin(), a.end());
  }
  return entities::NormalizationStats::fit(particles, actions);
}

Window extract_window(const Dataset& ds, std::size_t episode, std::size_t start,
                      std::size_t horizon, denoiser::Mode mode) {
  if (episode >= ds.episodes.size()) throw std::out_of_range("episode index out of range");
  const EpisodeRecord& ep = ds.episodes[episode];
  if (ep.length() == 0) throw std::invalid_argument("episode has no actions");
  if (start >= ep.length()) throw std::out_of_range("window start past the last action");
  if (horizon < 2) throw std::invalid_argument("horizon must be at least 2");

  const bool canonical = mode == denoiser::Mode::kUnstructured;
  const bool states = mode != denoiser::Mode::kActionOnly;
  const std::size_t steps = mode == denoiser::Mode::kNoDiffusion ? 1 : horizon - 1;

  Window w;
  w.episode = episode;
  w.start = start;
  if (states) {
    for (std::size_t k = 1; k <= steps; ++k) {
      std::size_t idx = std::min(start + k, ep.length());
      append_observation(ep.observations[idx], canonical, w.x0, w.x0_entity);
    }
  }
  for (std::size_t k = 1; k <= steps; ++k) {
    std::size_t idx = start + k - 1;
    Action a = idx < ep.length() ? ep.actions[idx] : Action{};
    w.x0.insert(w.x0.end(), a.begin(), a.end());
  }
  append_observation(ep.observations[start], canonical, w.cond, w.cond_entity);
  append_observation(ep.goal, canonical, w.cond, w.cond_entity);
  return w;
}

Window sample_window(const Dataset& ds, std::size_t horizon, denoiser::Mode mode,
                     num::SeededRng& rng) {
  if (ds.episodes.empty()) throw std::invalid_argument("dataset is empty");
  std::size_t episode = rng.index(ds.episodes.size());
  std::size_t start = rng.index(ds.episodes[episode].length());
  return extract_window(ds, episode, start, horizon, mode);
}

void normalize_window(const entities::NormalizationStats& stats,
                      const denoiser::WindowLayout& layout, Window& w) {
  if (w.x0.size() != layout.x_dim() || w.cond.size() != layout.cond_dim()) {
    throw std::invalid_argument("window does not match layout");
  }
  std::span<double> x(w.x0);
  stats.normalize_particles(x.first(layout.state_dim()));
  stats.normalize_actions(x.subspan(layout.state_dim()));
  stats.normalize_particles(w.cond);
}

}  // namespace ecdiff::pipeline
