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

// Entity-centric transformer noise predictor.
//
// Every particle of every (timestep, view) set is one token; action tokens
// join them, one per generated timestep. Tokens carry learned timestep-slot
// and view (or action-type) embeddings but nothing that depends on a
// particle's index inside its set, so the network is permutation
// equivariant within each set and runs on any set size.
//
// Window layout of one batch row:
//   x    = [states: step, view, particle, feature] [actions: step, dim]
//   cond = [current: view, particle, feature] [goal: view, particle, feature]
// Timestep slots are 0 for the current state, 1..steps for generated steps
// and steps + 1 for the goal.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ecdiff/diffusion/diffusion.hpp"
#include "ecdiff/entities/entities.hpp"
#include "ecdiff/numerics/autodiff.hpp"
#include "ecdiff/numerics/ops.hpp"

namespace ecdiff::denoiser {

enum class Mode {
  kFull,          // states and actions diffused, one token per particle
  kUnstructured,  // one token per (timestep, view) set, particles concatenated
  kActionOnly,    // only actions diffused; states appear as conditioning only
  kNoDiffusion,   // direct one-step prediction of next states and action
};

Mode parse_mode(const std::string& name);
std::string to_string(Mode mode);

struct DenoiserConfig {
  std::size_t hidden = 256;
  std::size_t heads = 8;
  std::size_t layers = 6;
  std::size_t horizon = 3;
  std::size_t views = entities::kNumViews;
  /// Particles per set. Only the unstructured mode's weights depend on it.
  std::size_t particles = 8;
  std::size_t mlp_ratio = 4;
  Mode mode = Mode::kFull;

  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;
  /// Timesteps generated per window: horizon - 1, or 1 without diffusion.
  std::size_t steps() const;
  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

struct WindowLayout {
  std::size_t steps = 2;
  std::size_t views = 2;
  std::size_t particles = 8;
  bool has_states = true;

  std::size_t set_size() const { return particles * entities::kParticleDim; }
  std::size_t state_dim() const { return has_states ? steps * views * set_size() : 0; }
  std::size_t action_dim() const { return steps * entities::kActionDim; }
  std::size_t x_dim() const { return state_dim() + action_dim(); }
  std::size_t cond_dim() const { return 2 * views * set_size(); }
};

struct TokenInfo {
  enum class Kind { kCurrent, kState, kGoal, kAction };
  Kind kind = Kind::kCurrent;
  std::size_t slot = 0;   // timestep slot
  std::size_t view = 0;   // unused for actions
  std::size_t index = 0;  // particle index in its set; 0 for set and action tokens
};

/// Attention probabilities of every layer, each [batch, heads, tokens, tokens].
struct AttentionCapture {
  std::vector<num::Tensor> layers;
};

struct NamedParam {
  std::string name;
  num::Var var;
};

class Denoiser {
 public:
  Denoiser(const DenoiserConfig& config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  WindowLayout layout(std::size_t particles) const;
  WindowLayout layout() const { return layout(config_.particles); }
  std::vector<TokenInfo> tokens(std::size_t particles) const;

  /// Noise prediction (or, without diffusion, the direct prediction) for a
  /// batch of windows with `particles` per set. x_t is [B, x_dim], t holds
  /// one step per row, cond is [B, cond_dim]. Returns [B, x_dim].
  num::Var predict(const num::Tensor& x_t, std::span<const int> t, const num::Tensor& cond,
                   std::size_t particles, AttentionCapture* capture = nullptr) const;
  diffusion::NoiseModel noise_model(std::size_t particles) const;
  /// Input tokens [B * tokens, hidden] before the first block, in the order
  /// of tokens(particles).
  num::Var embed(const num::Tensor& x_t, const num::Tensor& cond, std::size_t particles) const;

  std::vector<NamedParam>& parameters() { return params_; }
  const std::vector<NamedParam>& parameters() const { return params_; }
  std::vector<num::Var> parameter_vars() const;
  num::Var& param(const std::string& name);
  std::size_t parameter_count() const;

 private:
  struct Block {
    num::Var ada_w1, ada_b1, ada_w2, ada_b2;
    num::Var qkv_w, qkv_b, out_w, out_b;
    num::Var fc1_w, fc1_b, fc2_w, fc2_b;
  };

  void check_inputs(const num::Tensor& x_t, const num::Tensor& cond, std::size_t particles) const;

  DenoiserConfig config_;
  std::vector<NamedParam> params_;
  num::Var unit_w_, unit_b_, action_w_, action_b_;
  num::Var slot_embed_, view_embed_, action_type_embed_, null_action_;
  std::vector<Block> blocks_;
  num::Var state_head_w_, state_head_b_, action_head_w_, action_head_b_;
};

/// Sinusoidal embedding of step t, width `dim` (even): sin/cos pairs with
/// frequencies 10000^(-i / (dim / 2)).
std::vector<double> timestep_embedding(int t, std::size_t dim);

struct Checkpoint {
  Denoiser model;
  entities::NormalizationStats stats;
  /// Free-form text stored with the weights (the resolved run config).
  std::string metadata;
};

/// Binary, little-endian: magic "ECDCKPT\0", u32 version, config,
/// normalization stats, metadata, then every parameter in canonical order
/// as (name, rank, dims, f64 data).
void save_checkpoint(const std::filesystem::path& path, const Denoiser& model,
                     const entities::NormalizationStats& stats, const std::string& metadata);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ecdiff::denoiser
