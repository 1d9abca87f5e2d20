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

#include "ecdiff/denoiser/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ecdiff/numerics/binary_io.hpp"
#include "ecdiff/numerics/rng.hpp"

namespace ecdiff::denoiser {

namespace {

constexpr char kCheckpointMagic[] = "ECDCKPT";  // 8 bytes with the terminator
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr double kInitStd = 0.02;

using entities::kActionDim;
using entities::kParticleDim;

num::Tensor truncated_normal(num::SeededRng& rng, num::Shape shape, double std) {
  num::Tensor t(std::move(shape));
  for (double& x : t.data()) {
    double z;
    do {
      z = rng.normal();
    } while (std::abs(z) > 2.0);
    x = std * z;
  }
  return t;
}

}  // namespace

Mode parse_mode(const std::string& name) {
  if (name == "full") return Mode::kFull;
  if (name == "unstructured") return Mode::kUnstructured;
  if (name == "action_only") return Mode::kActionOnly;
  if (name == "no_diffusion") return Mode::kNoDiffusion;
  throw std::invalid_argument("unknown mode '" + name +
                              "' (want full, unstructured, action_only or no_diffusion)");
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::kFull:
      return "full";
    case Mode::kUnstructured:
      return "unstructured";
    case Mode::kActionOnly:
      return "action_only";
    case Mode::kNoDiffusion:
      return "no_diffusion";
  }
  return "full";
}

void DenoiserConfig::validate() const {
  if (hidden == 0 || heads == 0 || layers == 0 || views == 0 || particles == 0 || mlp_ratio == 0) {
    throw std::invalid_argument("denoiser config: sizes must be positive");
  }
  if (hidden % heads != 0) {
    throw std::invalid_argument("denoiser config: hidden " + std::to_string(hidden) +
                                " not divisible by heads " + std::to_string(heads));
  }
  if (hidden % 2 != 0) throw std::invalid_argument("denoiser config: hidden must be even");
  if (horizon < 2) throw std::invalid_argument("denoiser config: horizon must be >= 2");
}

std::size_t DenoiserConfig::steps() const { return mode == Mode::kNoDiffusion ? 1 : horizon - 1; }

std::vector<double> timestep_embedding(int t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> e(dim, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    e[2 * i] = std::sin(t * freq);
    e[2 * i + 1] = std::cos(t * freq);
  }
  return e;
}

Denoiser::Denoiser(const DenoiserConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  num::SeededRng rng(seed);
  const std::size_t h = config_.hidden;
  const std::size_t steps = config_.steps();
  const bool unstructured = config_.mode == Mode::kUnstructured;
  const std::size_t width = unstructured ? config_.particles * kParticleDim : kParticleDim;

  auto add = [&](const std::string& name, num::Tensor value) {
    params_.push_back({name, num::parameter(std::move(value))});
    return params_.back().var;
  };
  auto normal = [&](num::Shape s) { return truncated_normal(rng, std::move(s), kInitStd); };
  auto zeros = [](num::Shape s) { return num::Tensor(std::move(s)); };

  unit_w_ = add("embed.unit.w", normal({width, h}));
  unit_b_ = add("embed.unit.b", zeros({h}));
  action_w_ = add("embed.action.w", normal({kActionDim, h}));
  action_b_ = add("embed.action.b", zeros({h}));
  slot_embed_ = add("embed.slot", normal({steps + 2, h}));
  view_embed_ = add("embed.view", normal({config_.views, h}));
  action_type_embed_ = add("embed.action_type", normal({h}));
  null_action_ = add("adaln.null_action", normal({kActionDim}));

  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    Block b;
    b.ada_w1 = add(p + "adaln.w1", normal({h + kActionDim, h}));
    b.ada_b1 = add(p + "adaln.b1", zeros({h}));
    b.ada_w2 = add(p + "adaln.w2", zeros({h, 6 * h}));
    // Chunks are (shift1, scale1, gate1, shift2, scale2, gate2); scales
    // start at 1 so the zero gates still receive gradient.
    num::Tensor b2({6 * h});
    for (std::size_t i = 0; i < h; ++i) b2[h + i] = b2[4 * h + i] = 1.0;
    b.ada_b2 = add(p + "adaln.b2", std::move(b2));
    b.qkv_w = add(p + "attn.qkv.w", normal({h, 3 * h}));
    b.qkv_b = add(p + "attn.qkv.b", zeros({3 * h}));
    b.out_w = add(p + "attn.out.w", normal({h, h}));
    b.out_b = add(p + "attn.out.b", zeros({h}));
    b.fc1_w = add(p + "mlp.fc1.w", normal({h, config_.mlp_ratio * h}));
    b.fc1_b = add(p + "mlp.fc1.b", zeros({config_.mlp_ratio * h}));
    b.fc2_w = add(p + "mlp.fc2.w", normal({config_.mlp_ratio * h, h}));
    b.fc2_b = add(p + "mlp.fc2.b", zeros({h}));
    blocks_.push_back(b);
  }
  if (config_.mode != Mode::kActionOnly) {
    state_head_w_ = add("head.state.w", zeros({h, width}));
    state_head_b_ = add("head.state.b", zeros({width}));
  }
  action_head_w_ = add("head.action.w", zeros({h, kActionDim}));
  action_head_b_ = add("head.action.b", zeros({kActionDim}));
}

WindowLayout Denoiser::layout(std::size_t particles) const {
  WindowLayout l;
  l.steps = config_.steps();
  l.views = config_.views;
  l.particles = particles;
  l.has_states = config_.mode != Mode::kActionOnly;
  return l;
}

std::vector<TokenInfo> Denoiser::tokens(std::size_t particles) const {
  const WindowLayout l = layout(particles);
  const std::size_t units = config_.mode == Mode::kUnstructured ? 1 : particles;
  std::vector<TokenInfo> out;
  auto sets = [&](TokenInfo::Kind kind, std::size_t slot) {
    for (std::size_t v = 0; v < l.views; ++v) {
      for (std::size_t i = 0; i < units; ++i) out.push_back({kind, slot, v, i});
    }
  };
  sets(TokenInfo::Kind::kCurrent, 0);
  if (l.has_states) {
    for (std::size_t s = 1; s <= l.steps; ++s) sets(TokenInfo::Kind::kState, s);
  }
  sets(TokenInfo::Kind::kGoal, l.steps + 1);
  for (std::size_t s = 1; s <= l.steps; ++s) out.push_back({TokenInfo::Kind::kAction, s, 0, 0});
  return out;
}

void Denoiser::check_inputs(const num::Tensor& x_t, const num::Tensor& cond,
                            std::size_t particles) const {
  const WindowLayout l = layout(particles);
  if (config_.mode == Mode::kUnstructured && particles != config_.particles) {
    throw num::ShapeError("denoiser: unstructured model needs " +
                          std::to_string(config_.particles) + " particles per set, got " +
                          std::to_string(particles));
  }
  if (x_t.rank() != 2 || x_t.dim(1) != l.x_dim() || cond.rank() != 2 || cond.dim(0) != x_t.dim(0) ||
      cond.dim(1) != l.cond_dim()) {
    throw num::ShapeError("denoiser: x " + num::shape_str(x_t.shape()) + ", cond " +
                          num::shape_str(cond.shape()) + "; want x [B, " +
                          std::to_string(l.x_dim()) + "], cond [B, " +
                          std::to_string(l.cond_dim()) + "]");
  }
}

num::Var Denoiser::embed(const num::Tensor& x_t, const num::Tensor& cond,
                         std::size_t particles) const {
  check_inputs(x_t, cond, particles);
  const WindowLayout l = layout(particles);
  const bool unstructured = config_.mode == Mode::kUnstructured;
  const std::size_t batch = x_t.dim(0);
  const std::size_t h = config_.hidden;
  const std::size_t steps = l.steps;
  const std::size_t views = l.views;
  const std::size_t units_per_set = unstructured ? 1 : particles;
  const std::size_t width = unstructured ? l.set_size() : kParticleDim;
  const std::size_t n_sets = 2 * views + (l.has_states ? steps * views : 0);
  const std::size_t n_units = n_sets * units_per_set;
  const std::size_t n_tokens = n_units + steps;
  const std::size_t set_block = views * l.set_size();

  // Raw particle units in token order, and the noisy actions.
  num::Tensor units({batch * n_units, width});
  num::Tensor actions({batch * steps, kActionDim});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x_t.ptr() + b * l.x_dim();
    const double* cr = cond.ptr() + b * l.cond_dim();
    double* out = units.ptr() + b * n_units * width;
    out = std::copy_n(cr, set_block, out);
    out = std::copy_n(xr, l.state_dim(), out);
    std::copy_n(cr + set_block, set_block, out);
    std::copy_n(xr + l.state_dim(), l.action_dim(), actions.ptr() + b * l.action_dim());
  }

  std::vector<std::size_t> unit_slot, unit_view, action_slot;
  for (const TokenInfo& tok : tokens(particles)) {
    if (tok.kind == TokenInfo::Kind::kAction) {
      action_slot.push_back(tok.slot);
    } else {
      unit_slot.push_back(tok.slot);
      unit_view.push_back(tok.view);
    }
  }

  num::Var unit_tokens = num::reshape(
      num::linear(num::constant(std::move(units)), unit_w_, unit_b_), {batch, n_units, h});
  unit_tokens = num::add(unit_tokens, num::add(num::gather_rows(slot_embed_, unit_slot),
                                               num::gather_rows(view_embed_, unit_view)));
  num::Var action_tokens = num::reshape(
      num::linear(num::constant(std::move(actions)), action_w_, action_b_), {batch, steps, h});
  action_tokens = num::add(
      action_tokens, num::add(num::gather_rows(slot_embed_, action_slot), action_type_embed_));
  std::vector<num::Var> parts{unit_tokens, action_tokens};
  return num::reshape(num::concat(parts, 1), {batch * n_tokens, h});
}

num::Var Denoiser::predict(const num::Tensor& x_t, std::span<const int> t, const num::Tensor& cond,
                           std::size_t particles, AttentionCapture* capture) const {
  if (t.size() != x_t.dim(0)) {
    throw num::ShapeError("denoiser: " + std::to_string(t.size()) + " steps for " +
                          std::to_string(x_t.dim(0)) + " rows");
  }
  num::Var z = embed(x_t, cond, particles);
  const WindowLayout l = layout(particles);
  const bool unstructured = config_.mode == Mode::kUnstructured;
  const std::size_t batch = x_t.dim(0);
  const std::size_t h = config_.hidden;
  const std::size_t steps = l.steps;
  const std::size_t views = l.views;
  const std::size_t units_per_set = unstructured ? 1 : particles;
  const std::size_t n_sets = 2 * views + (l.has_states ? steps * views : 0);
  const std::size_t n_units = n_sets * units_per_set;
  const std::size_t n_tokens = n_units + steps;
  const std::size_t n_groups = steps + 2;

  std::vector<std::size_t> unit_slot, action_slot;
  for (const TokenInfo& tok : tokens(particles)) {
    (tok.kind == TokenInfo::Kind::kAction ? action_slot : unit_slot).push_back(tok.slot);
  }
  num::Tensor actions({batch * steps, kActionDim});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(x_t.ptr() + b * l.x_dim() + l.state_dim(), l.action_dim(),
                actions.ptr() + b * l.action_dim());
  }

  // AdaLN input per (row, timestep slot): cat[t embedding, action]. The
  // current and goal slots take the learned null action.
  std::vector<std::size_t> token_group(batch * n_tokens);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < n_units; ++k)
      token_group[b * n_tokens + k] = b * n_groups + unit_slot[k];
    for (std::size_t s = 0; s < steps; ++s) {
      token_group[b * n_tokens + n_units + s] = b * n_groups + action_slot[s];
    }
  }
  num::Tensor temb({batch * n_groups, h});
  std::vector<std::size_t> action_rows(batch * n_groups, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    auto e = timestep_embedding(t[b], h);
    for (std::size_t g = 0; g < n_groups; ++g) {
      std::copy(e.begin(), e.end(), temb.ptr() + (b * n_groups + g) * h);
      if (g >= 1 && g <= steps) action_rows[b * n_groups + g] = 1 + b * steps + (g - 1);
    }
  }
  std::vector<num::Var> action_table{num::reshape(null_action_, {1, kActionDim}),
                                     num::constant(std::move(actions))};
  std::vector<num::Var> cin_parts{num::constant(std::move(temb)),
                                  num::gather_rows(num::concat(action_table, 0), action_rows)};
  num::Var cin = num::concat(cin_parts, 1);

  for (const Block& blk : blocks_) {
    num::Var mod =
        num::linear(num::silu(num::linear(cin, blk.ada_w1, blk.ada_b1)), blk.ada_w2, blk.ada_b2);
    auto chunk = [&](std::size_t i) { return num::slice(mod, 1, i * h, (i + 1) * h); };

    num::Var a_in = num::grouped_affine(num::layer_norm(z), chunk(1), chunk(0), token_group);
    num::Var qkv = num::linear(a_in, blk.qkv_w, blk.qkv_b);
    num::AttentionProbs probs;
    num::Var att = num::self_attention(num::slice(qkv, 1, 0, h), num::slice(qkv, 1, h, 2 * h),
                                       num::slice(qkv, 1, 2 * h, 3 * h), batch, config_.heads,
                                       capture ? &probs : nullptr);
    if (capture) capture->layers.push_back(std::move(probs.probs));
    z = num::add(z,
                 num::grouped_scale(num::linear(att, blk.out_w, blk.out_b), chunk(2), token_group));

    num::Var m_in = num::grouped_affine(num::layer_norm(z), chunk(4), chunk(3), token_group);
    num::Var mlp =
        num::linear(num::gelu(num::linear(m_in, blk.fc1_w, blk.fc1_b)), blk.fc2_w, blk.fc2_b);
    z = num::add(z, num::grouped_scale(mlp, chunk(5), token_group));
  }

  num::Var zf = num::layer_norm(z);
  std::vector<std::size_t> action_idx;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < steps; ++s) action_idx.push_back(b * n_tokens + n_units + s);
  }
  num::Var action_out =
      num::reshape(num::linear(num::gather_rows(zf, action_idx), action_head_w_, action_head_b_),
                   {batch, l.action_dim()});
  if (!l.has_states) return action_out;

  std::vector<std::size_t> state_idx;
  const std::size_t first_state = views * units_per_set;
  const std::size_t n_state_units = steps * views * units_per_set;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < n_state_units; ++k)
      state_idx.push_back(b * n_tokens + first_state + k);
  }
  num::Var state_out =
      num::reshape(num::linear(num::gather_rows(zf, state_idx), state_head_w_, state_head_b_),
                   {batch, l.state_dim()});
  std::vector<num::Var> out_parts{state_out, action_out};
  return num::concat(out_parts, 1);
}

diffusion::NoiseModel Denoiser::noise_model(std::size_t particles) const {
  return [this, particles](const num::Tensor& x_t, std::span<const int> t,
                           const num::Tensor& cond) { return predict(x_t, t, cond, particles); };
}

std::vector<num::Var> Denoiser::parameter_vars() const {
  std::vector<num::Var> out;
  for (const auto& p : params_) out.push_back(p.var);
  return out;
}

num::Var& Denoiser::param(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.var;
  }
  throw std::invalid_argument("denoiser: no parameter named " + name);
}

std::size_t Denoiser::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.size();
  return n;
}

void save_checkpoint(const std::filesystem::path& path, const Denoiser& model,
                     const entities::NormalizationStats& stats, const std::string& metadata) {
  num::BinaryWriter w(path);
  w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  const DenoiserConfig& c = model.config();
  for (std::size_t v :
       {c.hidden, c.heads, c.layers, c.horizon, c.views, c.particles, c.mlp_ratio}) {
    w.u64(v);
  }
  w.str(to_string(c.mode));
  w.f64s(stats.particle_min());
  w.f64s(stats.particle_max());
  w.f64s(stats.action_min());
  w.f64s(stats.action_max());
  w.str(metadata);
  w.u64(model.parameters().size());
  for (const auto& p : model.parameters()) {
    w.str(p.name);
    w.u64(p.var.shape().size());
    for (std::size_t d : p.var.shape()) w.u64(d);
    w.f64s(p.var.value().data());
  }
  w.close();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  num::BinaryReader r(path);
  r.expect_magic(std::string(kCheckpointMagic, sizeof(kCheckpointMagic)));
  std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw num::FormatError("checkpoint " + path.string() + " has version " +
                           std::to_string(version) + ", expected " +
                           std::to_string(kCheckpointVersion));
  }
  DenoiserConfig c;
  for (std::size_t* v :
       {&c.hidden, &c.heads, &c.layers, &c.horizon, &c.views, &c.particles, &c.mlp_ratio}) {
    *v = r.u64();
  }
  c.mode = parse_mode(r.str());
  auto pmin = r.f64s(), pmax = r.f64s(), amin = r.f64s(), amax = r.f64s();
  entities::NormalizationStats stats(pmin, pmax, amin, amax);
  std::string metadata = r.str();
  Denoiser model(c, 0);
  const std::uint64_t n = r.u64();
  if (n != model.parameters().size()) {
    throw num::FormatError("checkpoint " + path.string() + ": parameter count mismatch");
  }
  for (auto& p : model.parameters()) {
    std::string name = r.str();
    num::Shape shape(r.u64());
    for (auto& d : shape) d = r.u64();
    if (name != p.name || shape != p.var.shape()) {
      throw num::FormatError("checkpoint " + path.string() + ": unexpected parameter " + name +
                             " " + num::shape_str(shape));
    }
    std::vector<double> data = r.f64s();
    if (data.size() != p.var.size()) {
      throw num::FormatError("checkpoint " + path.string() + ": bad size for " + name);
    }
    p.var.mutable_value() = num::Tensor(shape, std::move(data));
  }
  return {std::move(model), std::move(stats), std::move(metadata)};
}

}  // namespace ecdiff::denoiser
