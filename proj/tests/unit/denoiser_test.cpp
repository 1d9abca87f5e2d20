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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "ecdiff/diffusion/diffusion.hpp"
#include "ecdiff/numerics/binary_io.hpp"
#include "ecdiff/numerics/gradcheck.hpp"

namespace ecdiff::denoiser {
namespace {

using entities::kActionDim;
using entities::kParticleDim;

DenoiserConfig small_config(Mode mode = Mode::kFull) {
  DenoiserConfig c;
  c.hidden = 16;
  c.heads = 4;
  c.layers = 2;
  c.horizon = 3;
  c.views = 2;
  c.particles = 4;
  c.mode = mode;
  return c;
}

// Replaces every weight, including the zero-initialized heads and AdaLN
// output layer, with random values so no path is trivially zero.
void randomize(Denoiser& model, num::SeededRng& rng, double scale = 0.3) {
  for (auto& p : model.parameters()) {
    for (double& x : p.var.mutable_value().data()) x = rng.uniform(-scale, scale);
  }
}

num::Tensor random_rows(num::SeededRng& rng, std::size_t rows, std::size_t cols) {
  num::Tensor t({rows, cols});
  for (double& x : t.data()) x = rng.uniform(-1.0, 1.0);
  return t;
}

// Swaps particles i and j of set `set` (in units of kParticleDim rows) of
// a flat window row.
void swap_particles(double* row, std::size_t set_offset, std::size_t i, std::size_t j) {
  std::swap_ranges(row + set_offset + i * kParticleDim, row + set_offset + (i + 1) * kParticleDim,
                   row + set_offset + j * kParticleDim);
}

TEST(Config, ValidatesShapes) {
  DenoiserConfig c = small_config();
  c.heads = 3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small_config();
  c.horizon = 1;
  EXPECT_THROW(Denoiser(c, 0), std::invalid_argument);
  EXPECT_EQ(parse_mode("action_only"), Mode::kActionOnly);
  EXPECT_THROW(parse_mode("diffusion"), std::invalid_argument);
  DenoiserConfig defaults;
  EXPECT_EQ(defaults.hidden, 256u);
  EXPECT_EQ(defaults.heads, 8u);
  EXPECT_EQ(defaults.layers, 6u);
  EXPECT_EQ(defaults.horizon, 3u);
}

TEST(Layout, Dimensions) {
  Denoiser full(small_config(), 1);
  WindowLayout l = full.layout(4);
  EXPECT_EQ(l.x_dim(), 2 * 2 * 4 * kParticleDim + 2 * kActionDim);
  EXPECT_EQ(l.cond_dim(), 2 * 2 * 4 * kParticleDim);
  EXPECT_EQ(full.tokens(4).size(), 4 * 2 * 4 + 2u);
  Denoiser actions(small_config(Mode::kActionOnly), 1);
  EXPECT_EQ(actions.layout(4).x_dim(), 2 * kActionDim);
  EXPECT_EQ(actions.tokens(4).size(), 2 * 2 * 4 + 2u);
  Denoiser flat(small_config(Mode::kUnstructured), 1);
  EXPECT_EQ(flat.tokens(4).size(), 4 * 2 + 2u);
  Denoiser direct(small_config(Mode::kNoDiffusion), 1);
  EXPECT_EQ(direct.layout(4).steps, 1u);
}

TEST(Embed, SwappedParticlesSwapTokenRows) {
  num::SeededRng rng(1);
  Denoiser model(small_config(), 2);
  randomize(model, rng);
  WindowLayout l = model.layout(4);
  num::Tensor x = random_rows(rng, 1, l.x_dim());
  num::Tensor c = random_rows(rng, 1, l.cond_dim());
  num::Tensor base = model.embed(x, c, 4).value();
  num::Tensor xs = x;
  // First state set (step 1, view 0): particles 0 and 2. In token order the
  // state sets follow the 2 * 4 current-state tokens.
  swap_particles(xs.ptr(), 0, 0, 2);
  num::Tensor swapped = model.embed(xs, c, 4).value();
  const std::size_t h = 16, first = 8;
  for (std::size_t k = 0; k < base.dim(0); ++k) {
    std::size_t src = k == first ? first + 2 : (k == first + 2 ? first : k);
    for (std::size_t j = 0; j < h; ++j) EXPECT_EQ(swapped.at(k, j), base.at(src, j));
  }
}

TEST(Embed, SameParticleAtDifferentStepsDiffersBySlotEmbedding) {
  num::SeededRng rng(2);
  Denoiser model(small_config(), 3);
  randomize(model, rng);
  WindowLayout l = model.layout(4);
  num::Tensor x = random_rows(rng, 1, l.x_dim());
  num::Tensor c = random_rows(rng, 1, l.cond_dim());
  // Copy particle 1 of (step 1, view 0) into particle 1 of (step 2, view 0).
  const std::size_t set = 4 * kParticleDim;
  std::copy_n(x.ptr() + kParticleDim, kParticleDim, x.ptr() + 2 * set + kParticleDim);
  num::Tensor tokens = model.embed(x, c, 4).value();
  const num::Tensor& slots = model.param("embed.slot").value();
  const std::size_t a = 8 + 1, b = 8 + 8 + 1;
  for (std::size_t j = 0; j < 16; ++j) {
    EXPECT_NEAR(tokens.at(b, j) - tokens.at(a, j), slots.at(2, j) - slots.at(1, j), 1e-15);
  }
}

TEST(Embed, ZeroInputsAndEmbeddingsGiveZeroTokens) {
  Denoiser model(small_config(), 4);
  for (auto& p : model.parameters()) {
    if (p.name.rfind("embed.", 0) == 0) {
      std::fill(p.var.mutable_value().data().begin(), p.var.mutable_value().data().end(), 0.0);
    }
  }
  WindowLayout l = model.layout(4);
  num::Tensor tokens =
      model.embed(num::Tensor({1, l.x_dim()}), num::Tensor({1, l.cond_dim()}), 4).value();
  EXPECT_TRUE(
      std::all_of(tokens.data().begin(), tokens.data().end(), [](double v) { return v == 0.0; }));
}

TEST(Predict, FreshModelPredictsZero) {
  num::SeededRng rng(5);
  for (Mode mode : {Mode::kFull, Mode::kUnstructured, Mode::kActionOnly, Mode::kNoDiffusion}) {
    Denoiser model(small_config(mode), 5);
    WindowLayout l = model.layout(4);
    std::vector<int> t{1, 2};
    num::Var out =
        model.predict(random_rows(rng, 2, l.x_dim()), t, random_rows(rng, 2, l.cond_dim()), 4);
    ASSERT_EQ(out.shape(), (num::Shape{2, l.x_dim()}));
    EXPECT_TRUE(std::all_of(out.value().data().begin(), out.value().data().end(),
                            [](double v) { return v == 0.0; }));
  }
}

TEST(Predict, PermutationEquivariance) {
  num::SeededRng rng(6);
  Denoiser model(small_config(), 6);
  randomize(model, rng);
  const std::size_t m = 4;
  WindowLayout l = model.layout(m);
  const std::size_t set = m * kParticleDim;
  const std::size_t x_sets = l.steps * l.views, c_sets = 2 * l.views;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    num::Tensor x = random_rows(rng, 1, l.x_dim());
    num::Tensor c = random_rows(rng, 1, l.cond_dim());
    std::vector<int> t{1 + static_cast<int>(rng.index(5))};
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    // Permute one random set, either a generated one or a condition set.
    std::size_t which = rng.index(x_sets + c_sets);
    bool in_x = which < x_sets;
    double* base = in_x ? x.ptr() + which * set : c.ptr() + (which - x_sets) * set;
    num::Tensor xp = x, cp = c;
    double* pbase = in_x ? xp.ptr() + which * set : cp.ptr() + (which - x_sets) * set;
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(base + perm[i] * kParticleDim, kParticleDim, pbase + i * kParticleDim);
    }
    num::Tensor out = model.predict(x, t, c, m).value();
    num::Tensor out_p = model.predict(xp, t, cp, m).value();
    num::Tensor expected = out;
    if (in_x) {
      for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(out.ptr() + which * set + perm[i] * kParticleDim, kParticleDim,
                    expected.ptr() + which * set + i * kParticleDim);
      }
    }
    worst = std::max(worst, num::max_abs_diff(out_p, expected));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Predict, RunsForAnySetSize) {
  num::SeededRng rng(7);
  Denoiser model(small_config(), 7);
  randomize(model, rng);
  for (std::size_t m : {1u, 3u, 8u, 16u}) {
    WindowLayout l = model.layout(m);
    std::vector<int> t{3};
    num::Var out =
        model.predict(random_rows(rng, 1, l.x_dim()), t, random_rows(rng, 1, l.cond_dim()), m);
    EXPECT_EQ(out.shape(), (num::Shape{1, l.x_dim()}));
    EXPECT_TRUE(out.value().all_finite());
  }
  Denoiser flat(small_config(Mode::kUnstructured), 7);
  WindowLayout l = flat.layout(3);
  std::vector<int> t{1};
  EXPECT_THROW(flat.predict(num::Tensor({1, l.x_dim()}), t, num::Tensor({1, l.cond_dim()}), 3),
               num::ShapeError);
}

TEST(Predict, ZeroAdaLNOutputMakesBlocksIdentity) {
  num::SeededRng rng(8);
  Denoiser model(small_config(), 8);
  randomize(model, rng);
  for (auto& p : model.parameters()) {
    if (p.name.find("adaln.w2") != std::string::npos ||
        p.name.find("adaln.b2") != std::string::npos) {
      std::fill(p.var.mutable_value().data().begin(), p.var.mutable_value().data().end(), 0.0);
    }
  }
  WindowLayout l = model.layout(4);
  num::Tensor x = random_rows(rng, 2, l.x_dim());
  num::Tensor c = random_rows(rng, 2, l.cond_dim());
  std::vector<int> t{2, 4};
  num::Tensor out = model.predict(x, t, c, 4).value();

  // With identity blocks the output is the heads applied to LN(embedding).
  num::Tensor tokens = num::layer_norm(model.embed(x, c, 4)).value();
  auto info = model.tokens(4);
  const num::Tensor& ws = model.param("head.state.w").value();
  const num::Tensor& bs = model.param("head.state.b").value();
  const num::Tensor& wa = model.param("head.action.w").value();
  const num::Tensor& ba = model.param("head.action.b").value();
  double worst = 0.0;
  for (std::size_t b = 0; b < 2; ++b) {
    std::size_t state_col = 0, action_col = l.state_dim();
    for (std::size_t k = 0; k < info.size(); ++k) {
      const bool is_state = info[k].kind == TokenInfo::Kind::kState;
      const bool is_action = info[k].kind == TokenInfo::Kind::kAction;
      if (!is_state && !is_action) continue;
      const num::Tensor& w = is_state ? ws : wa;
      const num::Tensor& bias = is_state ? bs : ba;
      std::size_t& col = is_state ? state_col : action_col;
      for (std::size_t j = 0; j < w.dim(1); ++j) {
        double v = bias[j];
        for (std::size_t i = 0; i < 16; ++i) v += tokens.at(b * info.size() + k, i) * w.at(i, j);
        worst = std::max(worst, std::abs(v - out.at(b, col++)));
      }
    }
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Predict, AttentionCapture) {
  num::SeededRng rng(9);
  Denoiser model(small_config(), 9);
  randomize(model, rng);
  WindowLayout l = model.layout(4);
  std::vector<int> t{1, 5};
  AttentionCapture cap;
  model.predict(random_rows(rng, 2, l.x_dim()), t, random_rows(rng, 2, l.cond_dim()), 4, &cap);
  ASSERT_EQ(cap.layers.size(), 2u);
  const std::size_t s = model.tokens(4).size();
  EXPECT_EQ(cap.layers[0].shape(), (num::Shape{2, 4, s, s}));
  for (std::size_t r = 0; r < 2 * 4 * s; ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < s; ++j) total += cap.layers[1][r * s + j];
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Gradient, TrainingLossPassesFiniteDifferences) {
  num::SeededRng rng(10);
  DenoiserConfig c;
  c.hidden = 8;
  c.heads = 2;
  c.layers = 2;
  c.horizon = 3;
  c.views = 1;
  c.particles = 2;
  Denoiser model(c, 10);
  randomize(model, rng, 0.5);
  WindowLayout l = model.layout(2);
  auto schedule = diffusion::make_schedule(5, diffusion::ScheduleKind::kCosine);
  num::Tensor x0 = random_rows(rng, 1, l.x_dim());
  num::Tensor cond = random_rows(rng, 1, l.cond_dim());
  num::Tensor eps({1, l.x_dim()});
  rng.fill_normal(eps.data());
  std::vector<int> t{3};
  auto params = model.parameter_vars();
  auto report = num::finite_diff_check(
      [&] { return diffusion::training_loss(model.noise_model(2), x0, cond, t, eps, schedule); },
      params);
  EXPECT_LT(report.max_rel_error, 1e-4);
  EXPECT_GT(report.n_checked, 1000u);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  num::SeededRng rng(11);
  for (Mode mode : {Mode::kFull, Mode::kUnstructured}) {
    Denoiser model(small_config(mode), 11);
    randomize(model, rng);
    std::vector<double> pmin(kParticleDim, -0.5), pmax(kParticleDim, 0.75);
    entities::NormalizationStats stats(pmin, pmax, {-0.04, -0.04}, {0.04, 0.04});
    auto path = std::filesystem::temp_directory_path() / "ecdiff_ckpt_test.bin";
    save_checkpoint(path, model, stats, "note = 1\n");
    Checkpoint loaded = load_checkpoint(path);
    EXPECT_EQ(loaded.model.config(), model.config());
    EXPECT_EQ(loaded.stats, stats);
    EXPECT_EQ(loaded.metadata, "note = 1\n");
    WindowLayout l = model.layout(4);
    num::Tensor x = random_rows(rng, 3, l.x_dim());
    num::Tensor c = random_rows(rng, 3, l.cond_dim());
    std::vector<int> t{1, 2, 3};
    EXPECT_EQ(loaded.model.predict(x, t, c, 4).value(), model.predict(x, t, c, 4).value());
    std::filesystem::remove(path);
  }
}

TEST(Checkpoint, RejectsForeignFiles) {
  auto path = std::filesystem::temp_directory_path() / "ecdiff_not_ckpt.bin";
  {
    num::BinaryWriter w(path);
    w.str("hello");
    w.close();
  }
  EXPECT_THROW(load_checkpoint(path), num::FormatError);
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
}

}  // namespace
}  // namespace ecdiff::denoiser
