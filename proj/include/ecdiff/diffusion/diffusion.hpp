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

// DDPM noise schedules, the closed-form forward process, the l1
// noise-prediction loss and ancestral sampling.
//
// Diffused windows are flat rows: x is [batch, dim]. Conditioning travels
// beside x as its own clean tensor and is handed to the model unchanged on
// every call, so it is never noised and never enters the loss.

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ecdiff/numerics/autodiff.hpp"
#include "ecdiff/numerics/rng.hpp"

namespace ecdiff::diffusion {

enum class ScheduleKind { kCosine, kLinear };

ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

/// Tables indexed by step t in [1, T] via the accessors; the vectors hold
/// entry t at position t - 1.
struct Schedule {
  int steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma2;

  double beta_at(int t) const { return beta[t - 1]; }
  double alpha_at(int t) const { return alpha[t - 1]; }
  double alpha_bar_at(int t) const { return alpha_bar[t - 1]; }
  double sigma2_at(int t) const { return sigma2[t - 1]; }
};

inline constexpr double kMaxBeta = 0.999;

/// Cosine: alpha_bar(t) = f(t)/f(0), f(t) = cos^2(((t/T) + s)/(1 + s) * pi/2)
/// with s = 0.008, converted to betas clipped at kMaxBeta.
/// Linear: betas evenly spaced over [1e-4, 0.02] * (1000 / T), clipped; T = 1
/// takes the upper end.
Schedule make_schedule(int steps, ScheduleKind kind);
/// Schedule from explicit betas, each in (0, 1).
Schedule schedule_from_betas(std::vector<double> betas);

/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
std::vector<double> forward_sample(std::span<const double> x0, int t, std::span<const double> eps,
                                   const Schedule& schedule);
/// One Markov step q(x_t | x_{t-1}): sqrt(alpha_t) * x + sqrt(beta_t) * z.
std::vector<double> forward_step(std::span<const double> x_prev, int t, std::span<const double> z,
                                 const Schedule& schedule);

/// eps_theta(x_t, t, cond). x_t is [batch, dim], t holds one step per row,
/// cond is [batch, cond_dim]. Returns the predicted noise, shaped like x_t.
using NoiseModel = std::function<num::Var(const num::Tensor& x_t, std::span<const int> t,
                                          const num::Tensor& cond)>;

/// mean |eps - eps_theta(x_t, t, cond)| over every entry of x, for given
/// steps and noise. Differentiable through the model's parameters.
///
/// Non-empty `weights` (one positive value per column of x) turn the mean
/// into a weighted mean, sum(w * |e|) / (batch * sum(w)); its value for a
/// zero predictor still has expectation E|N(0, 1)|.
num::Var training_loss(const NoiseModel& model, const num::Tensor& x0, const num::Tensor& cond,
                       std::span<const int> t, const num::Tensor& eps, const Schedule& schedule,
                       std::span<const double> weights = {});
/// Draws t uniformly from {1..T} per row and eps ~ N(0, I), then as above.
num::Var training_loss(const NoiseModel& model, const num::Tensor& x0, const num::Tensor& cond,
                       const Schedule& schedule, num::SeededRng& rng,
                       std::span<const double> weights = {});

/// Ancestral sampling from x_T ~ N(0, I); row b draws all of its noise from
/// rngs[b], so rows are reproducible regardless of how they are batched.
/// z = 0 on the final step; output clamped to [-1, 1].
num::Tensor sample(const NoiseModel& model, const num::Tensor& cond, std::size_t dim,
                   const Schedule& schedule, std::span<num::SeededRng* const> rngs);
num::Tensor sample(const NoiseModel& model, const num::Tensor& cond, std::size_t dim,
                   const Schedule& schedule, num::SeededRng& rng);

}  // namespace ecdiff::diffusion
