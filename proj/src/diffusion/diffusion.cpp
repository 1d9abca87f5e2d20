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

#include "ecdiff/diffusion/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ecdiff/numerics/ops.hpp"

namespace ecdiff::diffusion {

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "cosine") return ScheduleKind::kCosine;
  if (name == "linear") return ScheduleKind::kLinear;
  throw std::invalid_argument("unknown schedule kind '" + name + "' (want cosine or linear)");
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kCosine ? "cosine" : "linear";
}

Schedule schedule_from_betas(std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("schedule: need at least one step");
  Schedule s;
  s.steps = static_cast<int>(betas.size());
  double prod = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("schedule: beta outside (0, 1)");
    s.alpha.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bar.push_back(prod);
  }
  s.sigma2 = betas;
  s.beta = std::move(betas);
  return s;
}

Schedule make_schedule(int steps, ScheduleKind kind) {
  if (steps < 1) throw std::invalid_argument("schedule: steps must be >= 1");
  std::vector<double> betas(steps);
  if (kind == ScheduleKind::kCosine) {
    constexpr double s = 0.008;
    auto f = [&](double t) {
      double c = std::cos((t / steps + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int t = 1; t <= steps; ++t) {
      betas[t - 1] = std::min(1.0 - f(t) / f(t - 1), kMaxBeta);
    }
  } else {
    const double scale = 1000.0 / steps;
    const double lo = std::min(1e-4 * scale, kMaxBeta);
    const double hi = std::min(0.02 * scale, kMaxBeta);
    for (int t = 1; t <= steps; ++t) {
      betas[t - 1] = steps == 1 ? hi : lo + (hi - lo) * (t - 1) / (steps - 1);
    }
  }
  return schedule_from_betas(std::move(betas));
}

namespace {

void check_step(int t, const Schedule& schedule) {
  if (t < 1 || t > schedule.steps) {
    throw std::invalid_argument("diffusion step " + std::to_string(t) + " outside [1, " +
                                std::to_string(schedule.steps) + "]");
  }
}

}  // namespace

std::vector<double> forward_sample(std::span<const double> x0, int t, std::span<const double> eps,
                                   const Schedule& schedule) {
  check_step(t, schedule);
  if (x0.size() != eps.size()) throw num::ShapeError("forward_sample: eps shape differs from x0");
  const double a = std::sqrt(schedule.alpha_bar_at(t));
  const double b = std::sqrt(1.0 - schedule.alpha_bar_at(t));
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

std::vector<double> forward_step(std::span<const double> x_prev, int t, std::span<const double> z,
                                 const Schedule& schedule) {
  check_step(t, schedule);
  if (x_prev.size() != z.size()) throw num::ShapeError("forward_step: noise shape differs");
  const double a = std::sqrt(schedule.alpha_at(t));
  const double b = std::sqrt(schedule.beta_at(t));
  std::vector<double> out(x_prev.size());
  for (std::size_t i = 0; i < x_prev.size(); ++i) out[i] = a * x_prev[i] + b * z[i];
  return out;
}

num::Var training_loss(const NoiseModel& model, const num::Tensor& x0, const num::Tensor& cond,
                       std::span<const int> t, const num::Tensor& eps, const Schedule& schedule,
                       std::span<const double> weights) {
  if (x0.rank() != 2 || eps.shape() != x0.shape() || t.size() != x0.dim(0)) {
    throw num::ShapeError("training_loss: x0 " + num::shape_str(x0.shape()) + ", eps " +
                          num::shape_str(eps.shape()) + ", " + std::to_string(t.size()) + " steps");
  }
  const std::size_t dim = x0.dim(1);
  num::Tensor x_t(x0.shape());
  for (std::size_t b = 0; b < x0.dim(0); ++b) {
    auto row = forward_sample(x0.data().subspan(b * dim, dim), t[b],
                              eps.data().subspan(b * dim, dim), schedule);
    std::copy(row.begin(), row.end(), x_t.ptr() + b * dim);
  }
  num::Var prediction = model(x_t, t, cond);
  num::Var loss;
  if (weights.empty()) {
    loss = num::l1_loss(prediction, num::constant(eps));
  } else {
    if (weights.size() != dim) {
      throw num::ShapeError("training_loss: " + std::to_string(weights.size()) + " weights for " +
                            std::to_string(dim) + " columns");
    }
    double total = 0.0;
    for (double w : weights) {
      if (!(w > 0.0) || !std::isfinite(w)) {
        throw std::invalid_argument("training_loss: weights must be positive and finite");
      }
      total += w;
    }
    num::Tensor w({dim}, std::vector<double>(weights.begin(), weights.end()));
    num::Var err = num::abs(num::sub(prediction, num::constant(eps)));
    loss = num::scale(num::sum(num::mul(err, num::constant(w))),
                      1.0 / (static_cast<double>(x0.dim(0)) * total));
  }
  if (!std::isfinite(loss.item())) throw num::NumericError("training_loss: non-finite loss");
  return loss;
}

num::Var training_loss(const NoiseModel& model, const num::Tensor& x0, const num::Tensor& cond,
                       const Schedule& schedule, num::SeededRng& rng,
                       std::span<const double> weights) {
  if (x0.rank() != 2) throw num::ShapeError("training_loss: x0 must be [batch, dim]");
  std::vector<int> t(x0.dim(0));
  for (int& s : t) s = 1 + static_cast<int>(rng.index(schedule.steps));
  num::Tensor eps(x0.shape());
  rng.fill_normal(eps.data());
  return training_loss(model, x0, cond, t, eps, schedule, weights);
}

num::Tensor sample(const NoiseModel& model, const num::Tensor& cond, std::size_t dim,
                   const Schedule& schedule, std::span<num::SeededRng* const> rngs) {
  const std::size_t batch = rngs.size();
  if (cond.rank() != 2 || cond.dim(0) != batch) {
    throw num::ShapeError("sample: cond " + num::shape_str(cond.shape()) + " for batch " +
                          std::to_string(batch));
  }
  num::Tensor x({batch, dim});
  for (std::size_t b = 0; b < batch; ++b) rngs[b]->fill_normal(x.data().subspan(b * dim, dim));
  std::vector<int> steps(batch);
  for (int t = schedule.steps; t >= 1; --t) {
    std::fill(steps.begin(), steps.end(), t);
    num::Tensor eps = model(x, steps, cond).value();
    if (eps.shape() != x.shape()) throw num::ShapeError("sample: model output shape differs");
    const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha_at(t));
    const double coef = schedule.beta_at(t) / std::sqrt(1.0 - schedule.alpha_bar_at(t));
    const double sigma = std::sqrt(schedule.sigma2_at(t));
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = b * dim; i < (b + 1) * dim; ++i) {
        x[i] = inv_sqrt_alpha * (x[i] - coef * eps[i]);
        if (t > 1) x[i] += sigma * rngs[b]->normal();
      }
    }
    if (!x.all_finite())
      throw num::NumericError("sample: non-finite intermediate at step " + std::to_string(t));
  }
  for (double& v : x.data()) v = std::clamp(v, -1.0, 1.0);
  return x;
}

num::Tensor sample(const NoiseModel& model, const num::Tensor& cond, std::size_t dim,
                   const Schedule& schedule, num::SeededRng& rng) {
  std::vector<num::SeededRng*> rngs(cond.rank() == 2 ? cond.dim(0) : 0, &rng);
  return sample(model, cond, dim, schedule, rngs);
}

}  // namespace ecdiff::diffusion
