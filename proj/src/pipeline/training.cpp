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

#include "ecdiff/pipeline/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numbers>

#include "ecdiff/numerics/adam.hpp"
#include "ecdiff/numerics/binary_io.hpp"
#include "ecdiff/numerics/ops.hpp"

namespace ecdiff::pipeline {

namespace {

using entities::kParticleDim;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

LrSchedule parse_lr_schedule(const std::string& name) {
  if (name == "constant") return LrSchedule::kConstant;
  if (name == "cosine") return LrSchedule::kCosine;
  throw std::invalid_argument("unknown lr schedule '" + name + "' (expected constant or cosine)");
}

std::string lr_schedule_name(LrSchedule schedule) {
  return schedule == LrSchedule::kCosine ? "cosine" : "constant";
}

double TrainConfig::lr_at(std::size_t step, std::size_t total) const {
  if (lr_schedule == LrSchedule::kConstant || total == 0) return lr;
  const double progress = static_cast<double>(step) / static_cast<double>(total);
  return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train.batch_size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train.lr must be positive");
  if (diffusion_steps < 1) throw std::invalid_argument("diffusion.steps must be at least 1");
  if (epochs == 0) throw std::invalid_argument("train.epochs must be positive");
  if (!(action_weight > 0.0) || !std::isfinite(action_weight)) {
    throw std::invalid_argument("train.action_weight must be positive");
  }
  model_config(1, 1).validate();
}

denoiser::DenoiserConfig TrainConfig::model_config(std::size_t particles, std::size_t views) const {
  denoiser::DenoiserConfig c;
  c.hidden = hidden;
  c.heads = heads;
  c.layers = layers;
  c.horizon = horizon;
  c.views = views;
  c.particles = particles;
  c.mlp_ratio = mlp_ratio;
  c.mode = mode;
  return c;
}

std::string PolicyInfo::to_metadata() const {
  nlohmann::json j;
  j["format"] = "ecdiff-policy";
  j["diffusion_steps"] = diffusion_steps;
  j["schedule"] = diffusion::to_string(schedule);
  j["config"] = config_text;
  return j.dump(2);
}

PolicyInfo PolicyInfo::from_metadata(const std::string& metadata) {
  try {
    auto j = nlohmann::json::parse(metadata);
    if (j.at("format").get<std::string>() != "ecdiff-policy") {
      throw num::FormatError("checkpoint metadata is not a policy description");
    }
    PolicyInfo info;
    info.diffusion_steps = j.at("diffusion_steps").get<int>();
    info.schedule = diffusion::parse_schedule_kind(j.at("schedule").get<std::string>());
    info.config_text = j.at("config").get<std::string>();
    return info;
  } catch (const nlohmann::json::exception& e) {
    throw num::FormatError(std::string("checkpoint metadata: ") + e.what());
  }
}

Batch sample_batch(const Dataset& dataset, const entities::NormalizationStats& stats,
                   const denoiser::Denoiser& model, std::size_t batch_size, num::SeededRng& rng) {
  const auto layout = model.layout(dataset.particles);
  if (layout.views != dataset.views) throw std::invalid_argument("model and dataset views differ");
  Batch batch{num::Tensor({batch_size, layout.x_dim()}),
              num::Tensor({batch_size, layout.cond_dim()})};
  for (std::size_t b = 0; b < batch_size; ++b) {
    Window w = sample_window(dataset, model.config().horizon, model.config().mode, rng);
    normalize_window(stats, layout, w);
    std::copy(w.x0.begin(), w.x0.end(), batch.x0.ptr() + b * layout.x_dim());
    std::copy(w.cond.begin(), w.cond.end(), batch.cond.ptr() + b * layout.cond_dim());
  }
  return batch;
}

num::Tensor direct_query(const num::Tensor& cond, const denoiser::WindowLayout& layout) {
  const std::size_t batch = cond.dim(0);
  const std::size_t current = layout.views * layout.set_size();
  num::Tensor query({batch, layout.x_dim()});
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = cond.ptr() + b * layout.cond_dim();
    double* dst = query.ptr() + b * layout.x_dim();
    for (std::size_t k = 0; k < layout.steps; ++k) std::copy(src, src + current, dst + k * current);
  }
  return query;
}

num::Var batch_loss(const denoiser::Denoiser& model, const diffusion::Schedule& schedule,
                    const Batch& batch, num::SeededRng& rng, double action_weight) {
  const auto& cfg = model.config();
  const std::size_t particles = batch.cond.dim(1) / (2 * cfg.views * kParticleDim);
  const auto layout = model.layout(particles);
  if (cfg.mode != denoiser::Mode::kNoDiffusion) {
    std::vector<double> weights;
    if (action_weight != 1.0) {
      weights.assign(layout.x_dim(), 1.0);
      std::fill(weights.begin() + layout.state_dim(), weights.end(), action_weight);
    }
    return diffusion::training_loss(model.noise_model(particles), batch.x0, batch.cond, schedule,
                                    rng, weights);
  }
  const std::size_t batch_size = batch.x0.dim(0);
  std::vector<int> t(batch_size, 1);
  num::Var pred = model.predict(direct_query(batch.cond, layout), t, batch.cond, particles);

  const std::size_t sd = layout.state_dim(), ad = layout.action_dim();
  num::Tensor state_target({batch_size * sd / kParticleDim, kParticleDim});
  num::Tensor action_target({batch_size, ad});
  for (std::size_t b = 0; b < batch_size; ++b) {
    const double* row = batch.x0.ptr() + b * layout.x_dim();
    std::copy(row, row + sd, state_target.ptr() + b * sd);
    std::copy(row + sd, row + sd + ad, action_target.ptr() + b * ad);
  }
  num::Var states =
      num::reshape(num::slice(pred, 1, 0, sd), {batch_size * sd / kParticleDim, kParticleDim});
  num::Var actions = num::slice(pred, 1, sd, sd + ad);
  num::Var chamfer = entities::chamfer_l1_loss(states, state_target, particles);
  num::Var l1 = num::scale(num::l1_loss(actions, num::constant(action_target)),
                           action_weight * static_cast<double>(batch_size * ad));
  const double entries =
      static_cast<double>(batch_size) * (static_cast<double>(sd) + action_weight * ad);
  num::Var loss = num::scale(num::add(chamfer, l1), 1.0 / entries);
  if (!std::isfinite(loss.item())) throw num::NumericError("batch_loss: non-finite loss");
  return loss;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config,
                  const std::filesystem::path& run_dir, const std::string& config_text,
                  const std::function<void(const EpochReport&)>& on_epoch) {
  config.validate();
  if (dataset.episodes.empty()) throw std::invalid_argument("cannot train on an empty dataset");
  const auto stats = fit_normalization(dataset);
  denoiser::Denoiser model(config.model_config(dataset.particles, dataset.views),
                           num::derive_seed(config.seed, 0));
  const auto schedule = diffusion::make_schedule(config.diffusion_steps, config.schedule);
  num::SeededRng batch_rng(num::derive_seed(config.seed, 1));
  num::SeededRng noise_rng(num::derive_seed(config.seed, 2));
  num::Adam adam(model.parameter_vars(), num::AdamOptions{.lr = config.lr});

  PolicyInfo info{config.diffusion_steps, config.schedule, config_text};
  const std::string metadata = info.to_metadata();
  std::filesystem::create_directories(run_dir / "checkpoints");
  TrainResult result;
  result.last_checkpoint = run_dir / "checkpoints" / "last.ckpt";
  result.best_checkpoint = run_dir / "checkpoints" / "best.ckpt";
  std::ofstream csv(run_dir / "loss.csv");
  if (!csv) throw std::runtime_error("cannot write " + (run_dir / "loss.csv").string());
  csv << "epoch,mean_loss\n";

  const std::size_t steps =
      config.steps_per_epoch ? config.steps_per_epoch
                             : (dataset.transitions() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = steps * config.epochs;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    auto started = std::chrono::steady_clock::now();
    double total = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      Batch batch = sample_batch(dataset, stats, model, config.batch_size, batch_rng);
      adam.zero_grad();
      num::Var loss;
      try {
        loss = batch_loss(model, schedule, batch, noise_rng, config.action_weight);
        num::backward(loss);
      } catch (const num::NumericError& e) {
        throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(s + 1) + ": " + e.what());
      }
      adam.set_lr(config.lr_at((epoch - 1) * steps + s, total_steps));
      adam.step();
      total += loss.item();
    }
    const double mean_loss = total / static_cast<double>(steps);
    result.epoch_loss.push_back(mean_loss);
    csv << epoch << ',' << format_double(mean_loss) << '\n' << std::flush;
    denoiser::save_checkpoint(result.last_checkpoint, model, stats, metadata);
    if (mean_loss < best) {
      best = mean_loss;
      result.best_epoch = epoch;
      denoiser::save_checkpoint(result.best_checkpoint, model, stats, metadata);
    }
    if (on_epoch) {
      std::chrono::duration<double> took = std::chrono::steady_clock::now() - started;
      on_epoch({epoch, mean_loss, took.count()});
    }
  }
  if (!csv) throw std::runtime_error("failed writing " + (run_dir / "loss.csv").string());
  return result;
}

}  // namespace ecdiff::pipeline
