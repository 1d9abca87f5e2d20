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

#include "ecdiff/pipeline/studies.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace ecdiff::pipeline {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

AblationRow run_ablation(denoiser::Mode mode, const Dataset& dataset, TrainConfig train_config,
                         const EvalOptions& eval, const std::filesystem::path& run_dir,
                         const std::string& config_text) {
  train_config.mode = mode;
  auto trained = train(dataset, train_config, run_dir, config_text);
  auto policy = Policy::load(trained.last_checkpoint);
  auto result = evaluate_policy(policy, eval);
  write_metrics_csv(run_dir / "metrics.csv", run_dir.filename().string(), denoiser::to_string(mode),
                    result);
  return {mode, eval.n_objects, trained.epoch_loss.back(), result.success_rate(),
          result.mean_success_fraction()};
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  out << "mode,n_objects,final_loss,success_rate,success_fraction\n";
  for (const auto& r : rows) {
    out << denoiser::to_string(r.mode) << ',' << r.n_objects << ',' << format_double(r.final_loss)
        << ',' << format_double(r.success_rate) << ',' << format_double(r.success_fraction) << '\n';
  }
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

GeneralizationResult generalization_suite(const Policy& policy,
                                          const std::vector<std::size_t>& eval_ns,
                                          const EvalOptions& eval) {
  GeneralizationResult out;
  for (std::size_t n : eval_ns) {
    EvalOptions opts = eval;
    opts.n_objects = n;
    auto result = evaluate_policy(policy, opts);
    std::size_t particles = eval_particles(policy, eval, n);
    out.rows.push_back({n, particles, result.success_rate(), result.mean_success_fraction()});
    out.evaluations.push_back(std::move(result));
  }
  return out;
}

void write_generalization_csv(const std::filesystem::path& path,
                              const std::vector<GeneralizationRow>& rows) {
  std::ofstream out(path);
  out << "n_objects,particles,success_rate,success_fraction\n";
  for (const auto& r : rows) {
    out << r.n_objects << ',' << r.particles << ',' << format_double(r.success_rate) << ','
        << format_double(r.success_fraction) << '\n';
  }
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace ecdiff::pipeline
