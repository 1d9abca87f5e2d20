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

// Run configuration: a line-oriented text file of `[section]` headers and
// `key = value` lines, overridable by dotted `section.key=value` pairs.
// Every run echoes its resolved configuration next to its outputs.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ecdiff/pipeline/attention.hpp"
#include "ecdiff/pipeline/dataset.hpp"
#include "ecdiff/pipeline/evaluation.hpp"
#include "ecdiff/pipeline/training.hpp"

namespace ecdiff::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // [run]
  std::string task = "push";
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  // [env]
  std::size_t n_objects = 2;
  pushworld::ColorMode color_mode = pushworld::ColorMode::kFixedDistinct;
  pushworld::EnvParams env;
  // [data]
  std::size_t episodes = 500;
  std::size_t particles = 0;
  std::size_t views = entities::kNumViews;
  bool random_order = true;
  std::string data_path;  // empty: <out>/dataset.bin
  // [model], [diffusion], [train]
  pipeline::TrainConfig train;
  // [eval]
  std::size_t eval_episodes = 96;
  std::size_t eval_particles = 0;
  std::size_t eval_chunk = 32;
  std::size_t eval_record = 0;
  std::string eval_checkpoint = "last";  // last, best or a path
  // [ablate]
  std::vector<denoiser::Mode> ablate_modes = {denoiser::Mode::kFull, denoiser::Mode::kActionOnly,
                                              denoiser::Mode::kUnstructured};
  // [generalize]
  std::vector<std::size_t> generalize_ns = {1, 2, 3, 4};
  // [attention]
  std::size_t attention_pairs = 2000;
  std::size_t attention_batch = 16;

  /// Sets one dotted key; throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// Reads a config file over the current values.
  void load(const std::filesystem::path& path);
  /// Every key, grouped by section, in a form load() reads back exactly.
  std::string resolved() const;
  void validate() const;

  std::uint64_t data_seed() const;
  std::uint64_t train_seed() const;
  std::uint64_t eval_seed() const;
  std::uint64_t attention_seed() const;

  pipeline::GenerateOptions generate_options() const;
  pipeline::TrainConfig train_config() const;
  pipeline::EvalOptions eval_options() const;
  pipeline::AttentionOptions attention_options() const;
};

/// Every accepted dotted key, in resolved() order.
std::vector<std::string> config_keys();

}  // namespace ecdiff::cli
