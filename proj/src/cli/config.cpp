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

#include "ecdiff/cli/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace ecdiff::cli {

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t parse_u64(const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
Field size_field(std::string section, std::string key, T RunConfig::* member) {
  return {
      section, key, [member](const RunConfig& c) { return std::to_string(c.*member); },
      [member](RunConfig& c, const std::string& v) { c.*member = static_cast<T>(parse_u64(v)); }};
}

template <typename Get, typename Set>
Field field(std::string section, std::string key, Get get, Set set) {
  return {std::move(section), std::move(key), get, set};
}

std::string color_mode_name(pushworld::ColorMode m) {
  return m == pushworld::ColorMode::kRandom ? "random" : "fixed";
}

pushworld::ColorMode parse_color_mode(const std::string& v) {
  if (v == "fixed") return pushworld::ColorMode::kFixedDistinct;
  if (v == "random") return pushworld::ColorMode::kRandom;
  throw ConfigError("color mode must be fixed or random, got '" + v + "'");
}

#define ENV_DOUBLE(name)                                                          \
  field(                                                                          \
      "env", #name, [](const RunConfig& c) { return format_double(c.env.name); }, \
      [](RunConfig& c, const std::string& v) { c.env.name = parse_double(v); })
#define TRAIN_SIZE(section, key, name)                                               \
  field(                                                                             \
      section, key, [](const RunConfig& c) { return std::to_string(c.train.name); }, \
      [](RunConfig& c, const std::string& v) { c.train.name = parse_u64(v); })

const std::vector<Field>& fields() {
  static const std::vector<Field> all = {
      field(
          "run", "task", [](const RunConfig& c) { return c.task; },
          [](RunConfig& c, const std::string& v) {
            if (v.empty() || v.find(',') != std::string::npos) {
              throw ConfigError("task must be non-empty and free of commas");
            }
            c.task = v;
          }),
      size_field("run", "seed", &RunConfig::seed),
      size_field("run", "threads", &RunConfig::threads),

      size_field("env", "n_objects", &RunConfig::n_objects),
      field(
          "env", "color_mode", [](const RunConfig& c) { return color_mode_name(c.color_mode); },
          [](RunConfig& c, const std::string& v) { c.color_mode = parse_color_mode(v); }),
      ENV_DOUBLE(agent_radius),
      ENV_DOUBLE(object_radius),
      ENV_DOUBLE(action_limit),
      ENV_DOUBLE(threshold_ratio),
      ENV_DOUBLE(placement_margin),
      ENV_DOUBLE(goal_spacing),
      field(
          "env", "max_steps_per_object",
          [](const RunConfig& c) { return std::to_string(c.env.max_steps_per_object); },
          [](RunConfig& c, const std::string& v) {
            c.env.max_steps_per_object = static_cast<int>(parse_u64(v));
          }),

      size_field("data", "episodes", &RunConfig::episodes),
      size_field("data", "particles", &RunConfig::particles),
      size_field("data", "views", &RunConfig::views),
      field(
          "data", "random_order",
          [](const RunConfig& c) { return std::string(c.random_order ? "true" : "false"); },
          [](RunConfig& c, const std::string& v) { c.random_order = parse_bool(v); }),
      field(
          "data", "path", [](const RunConfig& c) { return c.data_path; },
          [](RunConfig& c, const std::string& v) { c.data_path = v; }),

      field(
          "model", "mode", [](const RunConfig& c) { return denoiser::to_string(c.train.mode); },
          [](RunConfig& c, const std::string& v) {
            try {
              c.train.mode = denoiser::parse_mode(v);
            } catch (const std::invalid_argument& e) {
              throw ConfigError(e.what());
            }
          }),
      TRAIN_SIZE("model", "hidden", hidden),
      TRAIN_SIZE("model", "heads", heads),
      TRAIN_SIZE("model", "layers", layers),
      TRAIN_SIZE("model", "horizon", horizon),
      TRAIN_SIZE("model", "mlp_ratio", mlp_ratio),

      field(
          "diffusion", "steps",
          [](const RunConfig& c) { return std::to_string(c.train.diffusion_steps); },
          [](RunConfig& c, const std::string& v) {
            c.train.diffusion_steps = static_cast<int>(parse_u64(v));
          }),
      field(
          "diffusion", "schedule",
          [](const RunConfig& c) { return diffusion::to_string(c.train.schedule); },
          [](RunConfig& c, const std::string& v) {
            try {
              c.train.schedule = diffusion::parse_schedule_kind(v);
            } catch (const std::invalid_argument& e) {
              throw ConfigError(e.what());
            }
          }),

      TRAIN_SIZE("train", "batch_size", batch_size),
      field(
          "train", "lr", [](const RunConfig& c) { return format_double(c.train.lr); },
          [](RunConfig& c, const std::string& v) { c.train.lr = parse_double(v); }),
      TRAIN_SIZE("train", "epochs", epochs),
      TRAIN_SIZE("train", "steps_per_epoch", steps_per_epoch),
      field(
          "train", "action_weight",
          [](const RunConfig& c) { return format_double(c.train.action_weight); },
          [](RunConfig& c, const std::string& v) { c.train.action_weight = parse_double(v); }),
      field(
          "train", "lr_schedule",
          [](const RunConfig& c) { return pipeline::lr_schedule_name(c.train.lr_schedule); },
          [](RunConfig& c, const std::string& v) {
            try {
              c.train.lr_schedule = pipeline::parse_lr_schedule(v);
            } catch (const std::invalid_argument& e) {
              throw ConfigError(e.what());
            }
          }),

      size_field("eval", "episodes", &RunConfig::eval_episodes),
      size_field("eval", "particles", &RunConfig::eval_particles),
      size_field("eval", "chunk", &RunConfig::eval_chunk),
      size_field("eval", "record", &RunConfig::eval_record),
      field(
          "eval", "checkpoint", [](const RunConfig& c) { return c.eval_checkpoint; },
          [](RunConfig& c, const std::string& v) {
            if (v.empty()) throw ConfigError("eval.checkpoint must be last, best or a path");
            c.eval_checkpoint = v;
          }),

      field(
          "ablate", "modes",
          [](const RunConfig& c) {
            std::string s;
            for (auto m : c.ablate_modes) s += (s.empty() ? "" : ",") + denoiser::to_string(m);
            return s;
          },
          [](RunConfig& c, const std::string& v) {
            std::vector<denoiser::Mode> modes;
            for (const auto& item : split_list(v)) {
              try {
                modes.push_back(denoiser::parse_mode(item));
              } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
              }
            }
            if (modes.empty()) throw ConfigError("ablate.modes is empty");
            c.ablate_modes = modes;
          }),
      field(
          "generalize", "n_objects",
          [](const RunConfig& c) {
            std::string s;
            for (auto n : c.generalize_ns) s += (s.empty() ? "" : ",") + std::to_string(n);
            return s;
          },
          [](RunConfig& c, const std::string& v) {
            std::vector<std::size_t> ns;
            for (const auto& item : split_list(v)) ns.push_back(parse_u64(item));
            if (ns.empty()) throw ConfigError("generalize.n_objects is empty");
            c.generalize_ns = ns;
          }),
      size_field("attention", "pairs", &RunConfig::attention_pairs),
      size_field("attention", "batch", &RunConfig::attention_batch),
  };
  return all;
}

#undef ENV_DOUBLE
#undef TRAIN_SIZE

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.section + "." + f.key);
  return keys;
}

void RunConfig::set(const std::string& dotted, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.section + "." + f.key == dotted) {
      try {
        f.set(*this, trim(value));
      } catch (const ConfigError& e) {
        throw ConfigError(dotted + ": " + e.what());
      }
      return;
    }
  }
  throw ConfigError("unknown config key '" + dotted + "'");
}

void RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line, section;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of a section");
    try {
      set(section + "." + trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

std::string RunConfig::resolved() const {
  std::string out, section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      out += (section.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    out += f.key + " = " + f.get(*this) + "\n";
  }
  return out;
}

void RunConfig::validate() const {
  try {
    if (n_objects == 0) throw ConfigError("env.n_objects must be positive");
    if (episodes == 0) throw ConfigError("data.episodes must be positive");
    if (views == 0 || views > entities::kNumViews) throw ConfigError("data.views must be 1 or 2");
    if (particles != 0 && particles < n_objects + 1) {
      throw ConfigError("data.particles must be 0 or at least env.n_objects + 1");
    }
    if (env.max_steps_per_object <= 0)
      throw ConfigError("env.max_steps_per_object must be positive");
    if (eval_episodes == 0) throw ConfigError("eval.episodes must be positive");
    if (eval_chunk == 0) throw ConfigError("eval.chunk must be positive");
    for (std::size_t n : generalize_ns) {
      if (n == 0) throw ConfigError("generalize.n_objects entries must be positive");
    }
    if (attention_pairs < 2 || attention_batch == 0) {
      throw ConfigError("attention.pairs must be at least 2 and attention.batch positive");
    }
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::uint64_t RunConfig::data_seed() const { return num::derive_seed(seed, 1); }
std::uint64_t RunConfig::train_seed() const { return num::derive_seed(seed, 2); }
std::uint64_t RunConfig::eval_seed() const { return num::derive_seed(seed, 3); }
std::uint64_t RunConfig::attention_seed() const { return num::derive_seed(seed, 4); }

pipeline::GenerateOptions RunConfig::generate_options() const {
  pipeline::GenerateOptions g;
  g.n_episodes = episodes;
  g.n_objects = n_objects;
  g.color_mode = color_mode;
  g.particles = particles;
  g.views = views;
  g.seed = data_seed();
  g.random_order = random_order;
  g.env = env;
  return g;
}

pipeline::TrainConfig RunConfig::train_config() const {
  pipeline::TrainConfig t = train;
  t.seed = train_seed();
  return t;
}

pipeline::EvalOptions RunConfig::eval_options() const {
  pipeline::EvalOptions e;
  e.n_episodes = eval_episodes;
  e.n_objects = n_objects;
  e.color_mode = color_mode;
  e.seed = eval_seed();
  e.particles = eval_particles;
  e.env = env;
  e.chunk = eval_chunk;
  e.threads = threads;
  e.record_episodes = eval_record;
  return e;
}

pipeline::AttentionOptions RunConfig::attention_options() const {
  return {attention_pairs, attention_batch, attention_seed()};
}

}  // namespace ecdiff::cli
