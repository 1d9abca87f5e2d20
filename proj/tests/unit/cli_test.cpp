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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ecdiff/cli/commands.hpp"
#include "ecdiff/cli/config.hpp"
#include "ecdiff/cli/render.hpp"

namespace ecdiff::cli {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("ecdiff_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

constexpr const char* kTinyConfig = R"(# smallest end-to-end run
[run]
task = tiny
seed = 3

[env]
n_objects = 1

[data]
episodes = 4

[model]
hidden = 16
heads = 2
layers = 1

[train]
batch_size = 4
lr = 0.001
epochs = 2
steps_per_epoch = 3

[eval]
episodes = 3
chunk = 2
record = 1

[generalize]
n_objects = 1, 2

[attention]
pairs = 40
batch = 2
)";

fs::path write_tiny_config(const fs::path& dir) {
  std::ofstream(dir / "tiny.cfg") << kTinyConfig;
  return dir / "tiny.cfg";
}

TEST(Config, ResolvedRoundTrips) {
  RunConfig a;
  a.set("train.lr", "0.000123");
  a.set("ablate.modes", "full, no_diffusion");
  a.set("env.color_mode", "random");
  auto dir = temp_dir("roundtrip");
  std::ofstream(dir / "r.cfg") << a.resolved();
  RunConfig b;
  b.load(dir / "r.cfg");
  EXPECT_EQ(a.resolved(), b.resolved());
  EXPECT_EQ(b.train.lr, 0.000123);
  EXPECT_EQ(b.ablate_modes.size(), 2u);
  EXPECT_EQ(b.color_mode, pushworld::ColorMode::kRandom);
}

TEST(Config, EveryKeyAppearsInResolvedOutput) {
  RunConfig c;
  const std::string text = c.resolved();
  for (const auto& key : config_keys()) {
    const auto dot = key.find('.');
    EXPECT_NE(text.find("[" + key.substr(0, dot) + "]"), std::string::npos) << key;
    EXPECT_NE(text.find("\n" + key.substr(dot + 1) + " = "), std::string::npos) << key;
  }
}

TEST(Config, DefaultsMirrorTheDeskSettings) {
  RunConfig c;
  EXPECT_EQ(c.train.batch_size, 32u);
  EXPECT_EQ(c.train.lr, 8e-5);
  EXPECT_EQ(c.train.diffusion_steps, 5);
  EXPECT_EQ(c.train.horizon, 3u);
  EXPECT_EQ(c.train.hidden, 128u);
  EXPECT_EQ(c.train.layers, 4u);
  EXPECT_EQ(c.train.epochs, 50u);
  EXPECT_EQ(c.episodes, 500u);
  EXPECT_EQ(c.eval_episodes, 96u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  RunConfig c;
  EXPECT_THROW(c.set("train.momentum", "0.9"), ConfigError);
  EXPECT_THROW(c.set("train.lr", "fast"), ConfigError);
  EXPECT_THROW(c.set("train.epochs", "-3"), ConfigError);
  EXPECT_THROW(c.set("model.mode", "mystery"), ConfigError);
  EXPECT_THROW(c.set("env.color_mode", "blue"), ConfigError);
  auto dir = temp_dir("bad");
  std::ofstream(dir / "a.cfg") << "[train]\nwarmup = 3\n";
  try {
    c.load(dir / "a.cfg");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("a.cfg:2"), std::string::npos) << e.what();
  }
  std::ofstream(dir / "b.cfg") << "lr = 3\n";
  EXPECT_THROW(c.load(dir / "b.cfg"), ConfigError);
}

TEST(Config, SeedsAreDistinctStreams) {
  RunConfig c;
  c.seed = 9;
  EXPECT_NE(c.data_seed(), c.train_seed());
  EXPECT_NE(c.train_seed(), c.eval_seed());
  EXPECT_EQ(c.train_config().seed, c.train_seed());
  EXPECT_EQ(c.eval_options().seed, c.eval_seed());
}

TEST(Dispatch, SelftestPasses) {
  auto r = run({"selftest"});
  EXPECT_EQ(r.code, kExitOk) << r.out;
  EXPECT_EQ(r.out.find("FAILED"), std::string::npos);
}

TEST(Dispatch, MissingConfigIsAUsageError) {
  auto r = run({"train", "--config", "missing.cfg", "--out", temp_dir("missing").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("missing.cfg"), std::string::npos);
}

TEST(Dispatch, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"train"}).code, kExitUsage);  // --out is required
  EXPECT_EQ(run({"train", "--out", "x", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run({"eval", "--out", "x", "--set", "eval.nope=1"}).code, kExitUsage);
  EXPECT_EQ(run({"eval", "--out", "x", "--set", "no-equals-sign"}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST(Dispatch, MissingInputsAreRuntimeFailures) {
  auto dir = temp_dir("runtime");
  auto r = run({"train", "--out", dir.string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_NE(r.err.find("gen-data"), std::string::npos);
  EXPECT_EQ(run({"eval", "--out", dir.string()}).code, kExitFailure);
}

TEST(Dispatch, EndToEndRunsAreReproducible) {
  auto dir = temp_dir("e2e");
  auto cfg = write_tiny_config(dir);
  for (const char* name : {"a", "b"}) {
    const std::string out = (dir / name).string();
    for (const char* cmd : {"gen-data", "train", "eval"}) {
      auto r = run({cmd, "--config", cfg.string(), "--out", out});
      ASSERT_EQ(r.code, kExitOk) << cmd << ": " << r.err;
    }
  }
  const std::string metrics_a = slurp(dir / "a" / "metrics.csv");
  EXPECT_EQ(metrics_a.substr(0, metrics_a.find('\n')),
            "run_id,task,n_objects,seed,success,success_fraction,max_dist,avg_dist,steps");
  // run_id is the directory name; everything after it must match.
  std::string metrics_b = slurp(dir / "b" / "metrics.csv");
  for (std::size_t pos = 0; (pos = metrics_b.find("\nb,", pos)) != std::string::npos;) {
    metrics_b.replace(pos, 3, "\na,");
  }
  EXPECT_EQ(metrics_a, metrics_b);
  EXPECT_EQ(slurp(dir / "a" / "loss.csv"), slurp(dir / "b" / "loss.csv"));
  for (const char* f :
       {"config.resolved", "dataset.bin", "checkpoints/last.ckpt", "checkpoints/best.ckpt",
        "renders/episode_0000/trajectory.json", "renders/episode_0000/trajectory/frame_0000.svg"}) {
    EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
  }

  // Re-running from the echoed config reproduces the run.
  const std::string c = (dir / "c").string();
  const std::string echoed = (dir / "a" / "config.resolved").string();
  for (const char* cmd : {"gen-data", "train", "eval"}) {
    ASSERT_EQ(run({cmd, "--config", echoed, "--out", c}).code, kExitOk) << cmd;
  }
  EXPECT_EQ(slurp(dir / "a" / "checkpoints" / "last.ckpt"),
            slurp(dir / "c" / "checkpoints" / "last.ckpt"));

  // A different seed changes the data.
  const std::string d = (dir / "d").string();
  ASSERT_EQ(run({"gen-data", "--config", cfg.string(), "--out", d, "--seed", "4"}).code, kExitOk);
  EXPECT_NE(slurp(dir / "a" / "dataset.bin"), slurp(dir / "d" / "dataset.bin"));

  auto g = run({"generalize", "--config", cfg.string(), "--out", (dir / "a").string()});
  ASSERT_EQ(g.code, kExitOk) << g.err;
  EXPECT_TRUE(fs::exists(dir / "a" / "generalization.csv"));
  auto t = run({"attn-test", "--config", cfg.string(), "--out", (dir / "a").string()});
  ASSERT_EQ(t.code, kExitOk) << t.err;
  EXPECT_TRUE(fs::exists(dir / "a" / "attention_summary.csv"));
}

TEST(Dispatch, AblateWritesOneRowPerMode) {
  auto dir = temp_dir("ablate");
  auto cfg = write_tiny_config(dir);
  auto r = run({"ablate", "--config", cfg.string(), "--out", (dir / "run").string(), "--set",
                "ablate.modes=full,no_diffusion", "--set", "eval.record=0"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  std::ifstream in(dir / "run" / "ablation.csv");
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_EQ(header, "mode,n_objects,final_loss,success_rate,success_fraction");
  EXPECT_EQ(first.rfind("full,1,", 0), 0u);
  EXPECT_EQ(second.rfind("no_diffusion,1,", 0), 0u);
  EXPECT_TRUE(fs::exists(dir / "run" / "no_diffusion" / "metrics.csv"));
}

TEST(Render, EmptyTrajectoryWritesNothing) {
  auto dir = temp_dir("render_empty");
  std::ofstream(dir / "t.json")
      << R"({"kind":"trajectory","agent_radius":0.03,"object_radius":0.05,"goals":[],"frames":[]})";
  auto r = run({"render", "--input", (dir / "t.json").string(), "--out", (dir / "svg").string()});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  EXPECT_FALSE(fs::exists(dir / "svg") && !fs::is_empty(dir / "svg"));
}

TEST(Render, OneSvgPerFrameInOrder) {
  auto dir = temp_dir("render_three");
  std::ofstream(dir / "t.json") << R"({"kind":"trajectory","agent_radius":0.03,
    "object_radius":0.05,"goals":[{"x":0.5,"y":0.5,"color":1}],"frames":[
    {"agent":[0.1,0.1],"objects":[{"x":0.3,"y":0.3,"color":1}]},
    {"agent":[0.2,0.1],"objects":[{"x":0.4,"y":0.4,"color":1}]},
    {"agent":[0.3,0.1],"objects":[{"x":0.5,"y":0.5,"color":1}]}]})";
  EXPECT_EQ(render_file(dir / "t.json", dir / "svg"), 3u);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir / "svg")) names.push_back(e.path().filename());
  std::sort(names.begin(), names.end());
  EXPECT_EQ(names,
            (std::vector<std::string>{"frame_0000.svg", "frame_0001.svg", "frame_0002.svg"}));
  const std::string svg = slurp(dir / "svg" / "frame_0002.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find(palette_color(1)), std::string::npos);
}

TEST(Render, MalformedInputFails) {
  auto dir = temp_dir("render_bad");
  std::ofstream(dir / "t.json") << R"({"kind":"movie","frames":[]})";
  auto r = run({"render", "--input", (dir / "t.json").string(), "--out", (dir / "svg").string()});
  EXPECT_EQ(r.code, kExitFailure);
  EXPECT_EQ(run({"render", "--input", (dir / "nope.json").string(), "--out", "x"}).code,
            kExitUsage);
}

}  // namespace
}  // namespace ecdiff::cli
