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

#include "ecdiff/cli/commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "ecdiff/cli/config.hpp"
#include "ecdiff/cli/render.hpp"
#include "ecdiff/numerics/gradcheck.hpp"
#include "ecdiff/pipeline/studies.hpp"

namespace ecdiff::cli {

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  bool has_seed = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RunConfig resolve(const CommonArgs& a) {
  RunConfig cfg;
  if (!a.config.empty()) {
    if (!fs::exists(a.config)) throw ConfigError("config file not found: " + a.config);
    cfg.load(a.config);
  }
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.has_seed) cfg.seed = a.seed;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

fs::path prepare_run_dir(const CommonArgs& a, const RunConfig& cfg) {
  fs::path dir(a.out);
  fs::create_directories(dir);
  write_text(dir / "config.resolved", cfg.resolved());
  return dir;
}

fs::path dataset_path(const RunConfig& cfg, const fs::path& dir) {
  return cfg.data_path.empty() ? dir / "dataset.bin" : fs::path(cfg.data_path);
}

fs::path checkpoint_path(const RunConfig& cfg, const fs::path& dir) {
  if (cfg.eval_checkpoint == "last") return dir / "checkpoints" / "last.ckpt";
  if (cfg.eval_checkpoint == "best") return dir / "checkpoints" / "best.ckpt";
  return cfg.eval_checkpoint;
}

pipeline::Dataset require_dataset(const RunConfig& cfg, const fs::path& dir) {
  const fs::path path = dataset_path(cfg, dir);
  if (!fs::exists(path)) {
    throw std::runtime_error("dataset " + path.string() + " not found; run gen-data first");
  }
  return pipeline::load_dataset(path);
}

pipeline::Policy require_policy(const RunConfig& cfg, const fs::path& dir) {
  const fs::path path = checkpoint_path(cfg, dir);
  if (!fs::exists(path)) {
    throw std::runtime_error("checkpoint " + path.string() + " not found; run train first");
  }
  return pipeline::Policy::load(path);
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

std::string fmt(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void print_eval(std::ostream& out, const std::string& label, const pipeline::EvalResult& r) {
  out << label << ": success rate " << fmt(r.success_rate(), 3) << ", success fraction "
      << fmt(r.mean_success_fraction(), 3) << " over " << r.episodes.size() << " episodes\n";
}

void dump_recorded(const pipeline::EvalResult& result, const pushworld::EnvParams& env,
                   const fs::path& renders) {
  for (const auto& ep : result.episodes) {
    if (ep.states.empty()) continue;
    char name[32];
    std::snprintf(name, sizeof(name), "episode_%04zu", ep.index);
    const fs::path dir = renders / name;
    pipeline::write_trajectory_json(dir / "trajectory.json", ep, env);
    render_file(dir / "trajectory.json", dir / "trajectory");
    if (!ep.plans.empty() && !ep.plans.front().steps.empty()) {
      pipeline::write_plans_json(dir / "plans.json", ep, env);
      render_file(dir / "plans.json", dir / "plans");
    }
  }
}

int cmd_gen_data(const CommonArgs& a, std::ostream& out) {
  RunConfig cfg = resolve(a);
  fs::path dir = prepare_run_dir(a, cfg);
  auto ds = pipeline::generate_dataset(cfg.generate_options());
  const fs::path path = dataset_path(cfg, dir);
  pipeline::save_dataset(path, ds);
  out << "wrote " << ds.episodes.size() << " episodes (" << ds.transitions() << " transitions, "
      << ds.particles << " particles per set) to " << path.string() << "\n";
  return kExitOk;
}

int cmd_train(const CommonArgs& a, std::ostream& out) {
  RunConfig cfg = resolve(a);
  fs::path dir = prepare_run_dir(a, cfg);
  auto ds = require_dataset(cfg, dir);
  auto result = pipeline::train(ds, cfg.train_config(), dir, cfg.resolved(),
                                [&](const pipeline::EpochReport& e) {
                                  out << "epoch " << e.epoch << " loss " << fmt(e.mean_loss, 5)
                                      << " (" << fmt(e.seconds, 1) << " s)\n"
                                      << std::flush;
                                });
  out << "final loss " << fmt(result.epoch_loss.back(), 5) << ", best epoch " << result.best_epoch
      << "\n";
  return kExitOk;
}

int cmd_eval(const CommonArgs& a, std::ostream& out) {
  RunConfig cfg = resolve(a);
  fs::path dir = prepare_run_dir(a, cfg);
  auto policy = require_policy(cfg, dir);
  auto opts = cfg.eval_options();
  auto result = pipeline::evaluate_policy(policy, opts);
  fs::remove(dir / "metrics.csv");
  pipeline::write_metrics_csv(dir / "metrics.csv", dir.filename().string(), cfg.task, result);
  dump_recorded(result, cfg.env, dir / "renders");
  print_eval(out, std::to_string(cfg.n_objects) + " objects", result);
  return kExitOk;
}

int cmd_ablate(const CommonArgs& a, std::ostream& out) {
  RunConfig cfg = resolve(a);
  fs::path dir = prepare_run_dir(a, cfg);
  const fs::path data = dataset_path(cfg, dir);
  pipeline::Dataset ds;
  if (fs::exists(data)) {
    ds = pipeline::load_dataset(data);
  } else {
    ds = pipeline::generate_dataset(cfg.generate_options());
    pipeline::save_dataset(data, ds);
  }
  std::vector<pipeline::AblationRow> rows;
  for (auto mode : cfg.ablate_modes) {
    RunConfig sub = cfg;
    sub.train.mode = mode;
    const fs::path sub_dir = dir / denoiser::to_string(mode);
    fs::create_directories(sub_dir);
    fs::remove(sub_dir / "metrics.csv");
    write_text(sub_dir / "config.resolved", sub.resolved());
    out << "ablation " << denoiser::to_string(mode) << "\n" << std::flush;
    auto row = pipeline::run_ablation(mode, ds, sub.train_config(), sub.eval_options(), sub_dir,
                                      sub.resolved());
    out << "  final loss " << fmt(row.final_loss, 5) << ", success rate "
        << fmt(row.success_rate, 3) << ", success fraction " << fmt(row.success_fraction, 3)
        << "\n";
    rows.push_back(row);
  }
  pipeline::write_ablation_csv(dir / "ablation.csv", rows);
  return kExitOk;
}

int cmd_generalize(const CommonArgs& a, std::ostream& out) {
  RunConfig cfg = resolve(a);
  fs::path dir = prepare_run_dir(a, cfg);
  auto policy = require_policy(cfg, dir);
  auto result = pipeline::generalization_suite(policy, cfg.generalize_ns, cfg.eval_options());
  fs::remove(dir / "metrics.csv");
  for (const auto& ev : result.evaluations) {
    pipeline::write_metrics_csv(dir / "metrics.csv", dir.filename().string(), cfg.task, ev);
  }
  pipeline::write_generalization_csv(dir / "generalization.csv", result.rows);
  for (const auto& r : result.rows) {
    out << r.n_objects << " objects (" << r.particles << " particles): success rate "
        << fmt(r.success_rate, 3) << ", success fraction " << fmt(r.success_fraction, 3) << "\n";
  }
  return kExitOk;
}

int cmd_attn_test(const CommonArgs& a, std::ostream& out) {
  RunConfig cfg = resolve(a);
  fs::path dir = prepare_run_dir(a, cfg);
  auto policy = require_policy(cfg, dir);
  auto ds = require_dataset(cfg, dir);
  auto report = pipeline::attention_consistency_test(policy, ds, cfg.attention_options());
  {
    std::ofstream csv(dir / "attention.csv");
    csv << "label,value\n";
    for (const auto& s : report.samples) {
      csv << (s.label == pipeline::AttentionSample::Label::kSameObject ? "same_object" : "random")
          << ',' << fmt(s.value, 12) << '\n';
    }
    if (!csv) throw std::runtime_error("cannot write attention.csv");
  }
  const auto& w = report.welch;
  char line[256];
  std::snprintf(line, sizeof(line), "%zu,%zu,%.12g,%.12g,%.12g,%.12g,%.12g\n", w.n_a, w.n_b,
                w.mean_a, w.mean_b, w.t, w.df, w.p);
  write_text(dir / "attention_summary.csv",
             std::string("n_same,n_random,mean_same,mean_random,t,df,p\n") + line);
  out << "same-object mean " << fmt(w.mean_a, 5) << " (n=" << w.n_a << "), random mean "
      << fmt(w.mean_b, 5) << " (n=" << w.n_b << "), t = " << fmt(w.t, 3)
      << ", df = " << fmt(w.df, 1) << ", p = " << w.p << "\n";
  return kExitOk;
}

int cmd_render(const std::string& input, const std::string& out_dir, std::ostream& out) {
  std::size_t n = render_file(input, out_dir);
  out << "rendered " << n << " frames into " << out_dir << "\n";
  return kExitOk;
}

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config, "Run configuration file");
  sub->add_option("--out", a.out, "Run directory")->required();
  sub->add_option("--set", a.sets, "Override a config key, key=value (repeatable)");
  sub->add_option_function<std::uint64_t>(
      "--seed", [&a](std::uint64_t s) { a.seed = s, a.has_seed = true; }, "Master seed");
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entity-centric diffusion behavioral cloning on a planar pushing task"};
  app.name("ecdiff");
  app.require_subcommand(1);
  CommonArgs common;
  std::string render_input, render_out;

  struct Entry {
    CLI::App* app;
    std::function<int()> run;
  };
  std::vector<Entry> entries;
  auto add = [&](const char* name, const char* help, int (*fn)(const CommonArgs&, std::ostream&)) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub, common);
    entries.push_back({sub, [&common, &out, fn] { return fn(common, out); }});
  };
  add("gen-data", "Generate expert demonstrations", cmd_gen_data);
  add("train", "Train a denoiser on the run's dataset", cmd_train);
  add("eval", "Closed-loop evaluation of a checkpoint", cmd_eval);
  add("ablate", "Train and evaluate each ablation mode", cmd_ablate);
  add("generalize", "Evaluate a checkpoint across object counts", cmd_generalize);
  add("attn-test", "Same-object versus random attention t-test", cmd_attn_test);
  auto* render = app.add_subcommand("render", "Render a trajectory or plans dump to SVG");
  render->add_option("--input", render_input, "Dump file")->required()->check(CLI::ExistingFile);
  render->add_option("--out", render_out, "Output directory")->required();
  entries.push_back({render, [&] { return cmd_render(render_input, render_out, out); }});
  auto* self = app.add_subcommand("selftest", "Run the fast invariant checks");
  entries.push_back({self, [&] { return selftest(out) ? kExitOk : kExitFailure; }});

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    for (auto& e : entries) {
      if (e.app->parsed()) return e.run();
    }
    err << "no subcommand given\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

bool selftest(std::ostream& out) {
  bool all = true;
  auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    out << (ok ? "ok     " : "FAILED ") << name << ": " << detail << "\n";
    all = all && ok;
  };

  {
    double worst = 0.0;
    for (auto kind : {diffusion::ScheduleKind::kCosine, diffusion::ScheduleKind::kLinear}) {
      for (int steps : {1, 5, 100}) {
        auto s = diffusion::make_schedule(steps, kind);
        double prod = 1.0;
        for (int t = 1; t <= steps; ++t) {
          prod *= s.alpha_at(t);
          worst = std::max(worst, std::abs(prod - s.alpha_bar_at(t)));
        }
      }
    }
    report("schedule identities", worst < 1e-12, "max |alpha_bar - prod alpha| = " + sci(worst));
  }

  {
    num::SeededRng rng(3);
    denoiser::DenoiserConfig c;
    c.hidden = 8;
    c.heads = 2;
    c.layers = 2;
    c.horizon = 3;
    c.views = 1;
    c.particles = 2;
    denoiser::Denoiser model(c, 3);
    for (auto& p : model.parameters()) {
      for (double& x : p.var.mutable_value().data()) x = rng.uniform(-0.5, 0.5);
    }
    auto l = model.layout(2);
    auto schedule = diffusion::make_schedule(5, diffusion::ScheduleKind::kCosine);
    num::Tensor x0({1, l.x_dim()}), cond({1, l.cond_dim()}), eps({1, l.x_dim()});
    for (double& v : x0.data()) v = rng.uniform(-1.0, 1.0);
    for (double& v : cond.data()) v = rng.uniform(-1.0, 1.0);
    rng.fill_normal(eps.data());
    std::vector<int> t{3};
    auto params = model.parameter_vars();
    num::GradCheckOptions opts;
    opts.max_entries_per_param = 16;
    auto r = num::finite_diff_check(
        [&] { return diffusion::training_loss(model.noise_model(2), x0, cond, t, eps, schedule); },
        params, opts);
    report("gradient check", r.max_rel_error < 1e-4,
           "max relative error " + sci(r.max_rel_error) + " over " + std::to_string(r.n_checked) +
               " entries");
  }

  {
    num::SeededRng rng(4);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::size_t na = 1 + rng.index(8), nb = 1 + rng.index(8), dim = 1 + rng.index(4);
      std::vector<double> a(na * dim), b(nb * dim);
      for (double& v : a) v = rng.uniform(-1.0, 1.0);
      for (double& v : b) v = rng.uniform(-1.0, 1.0);
      auto directed = [dim](const std::vector<double>& p, const std::vector<double>& q) {
        double total = 0.0;
        for (std::size_t i = 0; i < p.size() / dim; ++i) {
          double best = INFINITY;
          for (std::size_t j = 0; j < q.size() / dim; ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < dim; ++k) d += std::abs(p[i * dim + k] - q[j * dim + k]);
            best = std::min(best, d);
          }
          total += best;
        }
        return total;
      };
      double expect = directed(a, b) + directed(b, a);
      worst = std::max(worst, std::abs(entities::chamfer_l1(a, b, dim) - expect));
    }
    report("chamfer oracle", worst < 1e-12, "max deviation " + sci(worst));
  }

  {
    pushworld::EnvParams env;
    bool same = true, solved = true;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      num::SeededRng r1(seed), r2(seed);
      auto [s1, g1] = pushworld::reset(env, 2, pushworld::ColorMode::kRandom, r1);
      auto [s2, g2] = pushworld::reset(env, 2, pushworld::ColorMode::kRandom, r2);
      same = same && s1 == s2 && g1 == g2;
      pushworld::Expert e1(env), e2(env);
      auto a = pushworld::rollout_expert(env, s1, g1, e1, env.max_steps(2));
      auto b = pushworld::rollout_expert(env, s2, g2, e2, env.max_steps(2));
      same = same && a.states == b.states;
      solved = solved && a.metrics.success;
    }
    report(
        "environment determinism", same && solved,
        same ? (solved ? "identical rollouts, all solved" : "expert failed") : "rollouts differ");
  }
  return all;
}

}  // namespace ecdiff::cli
