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

#include "ecdiff/pipeline/attention.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ecdiff::pipeline {

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // unbiased
};

Moments moments(std::span<const double> x) {
  Moments m;
  for (double v : x) m.mean += v;
  m.mean /= static_cast<double>(x.size());
  for (double v : x) m.var += (v - m.mean) * (v - m.mean);
  m.var /= static_cast<double>(x.size() - 1);
  return m;
}

int particle_entity(const denoiser::TokenInfo& tok, const Window& w, std::size_t views,
                    std::size_t m) {
  using Kind = denoiser::TokenInfo::Kind;
  switch (tok.kind) {
    case Kind::kCurrent:
      return w.cond_entity[tok.view * m + tok.index];
    case Kind::kState:
      return w.x0_entity[((tok.slot - 1) * views + tok.view) * m + tok.index];
    case Kind::kGoal:
      return w.cond_entity[(views + tok.view) * m + tok.index];
    case Kind::kAction:
      break;
  }
  return entities::kPadEntity;
}

}  // namespace

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("welch_t_test needs at least two values per sample");
  }
  const Moments ma = moments(a), mb = moments(b);
  WelchResult r;
  r.n_a = a.size();
  r.n_b = b.size();
  r.mean_a = ma.mean;
  r.mean_b = mb.mean;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double qa = ma.var / na, qb = mb.var / nb;
  const double se2 = qa + qb;
  if (se2 == 0.0) {
    r.df = na + nb - 2.0;
    if (ma.mean == mb.mean) return r;
    r.t = ma.mean > mb.mean ? std::numeric_limits<double>::infinity()
                            : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    return r;
  }
  r.t = (ma.mean - mb.mean) / std::sqrt(se2);
  r.df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
  boost::math::students_t dist(r.df);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
  return r;
}

AttentionReport attention_consistency_test(const Policy& policy, const Dataset& dataset,
                                           const AttentionOptions& options) {
  const auto& model = policy.model;
  const auto& cfg = model.config();
  if (cfg.mode != denoiser::Mode::kFull) {
    throw std::invalid_argument("attention analysis needs a model with one token per particle");
  }
  if (options.n_pairs < 2 || options.batch == 0) {
    throw std::invalid_argument("attention analysis needs n_pairs >= 2 and a positive batch");
  }
  num::NoGradGuard no_grad;
  const std::size_t m = dataset.particles;
  const auto layout = model.layout(m);
  const auto tokens = model.tokens(m);
  const std::size_t seq = tokens.size();
  std::vector<std::size_t> particle_tokens;
  for (std::size_t i = 0; i < seq; ++i) {
    if (tokens[i].kind != denoiser::TokenInfo::Kind::kAction) particle_tokens.push_back(i);
  }

  num::SeededRng rng(options.seed);
  std::vector<double> same, random;
  while (same.size() < options.n_pairs) {
    std::vector<Window> windows;
    num::Tensor x_t({options.batch, layout.x_dim()}), cond({options.batch, layout.cond_dim()});
    std::vector<int> t(options.batch);
    for (std::size_t b = 0; b < options.batch; ++b) {
      Window w = sample_window(dataset, cfg.horizon, cfg.mode, rng);
      Window normalized = w;
      normalize_window(policy.stats, layout, normalized);
      t[b] = 1 + static_cast<int>(rng.index(policy.schedule.steps));
      std::vector<double> eps = rng.normals(layout.x_dim());
      auto noised = diffusion::forward_sample(normalized.x0, t[b], eps, policy.schedule);
      std::copy(noised.begin(), noised.end(), x_t.ptr() + b * layout.x_dim());
      std::copy(normalized.cond.begin(), normalized.cond.end(), cond.ptr() + b * layout.cond_dim());
      windows.push_back(std::move(w));
    }
    denoiser::AttentionCapture capture;
    model.predict(x_t, t, cond, m, &capture);

    const std::size_t heads = cfg.heads;
    const double pool = static_cast<double>(capture.layers.size() * heads);
    for (std::size_t b = 0; b < options.batch && same.size() < options.n_pairs; ++b) {
      auto attention = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (const auto& layer : capture.layers) {
          for (std::size_t h = 0; h < heads; ++h) s += layer[((b * heads + h) * seq + i) * seq + j];
        }
        return s / pool;
      };
      std::vector<int> entity(seq, entities::kPadEntity);
      for (std::size_t i : particle_tokens) {
        entity[i] = particle_entity(tokens[i], windows[b], layout.views, m);
      }
      std::size_t added = 0;
      for (std::size_t i : particle_tokens) {
        if (entity[i] < 0) continue;
        for (std::size_t j : particle_tokens) {
          if (same.size() >= options.n_pairs) break;
          if (entity[j] != entity[i] || tokens[j].slot == tokens[i].slot) continue;
          same.push_back(attention(i, j));
          ++added;
        }
      }
      for (std::size_t k = 0; k < added; ++k) {
        std::size_t i = particle_tokens[rng.index(particle_tokens.size())];
        std::size_t j = i;
        while (j == i) j = particle_tokens[rng.index(particle_tokens.size())];
        random.push_back(attention(i, j));
      }
    }
  }

  AttentionReport report;
  for (double v : same) report.samples.push_back({AttentionSample::Label::kSameObject, v});
  for (double v : random) report.samples.push_back({AttentionSample::Label::kRandom, v});
  report.welch = welch_t_test(same, random);
  return report;
}

}  // namespace ecdiff::pipeline
