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

#include "ecdiff/entities/entities.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ecdiff::entities {

using pushworld::Vec2;

pushworld::Vec2 to_view(std::size_t view, Vec2 p) {
  switch (view) {
    case 0:
      return p;
    case 1:
      return {1.0 - p.y, p.x};
  }
  throw std::invalid_argument("to_view: unknown view " + std::to_string(view));
}

pushworld::Vec2 from_view(std::size_t view, Vec2 p) {
  switch (view) {
    case 0:
      return p;
    case 1:
      return {p.y, 1.0 - p.x};
  }
  throw std::invalid_argument("from_view: unknown view " + std::to_string(view));
}

std::vector<double> pad_particle() { return std::vector<double>(kParticleDim, 0.0); }

namespace {

void write_particle(double* out, Vec2 pos, double radius, int color_slot) {
  std::fill(out, out + kParticleDim, 0.0);
  out[kPosX] = pos.x;
  out[kPosY] = pos.y;
  out[kScaleX] = radius;
  out[kScaleY] = radius;
  out[kDepth] = 0.0;
  out[kTransparency] = 1.0;
  out[kFeatures + color_slot] = 1.0;
}

int color_slot(std::span<const double> row) {
  if (row[kTransparency] < 0.5) return static_cast<int>(kFeatureDim);
  auto f = row.subspan(kFeatures, kFeatureDim);
  return static_cast<int>(std::max_element(f.begin(), f.end()) - f.begin());
}

}  // namespace

ParticleSet encode_ground_truth(const pushworld::SceneState& scene, std::size_t view, std::size_t m,
                                num::SeededRng& rng, bool include_agent) {
  const std::size_t n_entities = scene.objects.size() + (include_agent ? 1 : 0);
  if (n_entities > m) {
    throw std::invalid_argument("encode_ground_truth: " + std::to_string(n_entities) +
                                " entities do not fit in " + std::to_string(m) + " particles");
  }
  std::vector<int> entity(m, kPadEntity);
  for (std::size_t i = 0; i < scene.objects.size(); ++i) entity[i] = static_cast<int>(i);
  if (include_agent) entity[scene.objects.size()] = kAgentEntity;
  rng.shuffle(entity);

  ParticleSet set;
  set.view = view;
  set.data.assign(m * kParticleDim, 0.0);
  set.entity = entity;
  for (std::size_t r = 0; r < m; ++r) {
    double* out = set.data.data() + r * kParticleDim;
    if (entity[r] == kAgentEntity) {
      write_particle(out, to_view(view, scene.agent), scene.agent_radius,
                     pushworld::kAgentColorSlot);
    } else if (entity[r] >= 0) {
      const auto& o = scene.objects[entity[r]];
      write_particle(out, to_view(view, o.pos), o.radius, o.color);
    }
  }
  return set;
}

Observation encode_observation(const pushworld::SceneState& scene, std::size_t n_views,
                               std::size_t m, num::SeededRng& rng, bool include_agent) {
  Observation obs;
  for (std::size_t v = 0; v < n_views; ++v) {
    obs.push_back(encode_ground_truth(scene, v, m, rng, include_agent));
  }
  return obs;
}

ParticleSet canonical_order(const ParticleSet& set) {
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    auto ra = set.row(a), rb = set.row(b);
    int ca = color_slot(ra), cb = color_slot(rb);
    if (ca != cb) return ca < cb;
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  ParticleSet out;
  out.view = set.view;
  for (std::size_t i : idx) {
    auto r = set.row(i);
    out.data.insert(out.data.end(), r.begin(), r.end());
    out.entity.push_back(set.entity[i]);
  }
  return out;
}

NormalizationStats::NormalizationStats(std::vector<double> particle_min,
                                       std::vector<double> particle_max,
                                       std::vector<double> action_min,
                                       std::vector<double> action_max)
    : p_min_(std::move(particle_min)),
      p_max_(std::move(particle_max)),
      a_min_(std::move(action_min)),
      a_max_(std::move(action_max)) {
  if (p_min_.size() != kParticleDim || p_max_.size() != kParticleDim ||
      a_min_.size() != kActionDim || a_max_.size() != kActionDim) {
    throw std::invalid_argument("NormalizationStats: wrong dimension count");
  }
  for (std::size_t d = 0; d < kParticleDim; ++d) {
    if (!(p_min_[d] <= p_max_[d])) throw std::invalid_argument("NormalizationStats: min > max");
  }
  for (std::size_t d = 0; d < kActionDim; ++d) {
    if (!(a_min_[d] <= a_max_[d])) throw std::invalid_argument("NormalizationStats: min > max");
  }
}

namespace {

void extrema(std::span<const double> rows, std::size_t dim, std::vector<double>& lo,
             std::vector<double>& hi) {
  lo.assign(dim, std::numeric_limits<double>::infinity());
  hi.assign(dim, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::size_t d = i % dim;
    lo[d] = std::min(lo[d], rows[i]);
    hi[d] = std::max(hi[d], rows[i]);
  }
}

void to_unit(std::span<double> rows, const std::vector<double>& lo, const std::vector<double>& hi) {
  const std::size_t dim = lo.size();
  if (rows.size() % dim != 0) throw std::invalid_argument("normalize: ragged rows");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::size_t d = i % dim;
    double range = hi[d] - lo[d];
    rows[i] = range > 0.0 ? std::clamp(2.0 * (rows[i] - lo[d]) / range - 1.0, -1.0, 1.0) : 0.0;
  }
}

void from_unit(std::span<double> rows, const std::vector<double>& lo,
               const std::vector<double>& hi) {
  const std::size_t dim = lo.size();
  if (rows.size() % dim != 0) throw std::invalid_argument("denormalize: ragged rows");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::size_t d = i % dim;
    rows[i] = lo[d] + (rows[i] + 1.0) * 0.5 * (hi[d] - lo[d]);
  }
}

}  // namespace

NormalizationStats NormalizationStats::fit(std::span<const double> particles,
                                           std::span<const double> actions) {
  if (particles.empty() || actions.empty()) {
    throw std::invalid_argument("fit_normalization: empty dataset");
  }
  if (particles.size() % kParticleDim != 0 || actions.size() % kActionDim != 0) {
    throw std::invalid_argument("fit_normalization: ragged rows");
  }
  NormalizationStats s;
  extrema(particles, kParticleDim, s.p_min_, s.p_max_);
  extrema(actions, kActionDim, s.a_min_, s.a_max_);
  return s;
}

void NormalizationStats::normalize_particles(std::span<double> rows) const {
  to_unit(rows, p_min_, p_max_);
}
void NormalizationStats::normalize_actions(std::span<double> rows) const {
  to_unit(rows, a_min_, a_max_);
}
void NormalizationStats::denormalize_particles(std::span<double> rows) const {
  from_unit(rows, p_min_, p_max_);
}
void NormalizationStats::denormalize_actions(std::span<double> rows) const {
  from_unit(rows, a_min_, a_max_);
}

namespace {

void check_sets(std::size_t na, std::size_t nb, std::size_t sa, std::size_t sb, std::size_t dim) {
  if (dim == 0) throw std::invalid_argument("chamfer_l1: zero dimension");
  if (sa % dim != 0 || sb % dim != 0) throw std::invalid_argument("chamfer_l1: dimension mismatch");
  if (na == 0 || nb == 0) throw std::invalid_argument("chamfer_l1: empty set");
}

double l1(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t d = 0; d < dim; ++d) s += std::abs(a[d] - b[d]);
  return s;
}

// For each row of `from`, the index of its nearest row in `to`, lowest
// index on ties.
std::vector<std::size_t> nearest(const double* from, std::size_t nf, const double* to,
                                 std::size_t nt, std::size_t dim, double* total) {
  std::vector<std::size_t> nn(nf);
  for (std::size_t i = 0; i < nf; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < nt; ++j) {
      double d = l1(from + i * dim, to + j * dim, dim);
      if (d < best) {
        best = d;
        nn[i] = j;
      }
    }
    *total += best;
  }
  return nn;
}

}  // namespace

double chamfer_l1(std::span<const double> a, std::span<const double> b, std::size_t dim) {
  check_sets(dim ? a.size() / dim : 0, dim ? b.size() / dim : 0, a.size(), b.size(), dim);
  const std::size_t na = a.size() / dim, nb = b.size() / dim;
  double total = 0.0;
  nearest(a.data(), na, b.data(), nb, dim, &total);
  nearest(b.data(), nb, a.data(), na, dim, &total);
  return total;
}

num::Var chamfer_l1_loss(const num::Var& prediction, const num::Tensor& target,
                         std::size_t set_size) {
  const auto& pv = prediction.value();
  if (pv.rank() != 2 || target.shape() != pv.shape()) {
    throw num::ShapeError("chamfer_l1_loss: prediction " + num::shape_str(pv.shape()) +
                          " vs target " + num::shape_str(target.shape()));
  }
  const std::size_t rows = pv.dim(0), dim = pv.dim(1);
  if (set_size == 0 || rows % set_size != 0) {
    throw num::ShapeError("chamfer_l1_loss: rows not divisible into sets");
  }
  const std::size_t k = set_size;
  // Matched target row for every prediction row (forward term) and matched
  // prediction row for every target row (backward term).
  std::vector<std::size_t> pred_to_target(rows), target_to_pred(rows);
  double total = 0.0;
  for (std::size_t g = 0; g < rows / k; ++g) {
    const double* p = pv.ptr() + g * k * dim;
    const double* t = target.ptr() + g * k * dim;
    auto f = nearest(p, k, t, k, dim, &total);
    auto b = nearest(t, k, p, k, dim, &total);
    for (std::size_t i = 0; i < k; ++i) {
      pred_to_target[g * k + i] = g * k + f[i];
      target_to_pred[g * k + i] = g * k + b[i];
    }
  }
  auto sign = [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); };
  return num::Var::make(
      num::Tensor::scalar(total), {prediction},
      [target, pred_to_target, target_to_pred, rows, dim, sign](num::detail::Node& self) {
        const double g = self.grad[0];
        const num::Tensor& pv = self.parents[0]->value;
        auto& pg = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < rows; ++i) {
          const std::size_t j = pred_to_target[i];
          for (std::size_t d = 0; d < dim; ++d) {
            pg[i * dim + d] += g * sign(pv.at(i, d) - target.at(j, d));
          }
        }
        for (std::size_t j = 0; j < rows; ++j) {
          const std::size_t i = target_to_pred[j];
          for (std::size_t d = 0; d < dim; ++d) {
            pg[i * dim + d] += g * sign(pv.at(i, d) - target.at(j, d));
          }
        }
      });
}

}  // namespace ecdiff::entities
