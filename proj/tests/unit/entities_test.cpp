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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ecdiff/numerics/gradcheck.hpp"
#include "ecdiff/numerics/ops.hpp"

namespace ecdiff::entities {
namespace {

using pushworld::Vec2;

pushworld::SceneState scene_with(std::vector<Vec2> objects, Vec2 agent = {0.9, 0.9}) {
  pushworld::SceneState s;
  s.agent = agent;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    s.objects.push_back({objects[i], static_cast<int>(i), 0.05});
  }
  return s;
}

std::size_t count_pads(const ParticleSet& set) {
  std::size_t pads = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto r = set.row(i);
    if (r[kTransparency] == 0.0) {
      ++pads;
      EXPECT_TRUE(std::all_of(r.begin(), r.end(), [](double x) { return x == 0.0; }));
    }
  }
  return pads;
}

// Reference chamfer: plain double loop over all pairs.
double brute_chamfer(const std::vector<std::vector<double>>& a,
                     const std::vector<std::vector<double>>& b) {
  auto dist = [](const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) s += std::fabs(x[d] - y[d]);
    return s;
  };
  double total = 0.0;
  for (const auto& x : a) {
    double best = std::numeric_limits<double>::max();
    for (const auto& y : b) best = std::min(best, dist(x, y));
    total += best;
  }
  for (const auto& y : b) {
    double best = std::numeric_limits<double>::max();
    for (const auto& x : a) best = std::min(best, dist(x, y));
    total += best;
  }
  return total;
}

std::vector<double> flatten(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

TEST(Views, RoundTripAndRotation) {
  Vec2 p{0.2, 0.7};
  EXPECT_EQ(to_view(0, p), p);
  Vec2 q = to_view(1, p);
  EXPECT_DOUBLE_EQ(q.x, 0.3);
  EXPECT_DOUBLE_EQ(q.y, 0.2);
  Vec2 back = from_view(1, q);
  EXPECT_NEAR(back.x, p.x, 1e-15);
  EXPECT_NEAR(back.y, p.y, 1e-15);
  EXPECT_THROW(to_view(2, p), std::invalid_argument);
}

TEST(Encode, ObjectAtOriginIdentityView) {
  num::SeededRng rng(3);
  ParticleSet set = encode_ground_truth(scene_with({{0.0, 0.0}}), 0, 8, rng);
  ASSERT_EQ(set.size(), 8u);
  ASSERT_EQ(set.data.size(), 8 * kParticleDim);
  int found = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.entity[i] != 0) continue;
    auto r = set.row(i);
    EXPECT_EQ(r[kPosX], 0.0);
    EXPECT_EQ(r[kPosY], 0.0);
    EXPECT_EQ(r[kScaleX], 0.05);
    EXPECT_EQ(r[kScaleY], 0.05);
    EXPECT_EQ(r[kDepth], 0.0);
    EXPECT_EQ(r[kTransparency], 1.0);
    EXPECT_EQ(r[kFeatures + 0], 1.0);
    ++found;
  }
  EXPECT_EQ(found, 1);
}

TEST(Encode, AgentUsesReservedSlot) {
  num::SeededRng rng(3);
  ParticleSet set = encode_ground_truth(scene_with({{0.5, 0.5}}, {0.1, 0.2}), 1, 3, rng);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.entity[i] != kAgentEntity) continue;
    auto r = set.row(i);
    EXPECT_DOUBLE_EQ(r[kPosX], 0.8);
    EXPECT_DOUBLE_EQ(r[kPosY], 0.1);
    EXPECT_EQ(r[kScaleX], 0.03);
    EXPECT_EQ(r[kFeatures + pushworld::kAgentColorSlot], 1.0);
  }
}

TEST(Encode, PadCount) {
  num::SeededRng rng(4);
  auto scene = scene_with({{0.2, 0.2}, {0.5, 0.5}, {0.8, 0.2}});
  EXPECT_EQ(count_pads(encode_ground_truth(scene, 0, 5, rng, false)), 2u);
  EXPECT_EQ(count_pads(encode_ground_truth(scene, 0, 5, rng, true)), 1u);
  EXPECT_THROW(encode_ground_truth(scene, 0, 3, rng, true), std::invalid_argument);
}

TEST(Encode, ReshuffleKeepsMultiset) {
  num::SeededRng rng(5);
  auto scene = scene_with({{0.2, 0.2}, {0.5, 0.5}, {0.8, 0.2}, {0.3, 0.7}});
  ParticleSet first = encode_ground_truth(scene, 1, 8, rng);
  bool any_reordered = false;
  for (int i = 0; i < 20; ++i) {
    ParticleSet again = encode_ground_truth(scene, 1, 8, rng);
    EXPECT_EQ(canonical_order(again).data, canonical_order(first).data);
    any_reordered |= again.data != first.data;
  }
  EXPECT_TRUE(any_reordered);
}

TEST(Normalization, EndpointsAndMidpoint) {
  std::vector<double> pmin(kParticleDim, 0.0), pmax(kParticleDim, 1.0);
  NormalizationStats s(pmin, pmax, {-2.0, 0.0}, {2.0, 0.0});
  // Rows: midpoint, max, min; the second dimension is degenerate.
  std::vector<double> a{0.0, 7.0, 2.0, 7.0, -2.0, 7.0};
  s.normalize_actions(a);
  EXPECT_EQ(a, (std::vector<double>{0.0, 0.0, 1.0, 0.0, -1.0, 0.0}));
}

TEST(Normalization, FitRoundTripClampAndMonotone) {
  num::SeededRng rng(6);
  std::vector<double> particles, actions;
  for (int i = 0; i < 50; ++i) {
    auto scene = scene_with({{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)}},
                            {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)});
    auto set = encode_ground_truth(scene, i % 2, 4, rng);
    particles.insert(particles.end(), set.data.begin(), set.data.end());
    actions.push_back(rng.uniform(-0.04, 0.04));
    actions.push_back(rng.uniform(-0.04, 0.04));
  }
  auto stats = NormalizationStats::fit(particles, actions);
  for (std::size_t d = 0; d < kParticleDim; ++d) {
    EXPECT_LE(stats.particle_min()[d], stats.particle_max()[d]);
  }

  std::vector<double> normalized = particles;
  stats.normalize_particles(normalized);
  for (double x : normalized) {
    EXPECT_GE(x, -1.0);
    EXPECT_LE(x, 1.0);
  }
  // Pads: transparency 0 is the minimum, so it always maps to -1.
  for (std::size_t r = 0; r < particles.size() / kParticleDim; ++r) {
    if (particles[r * kParticleDim + kTransparency] == 0.0) {
      EXPECT_EQ(normalized[r * kParticleDim + kTransparency], -1.0);
    }
  }

  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(kParticleDim), a(kActionDim);
    for (std::size_t d = 0; d < kParticleDim; ++d) {
      x[d] = stats.particle_max()[d] > stats.particle_min()[d]
                 ? rng.uniform(stats.particle_min()[d], stats.particle_max()[d])
                 : stats.particle_min()[d];
    }
    for (std::size_t d = 0; d < kActionDim; ++d) {
      a[d] = rng.uniform(stats.action_min()[d], stats.action_max()[d]);
    }
    auto xr = x, ar = a;
    stats.normalize_particles(xr);
    stats.denormalize_particles(xr);
    stats.normalize_actions(ar);
    stats.denormalize_actions(ar);
    for (std::size_t d = 0; d < kParticleDim; ++d) worst = std::max(worst, std::abs(xr[d] - x[d]));
    for (std::size_t d = 0; d < kActionDim; ++d) worst = std::max(worst, std::abs(ar[d] - a[d]));
  }
  EXPECT_LT(worst, 1e-12);

  std::vector<double> lo{stats.action_min()[0] - 1.0, 0.0, stats.action_min()[0], 0.0,
                         stats.action_max()[0] + 1.0, 0.0};
  stats.normalize_actions(lo);
  EXPECT_EQ(lo[0], -1.0);
  EXPECT_EQ(lo[2], -1.0);
  EXPECT_EQ(lo[4], 1.0);

  for (int trial = 0; trial < 100; ++trial) {
    double u = rng.uniform(-0.05, 0.05), v = rng.uniform(-0.05, 0.05);
    std::vector<double> pair{std::min(u, v), 0.0, std::max(u, v), 0.0};
    stats.normalize_actions(pair);
    EXPECT_LE(pair[0], pair[2]);
  }
}

TEST(Normalization, EmptyAndInvalid) {
  std::vector<double> none;
  std::vector<double> a{0.0, 0.0};
  EXPECT_THROW(NormalizationStats::fit(none, a), std::invalid_argument);
  std::vector<double> pmin(kParticleDim, 1.0), pmax(kParticleDim, 0.0);
  EXPECT_THROW(NormalizationStats(pmin, pmax, {0, 0}, {1, 1}), std::invalid_argument);
}

TEST(Chamfer, Examples) {
  std::vector<double> origin{0.0, 0.0};
  EXPECT_EQ(chamfer_l1(origin, origin, 2), 0.0);
  std::vector<double> s1{0.0, 0.0, 1.0, 1.0}, s2{1.0, 1.0};
  EXPECT_EQ(chamfer_l1(s1, s2, 2), 2.0);
  EXPECT_EQ(chamfer_l1(s2, s1, 2), 2.0);
}

TEST(Chamfer, Errors) {
  std::vector<double> a{0.0, 0.0}, empty, odd{1.0, 2.0, 3.0};
  EXPECT_THROW(chamfer_l1(a, empty, 2), std::invalid_argument);
  EXPECT_THROW(chamfer_l1(odd, a, 2), std::invalid_argument);
}

TEST(Chamfer, MatchesBruteForceOracle) {
  num::SeededRng rng(10);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t dim = 1 + rng.index(kParticleDim);
    std::size_t na = 1 + rng.index(8), nb = 1 + rng.index(8);
    std::vector<std::vector<double>> a(na, std::vector<double>(dim)),
        b(nb, std::vector<double>(dim));
    for (auto& r : a)
      for (double& x : r) x = rng.uniform(-1.0, 1.0);
    for (auto& r : b)
      for (double& x : r) x = rng.uniform(-1.0, 1.0);
    double got = chamfer_l1(flatten(a), flatten(b), dim);
    worst = std::max(worst, std::abs(got - brute_chamfer(a, b)));
    EXPECT_DOUBLE_EQ(got, chamfer_l1(flatten(b), flatten(a), dim));

    auto pa = a, pb = b;
    rng.shuffle(pa);
    rng.shuffle(pb);
    EXPECT_NEAR(chamfer_l1(flatten(pa), flatten(pb), dim), got, 1e-12);
    EXPECT_GT(got, 0.0);
    EXPECT_EQ(chamfer_l1(flatten(a), flatten(pa), dim), 0.0);
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Chamfer, LossSumsGroupsAndPassesGradCheck) {
  num::SeededRng rng(12);
  const std::size_t k = 3, groups = 2, dim = 4;
  num::Tensor pred({groups * k, dim}), target({groups * k, dim});
  for (double& x : pred.data()) x = rng.uniform(-1.0, 1.0);
  for (double& x : target.data()) x = rng.uniform(-1.0, 1.0);
  num::Var p = num::parameter(pred);
  double expected = 0.0;
  for (std::size_t g = 0; g < groups; ++g) {
    auto span_p = pred.data().subspan(g * k * dim, k * dim);
    auto span_t = target.data().subspan(g * k * dim, k * dim);
    expected += chamfer_l1(span_p, span_t, dim);
  }
  EXPECT_NEAR(chamfer_l1_loss(p, target, k).item(), expected, 1e-12);

  std::vector<num::Var> params{p};
  auto report = num::finite_diff_check([&] { return chamfer_l1_loss(p, target, k); }, params);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
  EXPECT_THROW(chamfer_l1_loss(p, target, 4), num::ShapeError);
}

}  // namespace
}  // namespace ecdiff::entities
