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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "ecdiff/numerics/gradcheck.hpp"
#include "ecdiff/numerics/ops.hpp"

namespace ecdiff::diffusion {
namespace {

num::Tensor random_matrix(num::SeededRng& rng, std::size_t rows, std::size_t cols) {
  num::Tensor t({rows, cols});
  for (double& x : t.data()) x = rng.uniform(-1.0, 1.0);
  return t;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= xs.size();
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= xs.size() - 1;
  return m;
}

// Checks sample moments against N(mean, var) within 3 standard errors.
void expect_gaussian_moments(const std::vector<double>& xs, double mean, double var) {
  Moments m = moments(xs);
  const double n = static_cast<double>(xs.size());
  EXPECT_LT(std::abs(m.mean - mean), 3.0 * std::sqrt(var / n)) << m.mean << " vs " << mean;
  EXPECT_LT(std::abs(m.var - var), 3.0 * var * std::sqrt(2.0 / (n - 1))) << m.var << " vs " << var;
}

TEST(Schedule, ExplicitBetas) {
  Schedule one = schedule_from_betas({0.1});
  EXPECT_DOUBLE_EQ(one.alpha_bar_at(1), 0.9);
  Schedule two = schedule_from_betas({0.1, 0.1});
  EXPECT_NEAR(two.alpha_bar_at(2), 0.81, 1e-15);
  EXPECT_THROW(schedule_from_betas({}), std::invalid_argument);
  EXPECT_THROW(schedule_from_betas({1.0}), std::invalid_argument);
  EXPECT_THROW(make_schedule(0, ScheduleKind::kCosine), std::invalid_argument);
  EXPECT_THROW(parse_schedule_kind("sigmoid"), std::invalid_argument);
}

TEST(Schedule, IdentitiesHoldForEveryKindAndLength) {
  for (ScheduleKind kind : {ScheduleKind::kCosine, ScheduleKind::kLinear}) {
    for (int steps = 1; steps <= 100; ++steps) {
      Schedule s = make_schedule(steps, kind);
      ASSERT_EQ(s.steps, steps);
      double prod = 1.0;
      for (int t = 1; t <= steps; ++t) {
        EXPECT_GT(s.beta_at(t), 0.0);
        EXPECT_LT(s.beta_at(t), 1.0);
        EXPECT_EQ(s.sigma2_at(t), s.beta_at(t));
        EXPECT_EQ(s.alpha_at(t), 1.0 - s.beta_at(t));
        prod *= s.alpha_at(t);
        EXPECT_NEAR(s.alpha_bar_at(t), prod, 1e-12);
        if (t > 1) {
          EXPECT_LT(s.alpha_bar_at(t), s.alpha_bar_at(t - 1));
        }
      }
      EXPECT_EQ(s.alpha_bar_at(1), s.alpha_at(1));
      EXPECT_GT(s.alpha_bar_at(steps), 0.0);
    }
  }
}

TEST(Schedule, CosineMatchesClosedForm) {
  Schedule s = make_schedule(5, ScheduleKind::kCosine);
  auto f = [](double u) {
    return std::pow(std::cos((u + 0.008) / 1.008 * std::numbers::pi / 2.0), 2);
  };
  for (int t = 1; t <= 4; ++t) EXPECT_NEAR(s.alpha_bar_at(t), f(t / 5.0) / f(0.0), 1e-12);
  EXPECT_NEAR(s.alpha_bar_at(1), 0.8987059205995089, 1e-12);
}

TEST(Forward, ZeroNoiseAndZeroSignal) {
  Schedule s = make_schedule(5, ScheduleKind::kCosine);
  std::vector<double> x0{0.5, -1.0}, zero{0.0, 0.0}, eps{1.0, -2.0};
  auto a = forward_sample(x0, 3, zero, s);
  EXPECT_DOUBLE_EQ(a[0], std::sqrt(s.alpha_bar_at(3)) * 0.5);
  EXPECT_DOUBLE_EQ(a[1], -std::sqrt(s.alpha_bar_at(3)));
  auto b = forward_sample(zero, 2, eps, s);
  EXPECT_DOUBLE_EQ(b[1], -2.0 * std::sqrt(1.0 - s.alpha_bar_at(2)));
  EXPECT_THROW(forward_sample(x0, 0, eps, s), std::invalid_argument);
  EXPECT_THROW(forward_sample(x0, 6, eps, s), std::invalid_argument);
}

TEST(Forward, MonteCarloMatchesClosedForm) {
  Schedule s = make_schedule(10, ScheduleKind::kCosine);
  num::SeededRng rng(21);
  const double x0 = 0.7;
  const int t = 4;
  std::vector<double> xs;
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> eps{rng.normal()};
    xs.push_back(forward_sample(std::vector<double>{x0}, t, eps, s)[0]);
  }
  expect_gaussian_moments(xs, std::sqrt(s.alpha_bar_at(t)) * x0, 1.0 - s.alpha_bar_at(t));
}

TEST(Forward, ChainedKernelsMatchClosedForm) {
  num::SeededRng rng(22);
  for (int trial = 0; trial < 3; ++trial) {
    Schedule s = make_schedule(20, trial == 1 ? ScheduleKind::kLinear : ScheduleKind::kCosine);
    const double x0 = rng.uniform(-1.0, 1.0);
    const int t = 1 + static_cast<int>(rng.index(20));
    std::vector<double> xs;
    for (int i = 0; i < 10000; ++i) {
      std::vector<double> x{x0};
      for (int k = 1; k <= t; ++k) {
        std::vector<double> z{rng.normal()};
        x = forward_step(x, k, z, s);
      }
      xs.push_back(x[0]);
    }
    expect_gaussian_moments(xs, std::sqrt(s.alpha_bar_at(t)) * x0, 1.0 - s.alpha_bar_at(t));
  }
}

// Recovers the noise exactly from x_t by inverting the forward formula.
NoiseModel oracle_model(const num::Tensor& x0, const Schedule& s) {
  return [x0, s](const num::Tensor& x_t, std::span<const int> t, const num::Tensor&) {
    num::Tensor eps(x_t.shape());
    const std::size_t dim = x_t.dim(1);
    for (std::size_t i = 0; i < x_t.size(); ++i) {
      double ab = s.alpha_bar_at(t[i / dim]);
      eps[i] = (x_t[i] - std::sqrt(ab) * x0[i]) / std::sqrt(1.0 - ab);
    }
    return num::constant(eps);
  };
}

TEST(TrainingLoss, ExactNoiseGivesZero) {
  Schedule s = make_schedule(5, ScheduleKind::kCosine);
  num::SeededRng rng(30);
  num::Tensor x0 = random_matrix(rng, 8, 20);
  num::Tensor cond({8, 1});
  EXPECT_NEAR(training_loss(oracle_model(x0, s), x0, cond, s, rng).item(), 0.0, 1e-12);
}

TEST(TrainingLoss, ZeroPredictorGivesMeanAbsNormal) {
  Schedule s = make_schedule(5, ScheduleKind::kCosine);
  num::SeededRng rng(31);
  num::Tensor x0 = random_matrix(rng, 64, 1000);
  num::Tensor cond({64, 1});
  NoiseModel zero = [](const num::Tensor& x_t, std::span<const int>, const num::Tensor&) {
    return num::constant(num::Tensor(x_t.shape()));
  };
  double loss = training_loss(zero, x0, cond, s, rng).item();
  const double expected = std::sqrt(2.0 / std::numbers::pi);
  const double se = std::sqrt(1.0 - 2.0 / std::numbers::pi) / std::sqrt(64.0 * 1000.0);
  EXPECT_LT(std::abs(loss - expected), 3.0 * se);
}

TEST(TrainingLoss, WeightedMeanMatchesDirectSum) {
  Schedule s = make_schedule(5, ScheduleKind::kCosine);
  num::SeededRng rng(33);
  num::Tensor x0 = random_matrix(rng, 6, 5);
  num::Tensor cond({6, 1});
  std::vector<int> t{1, 2, 3, 4, 5, 2};
  num::Tensor eps(x0.shape());
  rng.fill_normal(eps.data());
  NoiseModel half = [](const num::Tensor& x_t, std::span<const int>, const num::Tensor&) {
    num::Tensor out = x_t;
    for (double& v : out.data()) v *= 0.5;
    return num::constant(out);
  };
  const std::vector<double> w{1.0, 1.0, 1.0, 7.0, 7.0};
  double num_sum = 0.0;
  for (std::size_t b = 0; b < 6; ++b) {
    auto x_t = forward_sample(x0.data().subspan(b * 5, 5), t[b], eps.data().subspan(b * 5, 5), s);
    for (std::size_t i = 0; i < 5; ++i) num_sum += w[i] * std::abs(0.5 * x_t[i] - eps[b * 5 + i]);
  }
  const double expected = num_sum / (6.0 * 17.0);
  EXPECT_NEAR(training_loss(half, x0, cond, t, eps, s, w).item(), expected, 1e-12);
  const std::vector<double> ones(5, 1.0);
  EXPECT_NEAR(training_loss(half, x0, cond, t, eps, s, ones).item(),
              training_loss(half, x0, cond, t, eps, s).item(), 1e-12);
  const std::vector<double> short_w(4, 1.0);
  EXPECT_THROW(training_loss(half, x0, cond, t, eps, s, short_w), num::ShapeError);
  const std::vector<double> zero_w{1.0, 0.0, 1.0, 1.0, 1.0};
  EXPECT_THROW(training_loss(half, x0, cond, t, eps, s, zero_w), std::invalid_argument);
}

TEST(TrainingLoss, NonNegativeAndDifferentiable) {
  Schedule s = make_schedule(5, ScheduleKind::kCosine);
  num::SeededRng rng(32);
  num::Tensor x0 = random_matrix(rng, 3, 4);
  num::Tensor cond = random_matrix(rng, 3, 2);
  num::Var w = num::parameter(random_matrix(rng, 4, 4));
  num::Var u = num::parameter(random_matrix(rng, 2, 4));
  NoiseModel model = [&](const num::Tensor& x_t, std::span<const int> t, const num::Tensor& c) {
    num::Tensor shift(x_t.shape());
    for (std::size_t i = 0; i < shift.size(); ++i) shift[i] = 0.1 * t[i / x_t.dim(1)];
    num::Var h = num::add(num::matmul(num::constant(x_t), w), num::matmul(num::constant(c), u));
    return num::add(num::gelu(h), num::constant(shift));
  };
  std::vector<int> t{1, 3, 5};
  num::Tensor eps(x0.shape());
  rng.fill_normal(eps.data());
  EXPECT_GE(training_loss(model, x0, cond, t, eps, s).item(), 0.0);
  std::vector<num::Var> params{w, u};
  auto report =
      num::finite_diff_check([&] { return training_loss(model, x0, cond, t, eps, s); }, params);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
  EXPECT_LT(report.max_rel_error, 1e-4);
}

TEST(Sample, OracleRecoversDataAtOneStep) {
  Schedule s = make_schedule(1, ScheduleKind::kCosine);
  num::SeededRng rng(40);
  num::Tensor x0 = random_matrix(rng, 4, 30);
  num::Tensor cond({4, 1});
  num::Tensor out = sample(oracle_model(x0, s), cond, 30, s, rng);
  EXPECT_LT(num::max_abs_diff(out, x0), 1e-12);
}

TEST(Sample, DeterministicAndIndependentOfBatching) {
  Schedule s = make_schedule(5, ScheduleKind::kCosine);
  NoiseModel shrink = [](const num::Tensor& x_t, std::span<const int>, const num::Tensor& c) {
    num::Tensor eps(x_t.shape());
    for (std::size_t i = 0; i < x_t.size(); ++i) eps[i] = 0.3 * x_t[i] + c[i / x_t.dim(1)];
    return num::constant(eps);
  };
  num::Tensor cond = num::Tensor::matrix({{0.1}, {-0.2}});
  num::SeededRng a0(1), a1(2), b0(1), b1(2);
  std::vector<num::SeededRng*> ra{&a0, &a1};
  num::Tensor joint = sample(shrink, cond, 6, s, ra);
  std::vector<num::SeededRng*> rb{&b1};
  num::Tensor second = sample(shrink, num::Tensor::matrix({{-0.2}}), 6, s, rb);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(joint[6 + i], second[i]);
  num::SeededRng c0(1), c1(2);
  std::vector<num::SeededRng*> rc{&c0, &c1};
  EXPECT_EQ(sample(shrink, cond, 6, s, rc), joint);
  for (double v : joint.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Sample, ConditionReachesModelCleanAndUnchanged) {
  Schedule s = make_schedule(5, ScheduleKind::kCosine);
  num::SeededRng rng(41);
  num::Tensor cond = random_matrix(rng, 2, 7);
  const num::Tensor original = cond;
  int calls = 0;
  NoiseModel spy = [&](const num::Tensor& x_t, std::span<const int> t, const num::Tensor& c) {
    EXPECT_EQ(c, original);
    EXPECT_EQ(t[0], s.steps - calls);
    ++calls;
    return num::constant(num::Tensor(x_t.shape()));
  };
  sample(spy, cond, 3, s, rng);
  EXPECT_EQ(calls, 5);
  EXPECT_EQ(cond, original);
}

}  // namespace
}  // namespace ecdiff::diffusion
