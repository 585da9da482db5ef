// Copyright 2026 The RGD Authors.
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

#include <cmath>
#include <random>

#include "rgd/reweight.hpp"

namespace rgd {
namespace {

TEST(WeightKl, Examples) {
  EXPECT_DOUBLE_EQ(weight_kl(0.0, 1.0), 1.0);
  EXPECT_NEAR(weight_kl(10.0, 1.0), 1.648721, 1e-6);
  EXPECT_EQ(weight_kl(10.0, 1.0), std::exp(0.5));
  EXPECT_DOUBLE_EQ(weight_kl(-2.0, 1.0), 1.0);
  EXPECT_NEAR(weight_kl(3.0, 9.0), 1.349859, 1e-6);
}

TEST(WeightChi2, Examples) {
  EXPECT_DOUBLE_EQ(weight_chi2(0.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(weight_chi2(5.0, 3.0), 6.0);
  EXPECT_DOUBLE_EQ(weight_chi2(2.0, 3.0), 5.0);
}

TEST(WeightRevKl, Examples) {
  EXPECT_DOUBLE_EQ(weight_revkl(0.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(weight_revkl(1.0, 1.0), 2.0);
  EXPECT_NEAR(weight_revkl(3.0, 9.0), 10.0 / 7.0, 1e-12);
}

TEST(Weights, RejectNonFiniteLoss) {
  for (double bad : {NAN, INFINITY, -INFINITY}) {
    EXPECT_THROW(weight_kl(bad, 1.0), InputError);
    EXPECT_THROW(weight_chi2(bad, 1.0), InputError);
    EXPECT_THROW(weight_revkl(bad, 1.0), InputError);
  }
}

TEST(WeightingRule, Validation) {
  EXPECT_THROW(WeightingRule::kl(0.0), InputError);
  EXPECT_THROW(WeightingRule::kl(-1.0), InputError);
  EXPECT_THROW(WeightingRule::chi2(NAN), InputError);
  EXPECT_THROW(WeightingRule::reverse_kl(INFINITY), InputError);
  EXPECT_DOUBLE_EQ(WeightingRule::kl(1.0).gamma(), 0.5);
  EXPECT_DOUBLE_EQ(WeightingRule::reverse_kl(9.0).gamma(), 0.1);
  EXPECT_EQ(divergence_from_string("revkl"), Divergence::ReverseKL);
  EXPECT_EQ(divergence_from_string("erm"), Divergence::None);
  EXPECT_THROW(divergence_from_string("js"), InputError);
}

TEST(LossVector, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(LossVector(std::vector<double>{}), InputError);
  EXPECT_THROW((LossVector{1.0, NAN}), InputError);
  EXPECT_THROW((LossVector{INFINITY}), InputError);
}

TEST(BatchWeights, Examples) {
  const auto kl = batch_weights({0.0, 1.0, 10.0}, WeightingRule::kl(1.0));
  ASSERT_EQ(kl.size(), 3u);
  EXPECT_EQ(kl[0], 1.0);
  EXPECT_EQ(kl[1], std::exp(0.5));
  EXPECT_EQ(kl[2], std::exp(0.5));

  const auto none = batch_weights({0.3, 0.7}, WeightingRule::none());
  EXPECT_EQ(none[0], 1.0);
  EXPECT_EQ(none[1], 1.0);

  const auto rev = batch_weights({0.0, 1.0}, WeightingRule::reverse_kl(1.0));
  EXPECT_EQ(rev[0], 1.0);
  EXPECT_EQ(rev[1], 2.0);
}

TEST(WeightedObjective, Examples) {
  EXPECT_NEAR(weighted_objective({0.0, 1.0}, {1.0, std::exp(0.5)}), 0.824361, 1e-6);
  EXPECT_DOUBLE_EQ(weighted_objective({2.0, 2.0, 2.0}, {1.5, 1.5, 1.5}), 3.0);
  EXPECT_THROW(weighted_objective({1.0, 2.0}, {1.0}), InputError);
}

TEST(WeightedObjective, ErmReductionIsBitExact) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 20.0);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> l(1 + k % 17);
    for (double& v : l) v = u(rng);
    const LossVector losses(l);
    EXPECT_EQ(weighted_objective(losses, batch_weights(losses, WeightingRule::none())),
              losses.mean());
  }
}

class WeightProperties : public ::testing::TestWithParam<double> {};

TEST_P(WeightProperties, SaturationIsExact) {
  const double tau = GetParam();
  std::mt19937_64 rng(static_cast<std::uint64_t>(tau * 100));
  std::uniform_real_distribution<double> over(0.0, 1e3);
  const double kl_cap = std::exp(tau / (tau + 1.0));
  const double rev_cap = 1.0 / (1.0 - tau / (tau + 1.0));
  for (int k = 0; k < 1000; ++k) {
    const double u = tau + over(rng);
    EXPECT_EQ(weight_kl(u, tau), kl_cap);
    EXPECT_EQ(weight_chi2(u, tau), 2.0 * tau);
    EXPECT_EQ(weight_revkl(u, tau), rev_cap);
    EXPECT_TRUE(saturated(u, WeightingRule::kl(tau)));
  }
  EXPECT_EQ(weight_kl(tau, tau), kl_cap);
}

TEST_P(WeightProperties, BoundsAndMonotonicity) {
  const double tau = GetParam();
  std::mt19937_64 rng(static_cast<std::uint64_t>(tau * 1000 + 1));
  std::uniform_real_distribution<double> u(-5.0, 2.0 * tau + 5.0);
  for (int k = 0; k < 2000; ++k) {
    const double a = u(rng), b = u(rng);
    const double lo = std::min(a, b), hi = std::max(a, b);
    for (const auto& rule :
         {WeightingRule::kl(tau), WeightingRule::chi2(tau), WeightingRule::reverse_kl(tau)})
      EXPECT_LE(weight(lo, rule), weight(hi, rule));
    const double wk = weight_kl(a, tau), wr = weight_revkl(a, tau), wc = weight_chi2(a, tau);
    EXPECT_GE(wk, 1.0);
    EXPECT_LE(wk, std::exp(tau / (tau + 1.0)));
    EXPECT_LT(wk, std::exp(1.0));
    EXPECT_GE(wr, 1.0);
    EXPECT_LE(wr, tau + 1.0 + 1e-12);
    EXPECT_GE(wc, tau);
    EXPECT_LE(wc, 2.0 * tau);
  }
}

TEST_P(WeightProperties, StrictlyIncreasingInsideClip) {
  const double tau = GetParam();
  for (int k = 0; k < 100; ++k) {
    const double a = tau * k / 100.0, b = tau * (k + 1) / 100.0;
    EXPECT_LT(weight_kl(a, tau), weight_kl(b, tau));
    EXPECT_LT(weight_chi2(a, tau), weight_chi2(b, tau));
    EXPECT_LT(weight_revkl(a, tau), weight_revkl(b, tau));
  }
}

TEST_P(WeightProperties, ReverseKlDominatesKl) {
  const double tau = GetParam();
  for (int k = 1; k <= 500; ++k) {
    const double u = tau * k / 500.0;
    EXPECT_GE(weight_revkl(u, tau), weight_kl(u, tau));
  }
}

INSTANTIATE_TEST_SUITE_P(TauGrid, WeightProperties,
                         ::testing::Values(0.25, 1.0, 3.0, 5.0, 7.0, 9.0));

}  // namespace
}  // namespace rgd
