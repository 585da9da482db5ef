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

#include "rgd/dro_oracle.hpp"
#include "rgd/verify.hpp"

namespace rgd::dro {
namespace {

DroInstance two_point(double rho, Divergence d = Divergence::KL) {
  return {LossVector{0.0, 1.0}, DiscreteDistribution::uniform(2), rho, d};
}

// Worst-case value for losses [0, 1], uniform base and KL radius 0.05.
constexpr double kGoldenKl005 = 0.65678159836496682;

TEST(DiscreteDistribution, Validation) {
  EXPECT_THROW(DiscreteDistribution({0.5, 0.6}), InputError);
  EXPECT_THROW(DiscreteDistribution({1.2, -0.2}), InputError);
  EXPECT_THROW(DiscreteDistribution(std::vector<double>{}), InputError);
  EXPECT_NO_THROW(DiscreteDistribution({0.5, 0.5 + 5e-13}));
  EXPECT_DOUBLE_EQ(DiscreteDistribution::normalized({1, 3})[1], 0.75);
}

TEST(DroInstance, Validation) {
  auto in = two_point(-0.1);
  EXPECT_THROW(kl_dro_primal(in), InputError);
  in = {LossVector{0.0, 1.0, 2.0}, DiscreteDistribution::uniform(2), 0.1, Divergence::KL};
  EXPECT_THROW(kl_dro_primal(in), InputError);
  in = two_point(0.1, Divergence::None);
  EXPECT_THROW(solve(in), InputError);
}

TEST(KlPrimal, ZeroRadiusIsBase) {
  const auto s = kl_dro_primal(two_point(0.0));
  EXPECT_DOUBLE_EQ(s.value, 0.5);
  EXPECT_EQ(s.worst_dist.probs(), (std::vector<double>{0.5, 0.5}));
}

TEST(KlPrimal, PointMassBoundary) {
  for (double rho : {std::log(2.0), 1.0, 10.0}) {
    const auto s = kl_dro_primal(two_point(rho));
    EXPECT_EQ(s.value, 1.0);
    EXPECT_TRUE(s.boundary);
    EXPECT_EQ(s.worst_dist[1], 1.0);
  }
}

TEST(KlPrimal, GoldenValueConfirmedByBruteForce) {
  const auto in = two_point(0.05);
  const auto s = kl_dro_primal(in);
  EXPECT_GT(s.value, 0.5);
  EXPECT_LT(s.value, 1.0);
  EXPECT_NEAR(s.value, kGoldenKl005, 1e-10);
  EXPECT_NEAR(f_divergence(Divergence::KL, s.worst_dist.probs(), in.base.probs()), 0.05, 1e-10);
  EXPECT_NEAR(simplex_bruteforce(in, 2001).value, s.value, 2e-3);
  EXPECT_NEAR(kl_dro_dual(in), s.value, 1e-8);
}

TEST(KlDual, WeakDualityAndConstants) {
  const DroInstance c{LossVector{2.0, 2.0, 2.0}, DiscreteDistribution::uniform(3), 0.3,
                      Divergence::KL};
  EXPECT_DOUBLE_EQ(kl_dro_dual(c), 2.0);
  EXPECT_DOUBLE_EQ(kl_dro_primal(c).value, 2.0);
  for (double rho : {0.0, 0.01, 0.3, 2.0}) {
    const auto in = two_point(rho);
    EXPECT_GE(kl_dro_dual(in), kl_dro_primal(in).value - 1e-8);
  }
  // Near beta -> 0 the dual objective approaches the max loss.
  EXPECT_NEAR(kl_dual_objective(two_point(0.0), 1e-6), 1.0, 1e-5);
}

TEST(KlDual, SurvivesLargeLosses) {
  const DroInstance in{LossVector{0.0, 650.0, 700.0}, DiscreteDistribution::uniform(3), 0.2,
                       Divergence::KL};
  const double p = kl_dro_primal(in).value, d = kl_dro_dual(in);
  EXPECT_TRUE(std::isfinite(d));
  EXPECT_NEAR(p, d, 1e-8 * 700.0);
}

TEST(BruteForce, Limits) {
  EXPECT_NEAR(simplex_bruteforce(two_point(0.0), 2001).value, 0.5, 1e-12);
  EXPECT_NEAR(simplex_bruteforce(two_point(50.0), 2001).value, 1.0, 1e-12);
  const DroInstance big{LossVector{1, 2, 3, 4, 5}, DiscreteDistribution::uniform(5), 0.1,
                        Divergence::KL};
  EXPECT_THROW(simplex_bruteforce(big, 11), InputError);
}

TEST(FormCheck, KlTiltAndConstantLosses) {
  const auto in = two_point(0.05);
  const auto s = kl_dro_primal(in);
  const auto r = optimal_weight_form_check(in, s);
  EXPECT_TRUE(r.passed);
  EXPECT_NEAR(r.fitted_param, s.dual_param, 1e-6 * s.dual_param);
  const DroInstance c{LossVector{1.0, 1.0}, DiscreteDistribution::normalized({1, 3}), 0.4,
                      Divergence::KL};
  const auto sc = kl_dro_primal(c);
  EXPECT_EQ(sc.worst_dist.probs(), c.base.probs());
  EXPECT_TRUE(optimal_weight_form_check(c, sc).passed);
  // A distribution outside the family fails.
  EXPECT_FALSE(optimal_weight_form_check(
                   DroInstance{LossVector{0, 1, 2}, DiscreteDistribution::uniform(3), 0.1,
                               Divergence::KL},
                   std::vector<double>{0.2, 0.5, 0.3})
                   .passed);
}

TEST(FamilySolvers, TrivialCases) {
  for (Divergence d : {Divergence::Chi2, Divergence::ReverseKL}) {
    EXPECT_DOUBLE_EQ(solve(two_point(0.0, d)).value, 0.5);
    const DroInstance c{LossVector{3.0, 3.0, 3.0}, DiscreteDistribution::uniform(3), 0.4, d};
    EXPECT_DOUBLE_EQ(solve(c).value, 3.0);
    const auto big = solve(two_point(50.0, d));
    EXPECT_EQ(big.value, 1.0);
  }
  const DroInstance neg{LossVector{-1.0, 1.0}, DiscreteDistribution::uniform(2), 0.1,
                        Divergence::Chi2};
  EXPECT_THROW(chi2_dro_value(neg), InputError);
}

TEST(FamilySolvers, BruteForceWorstCaseHasAffineForm) {
  // The best grid point on a chi^2 instance sits on the affine-in-loss
  // family up to grid resolution.
  const DroInstance in{LossVector{0.5, 1.5, 4.0}, DiscreteDistribution::uniform(3), 0.2,
                       Divergence::Chi2};
  const auto bf = simplex_bruteforce(in, 2001);
  const auto sol = chi2_dro_value(in);
  EXPECT_NEAR(bf.value, sol.value, 2e-3);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(bf.argmax[i], sol.worst_dist[i], 2e-2);
  EXPECT_TRUE(optimal_weight_form_check(in, sol).passed);
}

TEST(OracleSuite, KlCertification) {
  const auto rep = verify::kl_oracle_suite({});
  EXPECT_TRUE(rep.passed()) << rep.render();
}

TEST(OracleSuite, Chi2AndReverseKl) {
  const auto rep = verify::family_oracle_suite({}, 30);
  EXPECT_TRUE(rep.passed()) << rep.render();
}

}  // namespace
}  // namespace rgd::dro
