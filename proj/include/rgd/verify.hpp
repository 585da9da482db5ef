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

#pragma once

// Verification suites behind the `oracle` and `gradcheck` subcommands.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rgd/dro_oracle.hpp"
#include "rgd/linalg.hpp"
#include "rgd/models.hpp"
#include "rgd/reweight.hpp"

namespace rgd::verify {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteReport {
  std::vector<Check> checks;
  double seconds = 0.0;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const Check& c) { return c.passed; });
  }

  std::string render() const {
    std::ostringstream out;
    for (const auto& c : checks)
      out << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    return out.str();
  }
};

namespace detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Records max |observed| against a tolerance.
struct MaxTracker {
  double worst = 0.0;
  std::size_t count = 0;
  void add(double v) {
    worst = std::max(worst, std::isnan(v) ? INFINITY : v);
    ++count;
  }
  Check check(std::string name, double tol) const {
    return {std::move(name), worst <= tol,
            "max " + fmt("%.3g", worst) + " (tol " + fmt("%.3g", tol) + ", " +
                std::to_string(count) + " cases)"};
  }
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// DRO oracle

struct OracleOptions {
  std::size_t n_min = 2;
  std::size_t n_max = 10;
  std::size_t trials = 200;
  double loss_max = 5.0;
  double rho_max = 0.5;
  std::uint64_t seed = 7;
  std::size_t grid_points = 2001;
  std::size_t brute_n_max = 3;
  double duality_tol = 1e-8;
  double brute_tol = 2e-3;
  double form_tol = 1e-6;
  double feasibility_tol = 1e-9;
};

/// Random instance: n ~ U{n_min..n_max}, losses ~ U[0, loss_max], base
/// uniform or a flat-Dirichlet draw (alternating), rho ~ U[0, rho_max].
inline dro::DroInstance random_instance(std::mt19937_64& rng, const OracleOptions& o,
                                        Divergence div, bool uniform_base) {
  std::uniform_int_distribution<std::size_t> size(o.n_min, o.n_max);
  std::uniform_real_distribution<double> loss(0.0, o.loss_max), rho(0.0, o.rho_max);
  std::exponential_distribution<double> gamma1(1.0);
  const std::size_t n = size(rng);
  Vector l(n);
  for (double& v : l) v = loss(rng);
  dro::DiscreteDistribution base = dro::DiscreteDistribution::uniform(n);
  if (!uniform_base) {
    Vector m(n);
    for (double& v : m) v = gamma1(rng);
    base = dro::DiscreteDistribution::normalized(std::move(m));
  }
  return {LossVector(std::move(l)), std::move(base), rho(rng), div};
}

/// KL: primal/dual agreement, weak duality, brute-force agreement for small
/// n, tilted form of the worst case, feasibility, sandwich and monotonicity
/// along a rho ladder.
inline SuiteReport kl_oracle_suite(const OracleOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(o.seed);
  detail::MaxTracker gap, weak, brute, form, feas, sandwich, ladder;
  std::size_t failures = 0;
  std::string first_failure;
  for (std::size_t k = 0; k < o.trials; ++k) {
    const auto in = random_instance(rng, o, Divergence::KL, k % 2 == 0);
    try {
      const auto primal = dro::kl_dro_primal(in);
      const double dual = dro::kl_dro_dual(in);
      gap.add(std::abs(dual - primal.value));
      weak.add(std::max(0.0, primal.value - dual));
      form.add(dro::optimal_weight_form_check(in, primal, o.form_tol).max_rel_deviation);
      feas.add(std::max(0.0, dro::f_divergence(Divergence::KL, primal.worst_dist.probs(),
                                               in.base.probs()) - in.rho));
      const double lo = in.base.expectation(in.losses);
      const double hi = *std::max_element(in.losses.begin(), in.losses.end());
      sandwich.add(std::max({0.0, lo - primal.value, primal.value - hi}) > 1e-12 ? 1.0 : 0.0);
      if (in.losses.size() <= o.brute_n_max)
        brute.add(std::abs(dro::simplex_bruteforce(in, o.grid_points).value - primal.value));
      double prev = -INFINITY;
      for (double r : {0.0, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0}) {
        dro::DroInstance step = in;
        step.rho = r;
        const double v = dro::kl_dro_primal(step).value;
        ladder.add(std::max(0.0, prev - v));
        prev = v;
      }
    } catch (const std::exception& e) {
      if (failures++ == 0) first_failure = e.what();
    }
  }
  SuiteReport rep;
  rep.checks.push_back(gap.check("kl primal-dual gap", o.duality_tol));
  rep.checks.push_back(weak.check("kl weak duality violation", o.duality_tol));
  rep.checks.push_back(brute.check("kl brute-force agreement (n <= " +
                                       std::to_string(o.brute_n_max) + ", grid " +
                                       std::to_string(o.grid_points) + ")",
                                   o.brute_tol));
  rep.checks.push_back(form.check("kl worst-case tilt form", o.form_tol));
  rep.checks.push_back(feas.check("kl divergence budget excess", o.feasibility_tol));
  rep.checks.push_back(sandwich.check("kl sandwich violations", 0.0));
  rep.checks.push_back(ladder.check("kl monotone in rho (max decrease)", 1e-9));
  rep.checks.push_back({"kl solver errors", failures == 0,
                        std::to_string(failures) +
                            (failures ? " (first: " + first_failure + ")" : "")});
  rep.seconds = detail::seconds_since(t0);
  return rep;
}

/// chi^2 and reverse KL on small instances with the empirical (uniform)
/// base: solver against brute force, solver worst case against the derived
/// family, feasibility and sandwich.
inline SuiteReport family_oracle_suite(const OracleOptions& o, std::size_t trials) {
  const auto t0 = std::chrono::steady_clock::now();
  OracleOptions small = o;
  small.n_max = std::min(o.n_max, o.brute_n_max);
  small.n_min = std::min(o.n_min, small.n_max);
  std::mt19937_64 rng(o.seed + 1);
  SuiteReport rep;
  for (Divergence div : {Divergence::Chi2, Divergence::ReverseKL}) {
    const std::string tag(to_string(div));
    detail::MaxTracker brute, form, feas, sandwich;
    std::size_t failures = 0;
    std::string first_failure;
    for (std::size_t k = 0; k < trials; ++k) {
      const auto in = random_instance(rng, small, div, true);
      try {
        const auto sol = dro::solve(in);
        brute.add(std::abs(dro::simplex_bruteforce(in, o.grid_points).value - sol.value));
        form.add(dro::optimal_weight_form_check(in, sol, o.form_tol).max_rel_deviation);
        feas.add(std::max(0.0, dro::f_divergence(div, sol.worst_dist.probs(),
                                                 in.base.probs()) - in.rho));
        const double lo = in.base.expectation(in.losses);
        const double hi = *std::max_element(in.losses.begin(), in.losses.end());
        sandwich.add(std::max({0.0, lo - sol.value, sol.value - hi}) > 1e-12 ? 1.0 : 0.0);
      } catch (const std::exception& e) {
        if (failures++ == 0) first_failure = e.what();
      }
    }
    rep.checks.push_back(brute.check(tag + " brute-force agreement", o.brute_tol));
    rep.checks.push_back(form.check(tag + " worst-case family form", o.form_tol));
    rep.checks.push_back(feas.check(tag + " divergence budget excess", o.feasibility_tol));
    rep.checks.push_back(sandwich.check(tag + " sandwich violations", 0.0));
    rep.checks.push_back({tag + " solver errors", failures == 0,
                          std::to_string(failures) +
                              (failures ? " (first: " + first_failure + ")" : "")});
  }
  rep.seconds = detail::seconds_since(t0);
  return rep;
}

// ---------------------------------------------------------------------------
// Gradients

struct GradcheckOptions {
  std::size_t trials = 50;  // per model kind
  std::uint64_t seed = 11;
  double h = 1e-5;
  double tol = 1e-5;
};

/// ||a - b|| / max(||b||, 1e-12).
inline double relative_l2(const Vector& a, const Vector& b) {
  Vector d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return norm2(d) / std::max(norm2(b), 1e-12);
}

/// One random (model, batch, weights) triple; returns the relative error of
/// the analytic weighted gradient against central differences of the
/// frozen-weight objective (1/B) sum_i w_i loss_i(theta).
inline double gradcheck_trial(ModelKind kind, std::mt19937_64& rng, double h) {
  std::uniform_int_distribution<std::size_t> dim(1, 6), classes(2, 5), width(1, 6),
      bsize(1, 8), depth(1, 2);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t d = dim(rng), B = bsize(rng);
  ModelShape shape;
  shape.kind = kind;
  shape.input_dim = d;
  if (kind == ModelKind::LinearRegression) {
    shape.regression_loss =
        unit(rng) < 0.5 ? RegressionLoss::Squared : RegressionLoss::HalfSquared;
  } else {
    shape.classes = classes(rng);
    if (kind == ModelKind::MLP)
      for (std::size_t i = 0, n = depth(rng); i < n; ++i) shape.hidden.push_back(width(rng));
  }
  Vector theta(shape.param_count());
  for (double& v : theta) v = 0.7 * gauss(rng);
  const ModelState model(shape, theta);

  Matrix X(B, d);
  for (double& v : X.data()) v = gauss(rng);
  const Batch batch = [&] {
    if (kind == ModelKind::LinearRegression) {
      Vector y(B);
      for (double& v : y) v = gauss(rng);
      return Batch::regression(std::move(X), std::move(y));
    }
    std::uniform_int_distribution<std::size_t> label(0, shape.classes - 1);
    std::vector<std::size_t> y(B);
    for (auto& v : y) v = label(rng);
    return Batch::classification(std::move(X), std::move(y), shape.classes);
  }();

  // Weights from a random rule at the current parameters, then frozen.
  const LossVector losses = per_sample_loss(model, batch);
  const Divergence divs[] = {Divergence::KL, Divergence::Chi2, Divergence::ReverseKL,
                             Divergence::None};
  const Divergence div = divs[std::uniform_int_distribution<int>(0, 3)(rng)];
  const WeightingRule rule =
      div == Divergence::None ? WeightingRule::none()
                              : WeightingRule(div, 0.5 + 8.5 * unit(rng));
  const WeightVector w = batch_weights(losses, rule);

  const Vector analytic = weighted_grad(model, batch, w);
  const double Bd = static_cast<double>(B);
  auto objective = [&](const Vector& th) {
    const LossVector l = per_sample_loss(model.with_theta(th), batch);
    double s = 0.0;
    for (std::size_t i = 0; i < B; ++i) s += w[i] * l[i];
    return s / Bd;
  };
  return relative_l2(analytic, finite_diff_grad(objective, theta, h));
}

inline SuiteReport gradcheck_suite(const GradcheckOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(o.seed);
  SuiteReport rep;
  for (ModelKind k :
       {ModelKind::LinearRegression, ModelKind::SoftmaxClassifier, ModelKind::MLP}) {
    detail::MaxTracker err;
    for (std::size_t t = 0; t < o.trials; ++t) err.add(gradcheck_trial(k, rng, o.h));
    rep.checks.push_back(err.check(std::string(to_string(k)) + " gradient relative L2", o.tol));
  }
  rep.seconds = detail::seconds_since(t0);
  return rep;
}

}  // namespace rgd::verify
