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

// Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
// exits nonzero when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rgd/rgd.hpp"

#ifndef RGD_CONFIG_DIR
#error "RGD_CONFIG_DIR must point at the sample configs"
#endif

namespace {

using namespace rgd;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ExperimentConfig shipped(const std::string& name, std::uint64_t seed) {
  ExperimentConfig c = load_experiment(std::string(RGD_CONFIG_DIR) + "/" + name);
  c.dataset.seed = seed;
  c.model.init_seed = seed;
  c.train.seed = seed;
  c.output.clear();
  return c;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// 1. Duality certification.
Outcome duality() {
  const verify::OracleOptions o;  // 200 instances, n in [2,10], rho <= 0.5
  const auto rep = verify::kl_oracle_suite(o);
  bool ok = rep.seconds < 30.0;
  std::string detail;
  for (const auto& c : rep.checks) {
    if (c.name.find("tilt form") != std::string::npos) continue;  // criterion 2
    ok = ok && c.passed;
    if (c.name.find("gap") != std::string::npos || c.name.find("brute") != std::string::npos)
      detail += c.name + " " + c.detail + "; ";
    else if (!c.passed)
      detail += c.name + " FAILED " + c.detail + "; ";
  }
  return {ok, detail + fmt("%.1f s (limit 30 s)", rep.seconds)};
}

// 2. Optimal-weight form.
Outcome weight_form() {
  const verify::OracleOptions o;
  const auto kl = verify::kl_oracle_suite(o);
  const auto fam = verify::family_oracle_suite(o, 60);
  bool ok = fam.passed();
  std::string detail;
  for (const auto& c : kl.checks)
    if (c.name.find("tilt form") != std::string::npos) {
      ok = ok && c.passed;
      detail += c.name + " " + c.detail + "; ";
    }
  for (const auto& c : fam.checks)
    if (c.name.find("form") != std::string::npos || c.name.find("brute") != std::string::npos ||
        !c.passed)
      detail += c.name + " " + c.detail + "; ";
  return {ok, detail};
}

// 3. Gradient correctness.
Outcome gradients() {
  const auto rep = verify::gradcheck_suite({});
  std::string detail;
  for (const auto& c : rep.checks) detail += c.name + " " + c.detail + "; ";
  return {rep.passed() && rep.seconds < 10.0,
          detail + fmt("%.2f s (limit 10 s)", rep.seconds)};
}

// 4. ERM reduction, both through the harness and against a hand-rolled
// optimizer loop on the mean gradient.
Outcome erm_reduction() {
  const char* configs[] = {
      R"({"dataset": {"generator": "rare_feature_regression", "seed": 11},
          "model": {"kind": "linear"},
          "train": {"optimizer": "sgd", "lr": 0.3, "steps": 200, "batch_size": 17, "seed": 1},
          "method": {"kind": "rgd", "divergence": "none"},
          "eval_every": 7, "metrics": ["loss", "rare_l2"]})",
      R"({"dataset": {"generator": "gaussian_mixture", "seed": 12, "classes": 4,
                      "n_per_class": 50, "dim": 6, "flip_fraction": 0.2},
          "model": {"kind": "softmax"},
          "train": {"optimizer": "adam", "lr": 0.01, "steps": 200, "batch_size": 32, "seed": 2},
          "method": {"kind": "rgd", "divergence": "none"},
          "eval_every": 5, "metrics": ["loss", "accuracy"]})",
      R"({"dataset": {"generator": "gaussian_mixture", "seed": 13, "classes": 3,
                      "n_per_class": 60, "dim": 5},
          "model": {"kind": "mlp", "hidden": [8, 4], "init_seed": 3},
          "train": {"optimizer": "sgd", "lr": 0.5, "schedule": "inv_sqrt_t", "steps": 200,
                    "batch_size": 20, "seed": 3, "box": [-2, 2]},
          "method": {"kind": "rgd", "divergence": "none"},
          "eval_every": 3, "metrics": ["loss", "accuracy"]})"};
  std::size_t identical = 0;
  for (const char* text : configs) {
    const ExperimentConfig rgd = parse_experiment(Json::parse(text));
    ExperimentConfig erm = rgd;
    erm.method.kind = Method::Erm;
    const ExperimentData data = prepare_data(rgd.dataset);
    const bool traces_equal =
        trace_to_csv(run_experiment(rgd, data).trace) == trace_to_csv(run_experiment(erm, data).trace);

    TrainConfig tc = rgd.train;
    tc.steps = rgd.steps;
    OptimizerState a(initial_model(rgd.model, data.train)), b = a;
    MinibatchStream stream(data.train.size(), tc.batch_size, tc.seed);
    bool steps_equal = true;
    for (std::size_t t = 1; t <= rgd.steps && steps_equal; ++t) {
      const Batch batch = data.train.batch(stream.next());
      a = rgd_step(std::move(a), batch, WeightingRule::none(), tc);
      const Vector g = mean_grad(b.model, batch);
      const double lr = lr_at(tc.schedule, tc.lr_base, t, tc.steps);
      b = tc.optimizer == OptimizerKind::SGD ? sgd_step(std::move(b), g, lr, tc.box)
                                             : adam_step(std::move(b), g, lr, tc.adam, tc.box);
      steps_equal = a.model.theta() == b.model.theta() && a.m == b.m && a.v == b.v;
    }
    identical += traces_equal && steps_equal;
  }
  return {identical == 3, std::to_string(identical) +
                              "/3 configs bit-identical (linear/SGD, softmax/Adam, "
                              "MLP/SGD with inv-sqrt schedule and box)"};
}

// 5. Toy rare-feature regression.
Outcome toy_regression() {
  const auto t0 = Clock::now();
  std::vector<double> rare_sgd, rare_rgd, freq_sgd, freq_rgd;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = run_experiment(shipped("toy_sgd.json", seed)).summary.final_metrics;
    const auto r = run_experiment(shipped("toy_rgd.json", seed)).summary.final_metrics;
    rare_sgd.push_back(s.at("train.rare_l2"));
    rare_rgd.push_back(r.at("train.rare_l2"));
    freq_sgd.push_back(s.at("train.frequent_l2"));
    freq_rgd.push_back(r.at("train.frequent_l2"));
  }
  const double rs = mean(rare_sgd), rr = mean(rare_rgd);
  const double fs = mean(freq_sgd), fr = mean(freq_rgd);
  const double secs = seconds_since(t0);
  const bool freq_close = std::abs(fs - fr) <= 0.1 * std::max(fs, fr);
  return {rr < rs && freq_close && secs < 60.0,
          "rare L2 RGD " + fmt("%.4g", rr) + " vs SGD " + fmt("%.4g", rs) +
              "; frequent L2 RGD " + fmt("%.4g", fr) + " vs SGD " + fmt("%.4g", fs) +
              " (must differ by < 10%); " + fmt("%.1f s (limit 60 s)", secs)};
}

// 6. Clipping robustness under label noise.
Outcome label_noise() {
  const auto t0 = Clock::now();
  std::vector<double> rgd, term, ma;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    rgd.push_back(run_experiment(shipped("label_noise_rgd.json", seed))
                      .summary.final_metrics.at("test.accuracy"));
    term.push_back(run_experiment(shipped("label_noise_term.json", seed))
                       .summary.final_metrics.at("test.accuracy"));
    ma.push_back(run_experiment(shipped("label_noise_ma.json", seed))
                     .summary.final_metrics.at("test.accuracy"));
  }
  const double r = mean(rgd), t = mean(term), m = mean(ma);
  const double secs = seconds_since(t0);
  return {r - t >= 0.02 && r > m && secs < 300.0,
          "mean test accuracy RGD " + fmt("%.2f%%", 100 * r) + ", TERM " +
              fmt("%.2f%%", 100 * t) + ", moving average " + fmt("%.2f%%", 100 * m) +
              "; margin over TERM " + fmt("%.2f pp (need >= 2)", 100 * (r - t)) + "; " +
              fmt("%.1f s (limit 300 s)", secs)};
}

// 7. Convergence rate with eta_t = C / sqrt(t).
Outcome convergence() {
  const auto t0 = Clock::now();
  constexpr std::size_t n = 200, d = 3, kRuns = 20, T = 10000;
  constexpr double tau = 30.0;  // residuals stay below 5, so no loss reaches the clip
  const double gamma = 1.0 / (tau + 1.0);
  const Box box{-1.0, 1.0};

  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Matrix x(n, d);
  for (double& v : x.data()) v = unit(rng);
  Vector theta0(d), y(n);
  for (double& v : theta0) v = 0.5 * unit(rng);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x(i, j) * theta0[j];
    y[i] = s + 0.5 * unit(rng);
  }
  Dataset data;
  data.inputs = x;
  data.targets = y;
  const Batch full = data.all();
  const ModelState init = make_linear(d);
  auto surrogate = [&](const ModelState& m) {
    return term_objective(per_sample_loss(m, full), gamma);
  };

  // Reference optimum: 1e6 projected full-batch gradient steps on the
  // surrogate itself.
  Vector ref(d, 0.0);
  for (std::size_t k = 0; k < 1000000; ++k) {
    const Vector g = term_grad(init.with_theta(ref), full, gamma);
    for (std::size_t j = 0; j < d; ++j) ref[j] -= 0.2 * g[j];
    box.project(ref);
  }
  const double f_star = surrogate(init.with_theta(ref));

  const std::vector<std::size_t> checkpoints{100, 200, 500, 1000, 2000, 5000, 10000};
  std::vector<double> gap(checkpoints.size(), 0.0);
  double max_loss = 0.0;
  TrainConfig tc;
  tc.lr_base = 0.1;
  tc.schedule = Schedule::InvSqrtPerStep;
  tc.steps = T;
  tc.batch_size = 4;
  tc.box = box;
  const WeightingRule rule = WeightingRule::kl(tau);
  for (std::size_t run = 0; run < kRuns; ++run) {
    // i.i.d. draws with replacement, the sampling model of the rate bound.
    OptimizerState s(init);
    std::mt19937_64 draw(100 + run);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> idx(tc.batch_size);
    std::size_t next = 0;
    for (std::size_t t = 1; t <= T; ++t) {
      for (auto& i : idx) i = pick(draw);
      StepReport rep;
      s = rgd_step(std::move(s), data.batch(idx), rule, tc, &rep);
      for (double l : rep.losses) max_loss = std::max(max_loss, l);
      if (t == checkpoints[next]) {
        gap[next] += (surrogate(s.model) - f_star) / static_cast<double>(kRuns);
        ++next;
      }
    }
  }
  // Least-squares slope of log(gap) against log(T).
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < gap.size(); ++k) {
    lx.push_back(std::log(static_cast<double>(checkpoints[k])));
    ly.push_back(std::log(std::max(gap[k], 1e-300)));
  }
  const double mx = mean(lx), my = mean(ly);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
  }
  const double slope = sxy / sxx;
  const bool positive = std::all_of(gap.begin(), gap.end(), [](double g) { return g > 0.0; });
  const double secs = seconds_since(t0);
  return {positive && slope <= -0.4 && max_loss < tau && secs < 120.0,
          "fitted slope " + fmt("%.3f", slope) + " (need <= -0.4); gap at T=1e2 " +
              fmt("%.3g", gap.front()) + ", at T=1e4 " + fmt("%.3g", gap.back()) +
              "; max loss seen " + fmt("%.2f", max_loss) + " < tau " + fmt("%g", tau) +
              "; " + fmt("%.1f s (limit 120 s)", secs)};
}

// 8. Weight saturation.
Outcome saturation() {
  std::mt19937_64 rng(8);
  std::size_t exact = 0, total = 0;
  for (double tau : {1.0, 3.0, 5.0, 7.0, 9.0}) {
    std::uniform_real_distribution<double> u(tau, tau + 1e4);
    const double cap = std::exp(tau / (tau + 1.0));
    for (int k = 0; k < 1000; ++k, ++total) exact += weight_kl(u(rng), tau) == cap;
  }
  return {exact == total, std::to_string(exact) + "/" + std::to_string(total) +
                              " saturated weights exactly e^{tau/(tau+1)}"};
}

// 9. Runtime parity on the MLP.
Outcome runtime_parity() {
  constexpr std::size_t B = 64, d = 20, C = 10, kSteps = 1000;
  const auto ds = gaussian_mixture_classification(C, 200, d, 3.0, 5);
  MinibatchStream stream(ds.size(), B, 6);
  std::vector<Batch> batches;
  for (std::size_t k = 0; k < kSteps + 50; ++k) batches.push_back(ds.batch(stream.next()));
  TrainConfig tc;
  tc.lr_base = 0.05;
  tc.steps = kSteps + 50;
  OptimizerState a(make_mlp(d, {64}, C, 7)), b = a;
  const WeightingRule rule = WeightingRule::kl(1.0);
  std::vector<double> t_rgd, t_sgd;
  // Interleaved so that both see the same machine state.
  for (std::size_t k = 0; k < kSteps + 50; ++k) {
    auto s0 = Clock::now();
    a = rgd_step(std::move(a), batches[k], rule, tc);
    const double r = seconds_since(s0);
    s0 = Clock::now();
    b = erm_step(std::move(b), batches[k], tc);
    const double s = seconds_since(s0);
    if (k >= 50) {
      t_rgd.push_back(r);
      t_sgd.push_back(s);
    }
  }
  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    return v[v.size() / 2];
  };
  const double mr = median(t_rgd), ms = median(t_sgd);
  return {mr <= 1.2 * ms, "median step RGD " + fmt("%.1f us", mr * 1e6) + ", SGD " +
                              fmt("%.1f us", ms * 1e6) + ", ratio " + fmt("%.3f", mr / ms) +
                              " (limit 1.2)"};
}

// 10. Long-tailed counts.
Outcome long_tailed() {
  const auto counts = long_tailed_counts(10, 5000, 100);
  const auto full = gaussian_mixture_classification(10, 5000, 10, 3.0, 10);
  const auto lt = subsample_long_tailed(full, counts, 11);
  const auto [mn, mx] = std::minmax_element(lt.meta.class_counts.begin(), lt.meta.class_counts.end());
  const double IF = static_cast<double>(*mx) / static_cast<double>(*mn);
  const bool ok = counts.front() == 5000 && counts.back() == 50 && IF == 100.0 &&
                  lt.meta.class_counts == Dataset::count_classes(lt.labels, 10) &&
                  lt.meta.class_counts == counts;
  return {ok, "endpoints " + std::to_string(counts.front()) + " and " +
                  std::to_string(counts.back()) + "; dataset largest/smallest = " +
                  fmt("%g", IF)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"duality certification", duality},
      {"optimal-weight form", weight_form},
      {"gradient correctness", gradients},
      {"ERM reduction", erm_reduction},
      {"toy rare-feature regression", toy_regression},
      {"label-noise robustness", label_noise},
      {"convergence rate", convergence},
      {"weight saturation", saturation},
      {"runtime parity", runtime_parity},
      {"long-tailed counts", long_tailed}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.passed;
    std::printf("%s criterion %zu (%s): %s\n", o.passed ? "PASS" : "FAIL", i + 1,
                criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
