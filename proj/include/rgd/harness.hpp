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

// Experiment orchestration: config parsing, the seeded training loop,
// evaluation, hyperparameter sweeps and trace aggregation.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "rgd/config.hpp"
#include "rgd/datagen.hpp"
#include "rgd/errors.hpp"
#include "rgd/models.hpp"
#include "rgd/optim.hpp"
#include "rgd/reweight.hpp"
#include "rgd/trace.hpp"

namespace rgd {

// ---------------------------------------------------------------------------
// Configuration

struct DatasetSpec {
  std::string generator = "gaussian_mixture";
  std::uint64_t seed = 0;
  // gaussian_mixture
  std::size_t classes = 10;
  std::size_t n_per_class = 500;
  std::size_t dim = 20;
  double separation = 3.0;
  std::size_t test_per_class = 0;
  double imbalance_factor = 1.0;
  double flip_fraction = 0.0;
  // both
  double holdout_fraction = 0.0;
};

struct ModelSpec {
  ModelKind kind = ModelKind::SoftmaxClassifier;
  std::vector<std::size_t> hidden;
  std::uint64_t init_seed = 0;
  RegressionLoss regression_loss = RegressionLoss::Squared;
};

enum class Method { Erm, Rgd, Term, MovingAverage, ExpAblation };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::Erm: return "erm";
    case Method::Rgd: return "rgd";
    case Method::Term: return "term";
    case Method::MovingAverage: return "ma_exp";
    case Method::ExpAblation: return "exp_ablation";
  }
  return "?";
}

inline Method method_from_string(std::string_view s) {
  if (s == "erm") return Method::Erm;
  if (s == "rgd") return Method::Rgd;
  if (s == "term") return Method::Term;
  if (s == "ma_exp") return Method::MovingAverage;
  if (s == "exp_ablation") return Method::ExpAblation;
  throw InputError("unknown method '" + std::string(s) + "'");
}

struct MethodSpec {
  Method kind = Method::Erm;
  WeightingRule rule = WeightingRule::none();  // rgd
  double t_tilt = 1.0;                         // term
  double lambda = 1.0;                         // ma_exp
  double beta_ma = 0.5;                        // ma_exp
  double gamma = 0.5;                          // exp_ablation
  double clip = std::numeric_limits<double>::infinity();  // exp_ablation
};

struct ExperimentConfig {
  DatasetSpec dataset;
  ModelSpec model;
  TrainConfig train;
  std::size_t steps = 1;  // may be 0: evaluation only
  MethodSpec method;
  std::size_t eval_every = 10;
  std::vector<std::string> metrics{"loss"};
  std::string output;  // empty: no file written
  TraceFormat format = TraceFormat::Csv;
};

inline const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> m{
      "loss", "mse", "accuracy", "rare_l2", "frequent_l2", "param_l2"};
  return m;
}

namespace detail {

inline DatasetSpec parse_dataset(ObjectReader r) {
  DatasetSpec d;
  d.generator = r.required<std::string>("generator");
  d.seed = r.required<std::uint64_t>("seed");
  if (d.generator == "gaussian_mixture") {
    d.classes = r.optional<std::size_t>("classes", d.classes);
    d.n_per_class = r.optional<std::size_t>("n_per_class", d.n_per_class);
    d.dim = r.optional<std::size_t>("dim", d.dim);
    d.separation = r.optional<double>("separation", d.separation);
    d.test_per_class = r.optional<std::size_t>("test_per_class", d.test_per_class);
    d.imbalance_factor = r.optional<double>("imbalance_factor", d.imbalance_factor);
    d.flip_fraction = r.optional<double>("flip_fraction", d.flip_fraction);
  } else if (d.generator != "rare_feature_regression") {
    r.fail("generator", "unknown generator '" + d.generator + "'");
  }
  d.holdout_fraction = r.optional<double>("holdout_fraction", 0.0);
  if (d.holdout_fraction < 0.0 || d.holdout_fraction >= 1.0)
    r.fail("holdout_fraction", "must lie in [0, 1)");
  r.finish();
  return d;
}

inline ModelSpec parse_model(ObjectReader r) {
  ModelSpec m;
  try {
    m.kind = model_kind_from_string(r.required<std::string>("kind"));
  } catch (const ConfigError&) {
    throw;
  } catch (const InputError& e) {
    r.fail("kind", e.what());
  }
  m.hidden = r.optional<std::vector<std::size_t>>("hidden", {});
  m.init_seed = r.optional<std::uint64_t>("init_seed", 0);
  const std::string loss = r.optional<std::string>("loss", "squared");
  if (loss == "squared")
    m.regression_loss = RegressionLoss::Squared;
  else if (loss == "half_squared")
    m.regression_loss = RegressionLoss::HalfSquared;
  else
    r.fail("loss", "expected 'squared' or 'half_squared'");
  r.finish();
  return m;
}

inline std::pair<TrainConfig, std::size_t> parse_train(ObjectReader r) {
  TrainConfig t;
  try {
    t.optimizer = optimizer_from_string(r.optional<std::string>("optimizer", "sgd"));
  } catch (const InputError& e) {
    r.fail("optimizer", e.what());
  }
  t.lr_base = r.required<double>("lr");
  try {
    t.schedule = schedule_from_string(r.optional<std::string>("schedule", "constant"));
  } catch (const InputError& e) {
    r.fail("schedule", e.what());
  }
  const auto steps = r.required<std::size_t>("steps");
  t.steps = std::max<std::size_t>(1, steps);
  t.batch_size = r.required<std::size_t>("batch_size");
  t.seed = r.required<std::uint64_t>("seed");
  if (r.has("adam")) {
    ObjectReader a = r.child("adam");
    t.adam.beta1 = a.optional<double>("beta1", t.adam.beta1);
    t.adam.beta2 = a.optional<double>("beta2", t.adam.beta2);
    t.adam.epsilon = a.optional<double>("epsilon", t.adam.epsilon);
    a.finish();
  }
  if (r.has("box")) {
    auto b = r.optional<std::vector<double>>("box", {});
    if (b.size() != 2) r.fail("box", "expected [lo, hi]");
    t.box = Box{b[0], b[1]};
  }
  r.finish();
  try {
    t.validate();
  } catch (const InputError& e) {
    throw ConfigError(r.path() + ": " + e.what());
  }
  return {t, steps};
}

inline MethodSpec parse_method(ObjectReader r) {
  MethodSpec m;
  try {
    m.kind = method_from_string(r.required<std::string>("kind"));
  } catch (const ConfigError&) {
    throw;
  } catch (const InputError& e) {
    r.fail("kind", e.what());
  }
  try {
    switch (m.kind) {
      case Method::Erm: break;
      case Method::Rgd: {
        const auto div = divergence_from_string(r.optional<std::string>("divergence", "kl"));
        m.rule = WeightingRule(div, r.optional<double>("tau", 1.0));
        break;
      }
      case Method::Term:
        m.t_tilt = r.required<double>("t_tilt");
        if (!(m.t_tilt > 0.0)) r.fail("t_tilt", "must be > 0");
        break;
      case Method::MovingAverage:
        m.lambda = r.required<double>("lambda");
        m.beta_ma = r.required<double>("beta_ma");
        MovingAverageState(m.lambda, m.beta_ma);
        break;
      case Method::ExpAblation:
        m.gamma = r.required<double>("gamma");
        if (!(m.gamma > 0.0)) r.fail("gamma", "must be > 0");
        if (r.has("clip")) m.clip = r.required<double>("clip");
        if (!(m.clip > 0.0)) r.fail("clip", "must be > 0");
        break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const InputError& e) {
    throw ConfigError(r.path() + ": " + e.what());
  }
  r.finish();
  return m;
}

}  // namespace detail

inline ExperimentConfig parse_experiment(const Json& j,
                                         std::shared_ptr<const ConfigSource> src = nullptr) {
  ObjectReader r(j, "", src);
  ExperimentConfig c;
  c.dataset = detail::parse_dataset(r.child("dataset"));
  c.model = detail::parse_model(r.child("model"));
  std::tie(c.train, c.steps) = detail::parse_train(r.child("train"));
  c.method = detail::parse_method(r.child("method"));
  c.train.rule = c.method.kind == Method::Rgd ? c.method.rule : WeightingRule::none();
  c.eval_every = r.optional<std::size_t>("eval_every", 10);
  if (c.eval_every == 0) r.fail("eval_every", "must be >= 1");
  c.metrics = r.optional<std::vector<std::string>>("metrics", {"loss"});
  for (const auto& m : c.metrics)
    if (std::find(known_metrics().begin(), known_metrics().end(), m) ==
        known_metrics().end())
      r.fail("metrics", "unknown metric '" + m + "'");
  c.output = r.optional<std::string>("output", "");
  try {
    c.format = trace_format_from_string(r.optional<std::string>("format", "csv"));
  } catch (const InputError& e) {
    r.fail("format", e.what());
  }
  r.finish();

  const bool regression = c.dataset.generator == "rare_feature_regression";
  if (regression != (c.model.kind == ModelKind::LinearRegression))
    r.fail("model", "model kind does not match the dataset");
  for (const auto& m : c.metrics) {
    if (m == "accuracy" && regression) r.fail("metrics", "accuracy needs a classifier");
    if (m == "mse" && !regression) r.fail("metrics", "mse needs a regression model");
    if ((m == "rare_l2" || m == "frequent_l2" || m == "param_l2") && !regression)
      r.fail("metrics", m + " needs a ground-truth parameter");
  }
  return c;
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  auto src = std::make_shared<const ConfigSource>(path.string(), std::move(text));
  return parse_experiment(src->parse(), src);
}

// ---------------------------------------------------------------------------
// Data

/// splitmix64 finalizer; derives independent sub-seeds from one seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct ExperimentData {
  Dataset train;
  std::optional<Dataset> holdout;
  std::optional<Dataset> test;
};

inline ExperimentData prepare_data(const DatasetSpec& spec) {
  ExperimentData out;
  Dataset pool;
  if (spec.generator == "rare_feature_regression") {
    pool = rare_feature_regression(spec.seed);
  } else {
    pool = gaussian_mixture_classification(spec.classes, spec.n_per_class,
                                           spec.dim, spec.separation, spec.seed);
    if (spec.imbalance_factor > 1.0)
      pool = subsample_long_tailed(
          pool,
          long_tailed_counts(spec.classes, spec.n_per_class, spec.imbalance_factor),
          derive_seed(spec.seed, 1));
    if (spec.flip_fraction > 0.0)
      pool = flip_labels(pool, spec.flip_fraction, derive_seed(spec.seed, 2));
    if (spec.test_per_class > 0)
      out.test = gaussian_mixture_classification(
          spec.classes, spec.test_per_class, spec.dim, spec.separation,
          derive_seed(spec.seed, 4));
  }
  if (spec.holdout_fraction > 0.0) {
    auto [tr, ho] = split(pool, 1.0 - spec.holdout_fraction, derive_seed(spec.seed, 3));
    out.train = std::move(tr);
    out.holdout = std::move(ho);
  } else {
    out.train = std::move(pool);
  }
  return out;
}

inline ModelState initial_model(const ModelSpec& spec, const Dataset& train) {
  const std::size_t d = train.dim();
  switch (spec.kind) {
    case ModelKind::LinearRegression: return make_linear(d, spec.regression_loss);
    case ModelKind::SoftmaxClassifier: return make_softmax(d, train.classes);
    case ModelKind::MLP:
      return make_mlp(d, spec.hidden, train.classes, spec.init_seed);
  }
  throw InputError("initial_model: unknown kind");
}

/// Epoch-shuffled minibatches drawn without replacement; a new permutation
/// starts whenever fewer than B unused samples remain.
class MinibatchStream {
 public:
  MinibatchStream(std::size_t n, std::size_t batch, std::uint64_t seed)
      : order_(n), batch_(batch), rng_(seed) {
    if (batch == 0 || batch > n)
      throw InputError("batch size " + std::to_string(batch) +
                       " must lie in [1, " + std::to_string(n) + "]");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
  }

  std::span<const std::size_t> next() {
    if (pos_ + batch_ > order_.size()) reshuffle();
    std::span<const std::size_t> out(order_.data() + pos_, batch_);
    pos_ += batch_;
    return out;
  }

  std::size_t epoch() const noexcept { return epoch_; }

 private:
  void reshuffle() {
    std::shuffle(order_.begin(), order_.end(), rng_);
    pos_ = 0;
    ++epoch_;
  }

  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t pos_ = 0;
  std::size_t epoch_ = 0;
  std::mt19937_64 rng_;
};

/// Column-oriented CSV: x0..x{d-1} then `y` (regression) or `label`.
inline std::string dataset_to_csv(const Dataset& ds) {
  std::ostringstream out;
  for (std::size_t j = 0; j < ds.dim(); ++j) out << 'x' << j << ',';
  out << (ds.is_classification() ? "label" : "y") << '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.inputs.row(i)) out << format_double(v) << ',';
    if (ds.is_classification())
      out << ds.labels[i];
    else
      out << format_double(ds.targets[i]);
    out << '\n';
  }
  return out.str();
}

inline Json dataset_meta_to_json(const Dataset& ds) {
  const auto& m = ds.meta;
  Json j;
  j["generator"] = m.generator;
  j["seed"] = m.seed;
  j["n"] = ds.size();
  j["dim"] = ds.dim();
  if (ds.is_classification()) {
    j["classes"] = ds.classes;
    j["class_counts"] = m.class_counts;
  }
  if (m.theta_star) j["theta_star"] = *m.theta_star;
  if (!m.frequent_features.empty()) j["frequent_features"] = m.frequent_features;
  if (!m.rare_features.empty()) j["rare_features"] = m.rare_features;
  if (!m.flipped.empty()) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < m.flipped.size(); ++i)
      if (m.flipped[i]) rows.push_back(i);
    j["flipped_rows"] = rows;
  }
  return j;
}

/// Writes `<stem>.csv` and `<stem>.meta.json`.
inline void export_dataset(const Dataset& ds, const std::filesystem::path& stem) {
  write_text_file(stem.string() + ".csv", dataset_to_csv(ds));
  write_text_file(stem.string() + ".meta.json", dataset_meta_to_json(ds).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Metrics

/// sqrt(sum_{i in idx} (theta_i - theta*_i)^2).
inline double direction_l2(std::span<const double> theta,
                           std::span<const double> theta_star,
                           std::span<const std::size_t> idx) {
  if (theta.size() != theta_star.size())
    throw InputError("direction_l2: parameter lengths differ");
  double s = 0.0;
  for (std::size_t i : idx) {
    if (i >= theta.size())
      throw InputError("direction_l2: index " + std::to_string(i) + " out of range");
    const double d = theta[i] - theta_star[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double accuracy(const ModelState& model, const Dataset& ds) {
  if (!model.shape().is_classifier() || !ds.is_classification())
    throw InputError("accuracy: needs a classifier and a classification dataset");
  ForwardPass fwd(model, ds.all());
  const Matrix& z = fwd.outputs();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto row = z.row(i);
    const auto best = static_cast<std::size_t>(
        std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == ds.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

/// Mean of (x^T theta - y)^2, independent of the training loss scaling.
inline double mse(const ModelState& model, const Dataset& ds) {
  if (model.kind() != ModelKind::LinearRegression || ds.is_classification())
    throw InputError("mse: needs a regression model and dataset");
  ForwardPass fwd(model, ds.all());
  double s = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double r = fwd.outputs()(i, 0) - ds.targets[i];
    s += r * r;
  }
  return s / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Training

struct Summary {
  std::size_t steps = 0;
  std::map<std::string, double> final_metrics;  // "<split>.<metric>"
  std::map<std::string, double> best_holdout;   // best value seen per metric
};

struct ExperimentResult {
  Trace trace;
  Summary summary;
};

inline bool metric_higher_is_better(std::string_view m) { return m == "accuracy"; }

namespace detail {

/// The run's weighting applied to a whole split, for the trace statistics.
inline WeightStats split_weight_stats(const MethodSpec& method,
                                      const std::optional<MovingAverageState>& ma,
                                      const LossVector& losses) {
  WeightVector w;
  double clip = std::numeric_limits<double>::infinity();
  switch (method.kind) {
    case Method::Erm: w = WeightVector::ones(losses.size()); break;
    case Method::Rgd:
      w = batch_weights(losses, method.rule);
      if (method.rule.divergence() != Divergence::None) clip = method.rule.tau();
      break;
    case Method::Term: w = TermWeighting{method.t_tilt}(losses); break;
    case Method::MovingAverage:
      w = ma && ma->initialized() ? ma->weights(losses)
                                  : WeightVector::ones(losses.size());
      break;
    case Method::ExpAblation:
      w = ScaledExpWeighting{method.gamma, method.clip}(losses);
      clip = method.clip;
      break;
  }
  WeightStats s;
  s.min = *std::min_element(w.begin(), w.end());
  s.max = *std::max_element(w.begin(), w.end());
  s.mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  std::size_t sat = 0;
  for (double l : losses) sat += l >= clip;
  s.sat_frac = static_cast<double>(sat) / static_cast<double>(losses.size());
  return s;
}

inline double metric_value(const std::string& name, const ModelState& model,
                           const Dataset& ds, const LossVector& losses) {
  if (name == "loss") return losses.mean();
  if (name == "accuracy") return accuracy(model, ds);
  if (name == "mse") return mse(model, ds);
  const auto& star = ds.meta.theta_star;
  if (!star) throw InputError("metric '" + name + "' needs a ground-truth parameter");
  if (name == "rare_l2") return direction_l2(model.theta(), *star, ds.meta.rare_features);
  if (name == "frequent_l2")
    return direction_l2(model.theta(), *star, ds.meta.frequent_features);
  if (name == "param_l2") {
    std::vector<std::size_t> all(star->size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return direction_l2(model.theta(), *star, all);
  }
  throw InputError("unknown metric '" + name + "'");
}

}  // namespace detail

/// Runs one experiment: evaluation at step 0, every eval_every steps and at
/// the final step, on every split the dataset provides.
inline ExperimentResult run_experiment(const ExperimentConfig& config,
                                       const ExperimentData& data) {
  ExperimentResult result{Trace(config.metrics), {}};
  OptimizerState state(initial_model(config.model, data.train));
  std::optional<MovingAverageState> ma;
  if (config.method.kind == Method::MovingAverage)
    ma.emplace(config.method.lambda, config.method.beta_ma);

  std::vector<std::pair<Split, const Dataset*>> splits{{Split::Train, &data.train}};
  if (data.holdout) splits.emplace_back(Split::Holdout, &*data.holdout);
  if (data.test) splits.emplace_back(Split::Test, &*data.test);
  std::vector<Batch> full;
  for (const auto& [s, ds] : splits) full.push_back(ds->all());

  auto evaluate = [&](std::size_t step) {
    for (std::size_t k = 0; k < splits.size(); ++k) {
      const auto [split, ds] = splits[k];
      ForwardPass fwd(state.model, full[k]);
      const Vector& raw = fwd.losses();
      for (std::size_t i = 0; i < raw.size(); ++i)
        if (!std::isfinite(raw[i]))
          throw TrainingDivergence(step, i, "non-finite evaluation loss");
      LossVector losses(raw);
      TraceRecord rec;
      rec.step = step;
      rec.split = split;
      rec.objective = losses.mean();
      for (const auto& m : config.metrics)
        rec.metrics.push_back(detail::metric_value(m, state.model, *ds, losses));
      rec.weights = detail::split_weight_stats(config.method, ma, losses);
      result.trace.append(std::move(rec));
    }
  };

  evaluate(0);
  if (config.steps > 0) {
    TrainConfig train = config.train;
    train.steps = config.steps;
    MinibatchStream stream(data.train.size(), train.batch_size, train.seed);
    for (std::size_t t = 1; t <= config.steps; ++t) {
      const Batch batch = data.train.batch(stream.next());
      switch (config.method.kind) {
        case Method::Erm:
          state = erm_step(std::move(state), batch, train);
          break;
        case Method::Rgd:
          state = rgd_step(std::move(state), batch, config.method.rule, train);
          break;
        case Method::Term:
          state = term_step(std::move(state), batch, config.method.t_tilt, train);
          break;
        case Method::MovingAverage: {
          auto [s, m] = ma_exp_step(std::move(state), std::move(*ma), batch, train);
          state = std::move(s);
          ma = std::move(m);
          break;
        }
        case Method::ExpAblation:
          state = weighted_step(std::move(state), batch,
                                ScaledExpWeighting{config.method.gamma, config.method.clip},
                                train);
          break;
      }
      if (t % config.eval_every == 0 || t == config.steps) evaluate(t);
    }
  }

  Summary& sum = result.summary;
  sum.steps = config.steps;
  for (const auto& [split, ds] : splits) {
    const TraceRecord* last = result.trace.last(split);
    const std::string prefix(to_string(split));
    sum.final_metrics[prefix + ".objective"] = last->objective;
    for (std::size_t i = 0; i < config.metrics.size(); ++i)
      sum.final_metrics[prefix + "." + config.metrics[i]] = last->metrics[i];
  }
  if (data.holdout) {
    for (std::size_t i = 0; i < config.metrics.size(); ++i) {
      const bool up = metric_higher_is_better(config.metrics[i]);
      double best = up ? -INFINITY : INFINITY;
      for (const auto& r : result.trace.records())
        if (r.split == Split::Holdout)
          best = up ? std::max(best, r.metrics[i]) : std::min(best, r.metrics[i]);
      sum.best_holdout[config.metrics[i]] = best;
    }
  }
  return result;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, prepare_data(config.dataset));
}

inline Json summary_to_json(const ExperimentConfig& config, const Summary& s) {
  Json j;
  j["method"] = to_string(config.method.kind);
  j["steps"] = s.steps;
  j["minibatch_order"] = "epoch_shuffle_without_replacement";
  j["final"] = s.final_metrics;
  if (!s.best_holdout.empty()) j["best_holdout"] = s.best_holdout;
  return j;
}

/// Writes the trace to config.output plus a "<output>.summary.json" sidecar.
inline void write_outputs(const ExperimentConfig& config, const ExperimentResult& r) {
  if (config.output.empty()) return;
  const std::filesystem::path out(config.output);
  export_trace(r.trace, out, config.format);
  write_text_file(out.string() + ".summary.json",
                  summary_to_json(config, r.summary).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepSpec {
  ExperimentConfig base;
  std::vector<double> taus{1, 3, 5, 7, 9};
  std::vector<double> lr_multipliers{0.5, 0.75, 1.0, 1.25, 1.5};
  std::vector<double> t_tilts{0.2, 0.5, 1, 3, 5};
  std::vector<double> betas_ma{0.25, 0.5, 0.75};
  std::vector<double> lambdas{1, 3, 5, 7};
  std::string select_metric = "accuracy";
  Split select_split = Split::Holdout;
  std::size_t threads = 0;  // 0: hardware concurrency
  std::string output;       // grid-results CSV; empty: none

  bool maximize() const { return metric_higher_is_better(select_metric); }
};

struct GridPoint {
  std::vector<std::pair<std::string, double>> params;
  ExperimentConfig config;
};

struct GridResult {
  GridPoint point;
  bool ok = false;
  std::string error;
  double selection = std::numeric_limits<double>::quiet_NaN();
  Summary summary;
};

struct SweepResult {
  std::vector<GridResult> grid;
  std::optional<std::size_t> best;  // index into grid
};

/// Hyperparameter grid for the base config's method, in a fixed order.
inline std::vector<GridPoint> expand_grid(const SweepSpec& spec) {
  std::vector<GridPoint> out;
  const auto& base = spec.base;
  for (double lr : spec.lr_multipliers) {
    auto with_lr = [&](ExperimentConfig c) {
      c.train.lr_base = base.train.lr_base * lr;
      return c;
    };
    switch (base.method.kind) {
      case Method::Erm:
      case Method::ExpAblation:
        out.push_back({{{"lr_multiplier", lr}}, with_lr(base)});
        break;
      case Method::Rgd:
        for (double tau : spec.taus) {
          ExperimentConfig c = with_lr(base);
          c.method.rule = WeightingRule(base.method.rule.divergence(), tau);
          c.train.rule = c.method.rule;
          out.push_back({{{"tau", tau}, {"lr_multiplier", lr}}, c});
        }
        break;
      case Method::Term:
        for (double t : spec.t_tilts) {
          ExperimentConfig c = with_lr(base);
          c.method.t_tilt = t;
          out.push_back({{{"t_tilt", t}, {"lr_multiplier", lr}}, c});
        }
        break;
      case Method::MovingAverage:
        for (double lam : spec.lambdas)
          for (double beta : spec.betas_ma) {
            ExperimentConfig c = with_lr(base);
            c.method.lambda = lam;
            c.method.beta_ma = beta;
            out.push_back({{{"lambda", lam}, {"beta_ma", beta}, {"lr_multiplier", lr}}, c});
          }
        break;
    }
  }
  // Canonical order: lexicographic in the parameter tuple.
  std::stable_sort(out.begin(), out.end(), [](const GridPoint& a, const GridPoint& b) {
    for (std::size_t i = 0; i < a.params.size(); ++i)
      if (a.params[i].second != b.params[i].second)
        return a.params[i].second < b.params[i].second;
    return false;
  });
  return out;
}

/// Runs every grid point (in parallel), records failures, and selects the
/// best by the selection metric; ties go to the earliest, i.e.
/// lexicographically smallest, parameter tuple.
inline SweepResult sweep(const SweepSpec& spec) {
  auto points = expand_grid(spec);
  if (points.empty()) throw InputError("sweep: empty grid");
  if (std::find(spec.base.metrics.begin(), spec.base.metrics.end(),
                spec.select_metric) == spec.base.metrics.end())
    throw InputError("sweep: selection metric '" + spec.select_metric +
                     "' is not in the metric list");
  const ExperimentData data = prepare_data(spec.base.dataset);
  if (spec.select_split == Split::Holdout && !data.holdout)
    throw InputError("sweep: selection on holdout needs holdout_fraction > 0");
  if (spec.select_split == Split::Test && !data.test)
    throw InputError("sweep: selection on test needs a test split");

  SweepResult res;
  res.grid.resize(points.size());
  const std::string key = std::string(to_string(spec.select_split)) + "." + spec.select_metric;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      GridResult& g = res.grid[i];
      g.point = points[i];
      try {
        auto r = run_experiment(g.point.config, data);
        g.summary = std::move(r.summary);
        g.selection = g.summary.final_metrics.at(key);
        g.ok = std::isfinite(g.selection);
        if (!g.ok) g.error = "non-finite selection metric";
      } catch (const std::exception& e) {
        g.ok = false;
        g.error = e.what();
      }
    }
  };
  std::size_t n_threads = spec.threads ? spec.threads : std::thread::hardware_concurrency();
  n_threads = std::clamp<std::size_t>(n_threads, 1, points.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t + 1 < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < res.grid.size(); ++i) {
    if (!res.grid[i].ok) continue;
    if (!res.best) {
      res.best = i;
      continue;
    }
    const double cur = res.grid[*res.best].selection, v = res.grid[i].selection;
    if (spec.maximize() ? v > cur : v < cur) res.best = i;
  }
  return res;
}

inline std::string sweep_table_csv(const SweepResult& r) {
  std::ostringstream out;
  if (r.grid.empty()) return "";
  for (const auto& [name, v] : r.grid.front().point.params) out << name << ',';
  out << "status,selection,selected,error\n";
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    const auto& g = r.grid[i];
    for (const auto& [name, v] : g.point.params) out << format_double(v) << ',';
    out << (g.ok ? "ok" : "failed") << ',' << format_double(g.selection) << ','
        << (r.best == i ? 1 : 0) << ',';
    std::string err = g.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << err << '\n';
  }
  return out.str();
}

inline SweepSpec parse_sweep(const Json& j, std::shared_ptr<const ConfigSource> src = nullptr) {
  ObjectReader r(j, "", src);
  SweepSpec s;
  s.base = parse_experiment(r.raw("base"), src);
  if (r.has("grid")) {
    ObjectReader g = r.child("grid");
    s.taus = g.optional<std::vector<double>>("tau", s.taus);
    s.lr_multipliers = g.optional<std::vector<double>>("lr_multiplier", s.lr_multipliers);
    s.t_tilts = g.optional<std::vector<double>>("t_tilt", s.t_tilts);
    s.betas_ma = g.optional<std::vector<double>>("beta_ma", s.betas_ma);
    s.lambdas = g.optional<std::vector<double>>("lambda", s.lambdas);
    g.finish();
    for (double lr : s.lr_multipliers)
      if (!(lr > 0.0)) g.fail("lr_multiplier", "multipliers must be > 0");
  }
  if (r.has("select")) {
    ObjectReader sel = r.child("select");
    s.select_metric = sel.optional<std::string>("metric", s.select_metric);
    try {
      s.select_split = split_from_string(sel.optional<std::string>("split", "holdout"));
    } catch (const InputError& e) {
      sel.fail("split", e.what());
    }
    sel.finish();
  }
  s.threads = r.optional<std::size_t>("threads", 0);
  s.output = r.optional<std::string>("output", "");
  r.finish();
  if (std::find(s.base.metrics.begin(), s.base.metrics.end(), s.select_metric) ==
      s.base.metrics.end())
    r.fail("select", "selection metric '" + s.select_metric +
                         "' is not in base.metrics");
  return s;
}

inline SweepSpec load_sweep(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  auto src = std::make_shared<const ConfigSource>(path.string(), std::move(text));
  return parse_sweep(src->parse(), src);
}

// ---------------------------------------------------------------------------
// Reports

/// One row per (trace, split): the final record of that split.
inline std::string report_table(
    const std::vector<std::pair<std::string, Trace>>& traces) {
  std::vector<std::string> metrics;
  for (const auto& [name, t] : traces)
    for (const auto& m : t.metric_names())
      if (std::find(metrics.begin(), metrics.end(), m) == metrics.end())
        metrics.push_back(m);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"run", "split", "step", "objective"};
  header.insert(header.end(), metrics.begin(), metrics.end());
  header.insert(header.end(), {"w_min", "w_mean", "w_max", "w_sat_frac"});
  rows.push_back(header);
  for (const auto& [name, t] : traces) {
    for (Split s : {Split::Train, Split::Holdout, Split::Test}) {
      const TraceRecord* r = t.last(s);
      if (!r) continue;
      std::vector<std::string> row{name, std::string(to_string(s)),
                                   std::to_string(r->step), format_double(r->objective)};
      for (const auto& m : metrics) {
        const auto idx = t.metric_index(m);
        row.push_back(idx < 0 ? "" : format_double(r->metrics[static_cast<std::size_t>(idx)]));
      }
      for (double v : {r->weights.min, r->weights.mean, r->weights.max, r->weights.sat_frac})
        row.push_back(format_double(v));
      rows.push_back(std::move(row));
    }
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << row[c];
      if (c + 1 < row.size()) out << std::string(width[c] - row[c].size() + 2, ' ');
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace rgd
