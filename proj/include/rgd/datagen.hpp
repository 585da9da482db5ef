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

// Seeded synthetic datasets for the desk-scale experiments. Every generator
// is a pure function of its arguments, seed included.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rgd/errors.hpp"
#include "rgd/linalg.hpp"
#include "rgd/models.hpp"

namespace rgd {

struct DatasetMeta {
  std::string generator;
  std::uint64_t seed = 0;
  std::optional<Vector> theta_star;                // regression ground truth
  std::vector<std::size_t> frequent_features;      // rare-feature toy only
  std::vector<std::size_t> rare_features;
  std::vector<std::size_t> class_counts;           // classification only
  std::vector<bool> flipped;                       // diagnostics only
};

/// n x d inputs plus real targets (regression) or labels (classification).
struct Dataset {
  Matrix inputs;
  Vector targets;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;  // 0 for regression
  DatasetMeta meta;

  std::size_t size() const noexcept { return inputs.rows(); }
  std::size_t dim() const noexcept { return inputs.cols(); }
  bool is_classification() const noexcept { return classes > 0; }

  /// Rows `idx` as a training batch.
  Batch batch(std::span<const std::size_t> idx) const {
    Matrix x(idx.size(), dim());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto src = inputs.row(idx[r]);
      std::copy(src.begin(), src.end(), x.row(r).begin());
    }
    if (is_classification()) {
      std::vector<std::size_t> y(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) y[r] = labels[idx[r]];
      return Batch::classification(std::move(x), std::move(y), classes);
    }
    Vector y(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) y[r] = targets[idx[r]];
    return Batch::regression(std::move(x), std::move(y));
  }

  Batch all() const {
    std::vector<std::size_t> idx(size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return batch(idx);
  }

  /// Dataset restricted to rows `idx`, in that order. Metadata carries over
  /// with class counts recomputed.
  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.inputs = Matrix(idx.size(), dim());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto src = inputs.row(idx[r]);
      std::copy(src.begin(), src.end(), out.inputs.row(r).begin());
    }
    out.classes = classes;
    out.meta = meta;
    out.meta.flipped.clear();
    if (is_classification()) {
      for (std::size_t i : idx) out.labels.push_back(labels[i]);
      if (!meta.flipped.empty())
        for (std::size_t i : idx) out.meta.flipped.push_back(meta.flipped[i]);
      out.meta.class_counts = count_classes(out.labels, classes);
    } else {
      for (std::size_t i : idx) out.targets.push_back(targets[i]);
    }
    return out;
  }

  static std::vector<std::size_t> count_classes(
      const std::vector<std::size_t>& labels, std::size_t classes) {
    std::vector<std::size_t> counts(classes, 0);
    for (std::size_t y : labels) ++counts[y];
    return counts;
  }
};

/// One-hot covariates over 10 features: features 0-4 appear 50 times each,
/// features 5-9 once each (n = 255); y = x^T theta* with theta* ~ N(0, I).
inline Dataset rare_feature_regression(std::uint64_t seed) {
  constexpr std::size_t d = 10, frequent = 5, repeats = 50;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector theta_star(d);
  for (double& v : theta_star) v = normal(rng);

  const std::size_t n = frequent * repeats + (d - frequent);
  Dataset ds;
  ds.inputs = Matrix(n, d);
  ds.targets.resize(n);
  std::size_t row = 0;
  for (std::size_t j = 0; j < d; ++j) {
    const std::size_t copies = j < frequent ? repeats : 1;
    for (std::size_t c = 0; c < copies; ++c, ++row) {
      ds.inputs(row, j) = 1.0;
      ds.targets[row] = theta_star[j];
    }
  }
  ds.meta.generator = "rare_feature_regression";
  ds.meta.seed = seed;
  ds.meta.theta_star = std::move(theta_star);
  for (std::size_t j = 0; j < d; ++j)
    (j < frequent ? ds.meta.frequent_features : ds.meta.rare_features).push_back(j);
  return ds;
}

/// n_i = round(n_max * (1/IF)^(i/(C-1))), i = 0..C-1, floored at 1.
inline std::vector<std::size_t> long_tailed_counts(std::size_t classes,
                                                   std::size_t n_max,
                                                   double imbalance_factor) {
  if (classes < 2) throw InputError("long_tailed_counts: need C >= 2");
  if (n_max < 1) throw InputError("long_tailed_counts: need n_max >= 1");
  if (!(imbalance_factor >= 1.0) || !std::isfinite(imbalance_factor))
    throw InputError("long_tailed_counts: imbalance factor must be >= 1");
  const double mu = 1.0 / imbalance_factor;
  std::vector<std::size_t> counts(classes);
  for (std::size_t i = 0; i < classes; ++i) {
    const double e = static_cast<double>(i) / static_cast<double>(classes - 1);
    const double v = std::round(static_cast<double>(n_max) * std::pow(mu, e));
    counts[i] = std::max<std::size_t>(1, static_cast<std::size_t>(v));
  }
  counts.front() = n_max;
  counts.back() = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::round(static_cast<double>(n_max) / imbalance_factor)));
  return counts;
}

/// Class c centered at separation * e_c with unit isotropic noise; balanced,
/// rows grouped by class.
inline Dataset gaussian_mixture_classification(std::size_t classes,
                                               std::size_t n_per_class,
                                               std::size_t d, double separation,
                                               std::uint64_t seed) {
  if (classes < 2) throw InputError("gaussian_mixture: need C >= 2");
  if (d < classes) throw InputError("gaussian_mixture: need d >= C");
  if (n_per_class < 1) throw InputError("gaussian_mixture: need n_per_class >= 1");
  if (!(separation >= 0.0)) throw InputError("gaussian_mixture: separation < 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = classes * n_per_class;
  Dataset ds;
  ds.inputs = Matrix(n, d);
  ds.labels.resize(n);
  ds.classes = classes;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i / n_per_class;
    ds.labels[i] = c;
    for (std::size_t j = 0; j < d; ++j) ds.inputs(i, j) = normal(rng);
    ds.inputs(i, c) += separation;
  }
  ds.meta.generator = "gaussian_mixture";
  ds.meta.seed = seed;
  ds.meta.class_counts.assign(classes, n_per_class);
  return ds;
}

/// Keeps the first counts[c] samples of each class after a seeded shuffle.
inline Dataset subsample_long_tailed(const Dataset& ds,
                                     const std::vector<std::size_t>& counts,
                                     std::uint64_t seed) {
  if (!ds.is_classification())
    throw InputError("subsample_long_tailed: classification dataset required");
  if (counts.size() != ds.classes)
    throw InputError("subsample_long_tailed: one count per class required");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> taken(ds.classes, 0);
  std::vector<std::size_t> keep;
  for (std::size_t i : order) {
    const std::size_t c = ds.labels[i];
    if (taken[c] < counts[c]) {
      ++taken[c];
      keep.push_back(i);
    }
  }
  for (std::size_t c = 0; c < ds.classes; ++c)
    if (taken[c] < counts[c])
      throw InputError("subsample_long_tailed: class " + std::to_string(c) +
                       " has " + std::to_string(taken[c]) + " samples, " +
                       std::to_string(counts[c]) + " requested");
  std::sort(keep.begin(), keep.end());
  return ds.subset(keep);
}

/// floor(p * n) seeded samples get a label drawn uniformly from the other
/// C - 1 classes. The mask is kept in meta.flipped.
inline Dataset flip_labels(const Dataset& ds, double fraction,
                           std::uint64_t seed) {
  if (!ds.is_classification())
    throw InputError("flip_labels: classification dataset required");
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw InputError("flip_labels: fraction must lie in [0, 1]");
  Dataset out = ds;
  const std::size_t n = ds.size();
  const auto m = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  out.meta.flipped.assign(n, false);
  std::uniform_int_distribution<std::size_t> other(1, ds.classes - 1);
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t i = order[k];
    out.labels[i] = (ds.labels[i] + other(rng)) % ds.classes;
    out.meta.flipped[i] = true;
  }
  out.meta.class_counts = Dataset::count_classes(out.labels, out.classes);
  return out;
}

/// Seeded split; stratified per class for classification.
inline std::pair<Dataset, Dataset> split(const Dataset& ds,
                                         double train_fraction,
                                         std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InputError("split: train fraction must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train, held;
  auto take = [&](std::vector<std::size_t> idx) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto k = static_cast<std::size_t>(
        std::round(train_fraction * static_cast<double>(idx.size())));
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    held.insert(held.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  };
  if (ds.is_classification()) {
    std::vector<std::vector<std::size_t>> by_class(ds.classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
    for (auto& idx : by_class) take(std::move(idx));
  } else {
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    take(std::move(idx));
  }
  if (train.empty() || held.empty())
    throw InputError("split: fraction leaves one side empty");
  std::sort(train.begin(), train.end());
  std::sort(held.begin(), held.end());
  return {ds.subset(train), ds.subset(held)};
}

}  // namespace rgd
