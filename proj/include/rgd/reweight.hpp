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

// Per-sample importance weights computed from per-sample losses.
//
// Every rule feeds the loss through clamp(u, 0, tau) before applying its
// weighting function, so weights are bounded and never fall below the value
// at zero loss. Weights are constants with respect to the parameters: the
// gradient flows through the loss only.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rgd/errors.hpp"

namespace rgd {

enum class Divergence { KL, Chi2, ReverseKL, None };

inline std::string_view to_string(Divergence d) {
  switch (d) {
    case Divergence::KL: return "kl";
    case Divergence::Chi2: return "chi2";
    case Divergence::ReverseKL: return "revkl";
    case Divergence::None: return "none";
  }
  return "?";
}

inline Divergence divergence_from_string(std::string_view s) {
  if (s == "kl") return Divergence::KL;
  if (s == "chi2") return Divergence::Chi2;
  if (s == "revkl" || s == "reverse_kl") return Divergence::ReverseKL;
  if (s == "none" || s == "erm") return Divergence::None;
  throw InputError("unknown divergence '" + std::string(s) + "'");
}

/// Divergence variant plus clip level tau. Fully determines g(.).
class WeightingRule {
 public:
  WeightingRule(Divergence divergence, double tau)
      : divergence_(divergence), tau_(tau) {
    if (!(tau > 0.0) || !std::isfinite(tau))
      throw InputError("WeightingRule: tau must be finite and > 0, got " +
                       std::to_string(tau));
  }

  static WeightingRule none() { return {Divergence::None, 1.0}; }
  static WeightingRule kl(double tau) { return {Divergence::KL, tau}; }
  static WeightingRule chi2(double tau) { return {Divergence::Chi2, tau}; }
  static WeightingRule reverse_kl(double tau) {
    return {Divergence::ReverseKL, tau};
  }

  Divergence divergence() const noexcept { return divergence_; }
  double tau() const noexcept { return tau_; }
  /// Exponential scale 1/(tau+1) used by the KL and reverse-KL rules.
  double gamma() const noexcept { return 1.0 / (tau_ + 1.0); }

  bool operator==(const WeightingRule&) const = default;

 private:
  Divergence divergence_;
  double tau_;
};

/// Per-sample losses of one batch; finite and non-empty.
class LossVector {
 public:
  LossVector() = default;
  explicit LossVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) throw InputError("LossVector: empty");
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (!std::isfinite(values_[i]))
        throw InputError("LossVector: non-finite loss at index " +
                         std::to_string(i));
  }
  LossVector(std::initializer_list<double> values)
      : LossVector(std::vector<double>(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  double mean() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s / static_cast<double>(values_.size());
  }

 private:
  std::vector<double> values_;
};

/// Per-sample weights aligned with a LossVector; finite and non-negative.
class WeightVector {
 public:
  WeightVector() = default;
  explicit WeightVector(std::vector<double> values)
      : values_(std::move(values)) {
    for (std::size_t i = 0; i < values_.size(); ++i)
      if (!std::isfinite(values_[i]) || values_[i] < 0.0)
        throw InputError("WeightVector: invalid weight at index " +
                         std::to_string(i));
  }
  WeightVector(std::initializer_list<double> values)
      : WeightVector(std::vector<double>(values)) {}

  static WeightVector ones(std::size_t n) {
    return WeightVector(std::vector<double>(n, 1.0));
  }

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

 private:
  std::vector<double> values_;
};

namespace detail {

inline void require_finite_loss(double u) {
  if (!std::isfinite(u))
    throw InputError("weight: non-finite loss value " + std::to_string(u));
}

inline double clip_loss(double u, double tau) { return std::clamp(u, 0.0, tau); }

}  // namespace detail

/// exp(clamp(u, 0, tau) / (tau + 1)).
inline double weight_kl(double u, double tau) {
  detail::require_finite_loss(u);
  return std::exp(detail::clip_loss(u, tau) / (tau + 1.0));
}

/// clamp(u, 0, tau) + tau.
inline double weight_chi2(double u, double tau) {
  detail::require_finite_loss(u);
  return detail::clip_loss(u, tau) + tau;
}

/// (1 - clamp(u, 0, tau) / (tau + 1))^-1. The clamp keeps it below tau + 1.
inline double weight_revkl(double u, double tau) {
  detail::require_finite_loss(u);
  return 1.0 / (1.0 - detail::clip_loss(u, tau) / (tau + 1.0));
}

/// exp(gamma * clamp(u, 0, clip)) with an explicit scale. Used for the
/// scale/clip ablations; pass clip = +inf for the unclipped tilt.
inline double weight_exp(double u, double gamma, double clip) {
  detail::require_finite_loss(u);
  return std::exp(gamma * std::clamp(u, 0.0, clip));
}

inline double weight(double u, const WeightingRule& rule) {
  switch (rule.divergence()) {
    case Divergence::KL: return weight_kl(u, rule.tau());
    case Divergence::Chi2: return weight_chi2(u, rule.tau());
    case Divergence::ReverseKL: return weight_revkl(u, rule.tau());
    case Divergence::None:
      detail::require_finite_loss(u);
      return 1.0;
  }
  return 1.0;
}

/// True when the loss sits at or above the clip level (weight saturated).
inline bool saturated(double u, const WeightingRule& rule) {
  return rule.divergence() != Divergence::None && u >= rule.tau();
}

inline WeightVector batch_weights(const LossVector& losses,
                                  const WeightingRule& rule) {
  std::vector<double> w(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i) w[i] = weight(losses[i], rule);
  return WeightVector(std::move(w));
}

/// (1/B) sum_i w_i * l_i, the reported surrogate whose frozen-weight
/// gradient is the pseudo-gradient.
inline double weighted_objective(const LossVector& losses,
                                 const WeightVector& weights) {
  if (losses.size() != weights.size())
    throw InputError("weighted_objective: " + std::to_string(losses.size()) +
                     " losses vs " + std::to_string(weights.size()) +
                     " weights");
  double s = 0.0;
  for (std::size_t i = 0; i < losses.size(); ++i) s += weights[i] * losses[i];
  return s / static_cast<double>(losses.size());
}

/// Callable adapter so a WeightingRule can be used as a weighting policy.
struct RuleWeighting {
  WeightingRule rule;
  WeightVector operator()(const LossVector& losses) const {
    return batch_weights(losses, rule);
  }
};

}  // namespace rgd
