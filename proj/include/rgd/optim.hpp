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

// Base optimizers, the re-weighted step and the exponential-tilting
// baselines. Every weighted method shares one step: per-sample losses,
// weights from a policy, pseudo-gradient (1/B) sum_i w_i grad l_i, then the
// base optimizer update with that direction in place of the gradient.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rgd/errors.hpp"
#include "rgd/linalg.hpp"
#include "rgd/models.hpp"
#include "rgd/reweight.hpp"

namespace rgd {

enum class OptimizerKind { SGD, Adam };

enum class Schedule {
  Constant,        // C
  InvSqrtPerStep,  // C / sqrt(t)
  InvSqrtHorizon,  // C / sqrt(T)
};

inline std::string_view to_string(OptimizerKind k) {
  return k == OptimizerKind::SGD ? "sgd" : "adam";
}

inline OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "sgd") return OptimizerKind::SGD;
  if (s == "adam") return OptimizerKind::Adam;
  throw InputError("unknown optimizer '" + std::string(s) + "'");
}

inline std::string_view to_string(Schedule s) {
  switch (s) {
    case Schedule::Constant: return "constant";
    case Schedule::InvSqrtPerStep: return "inv_sqrt_t";
    case Schedule::InvSqrtHorizon: return "inv_sqrt_horizon";
  }
  return "?";
}

inline Schedule schedule_from_string(std::string_view s) {
  if (s == "constant") return Schedule::Constant;
  if (s == "inv_sqrt_t") return Schedule::InvSqrtPerStep;
  if (s == "inv_sqrt_horizon") return Schedule::InvSqrtHorizon;
  throw InputError("unknown schedule '" + std::string(s) + "'");
}

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Axis-aligned box used as the feasible set for projection.
struct Box {
  double lo = -1.0;
  double hi = 1.0;

  void project(Vector& theta) const {
    for (double& v : theta) v = std::clamp(v, lo, hi);
  }
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::SGD;
  WeightingRule rule = WeightingRule::none();
  double lr_base = 0.1;
  Schedule schedule = Schedule::Constant;
  std::size_t steps = 1;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  AdamParams adam;
  std::optional<Box> box;

  void validate() const {
    if (!(lr_base > 0.0) || !std::isfinite(lr_base))
      throw InputError("TrainConfig: lr must be > 0");
    if (steps < 1) throw InputError("TrainConfig: steps must be >= 1");
    if (batch_size < 1) throw InputError("TrainConfig: batch_size must be >= 1");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
        !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
      throw InputError("TrainConfig: Adam betas must lie in [0, 1)");
    if (!(adam.epsilon > 0.0))
      throw InputError("TrainConfig: Adam epsilon must be > 0");
    if (box && !(box->lo <= box->hi))
      throw InputError("TrainConfig: projection box has lo > hi");
  }
};

/// theta_t plus the step counter and Adam moments.
struct OptimizerState {
  ModelState model;
  std::size_t step = 0;
  Vector m;  // Adam first moment
  Vector v;  // Adam second moment

  explicit OptimizerState(ModelState init)
      : model(std::move(init)),
        m(model.theta().size(), 0.0),
        v(model.theta().size(), 0.0) {}

  bool operator==(const OptimizerState&) const = default;
};

/// Learning rate for the 1-based step t of a T-step run.
inline double lr_at(Schedule schedule, double lr_base, std::size_t t,
                    std::size_t T) {
  if (t < 1 || t > T)
    throw InputError("lr_at: step " + std::to_string(t) + " outside [1, " +
                     std::to_string(T) + "]");
  switch (schedule) {
    case Schedule::Constant: return lr_base;
    case Schedule::InvSqrtPerStep:
      return lr_base / std::sqrt(static_cast<double>(t));
    case Schedule::InvSqrtHorizon:
      return lr_base / std::sqrt(static_cast<double>(T));
  }
  return lr_base;
}

namespace detail {

inline void require_finite_gradient(const Vector& g, std::size_t step) {
  for (std::size_t j = 0; j < g.size(); ++j)
    if (!std::isfinite(g[j]))
      throw TrainingDivergence(step, TrainingDivergence::kNoSample,
                               "non-finite update direction at coordinate " +
                                   std::to_string(j));
}

inline OptimizerState commit(OptimizerState state, Vector theta,
                             const std::optional<Box>& box) {
  if (box) box->project(theta);
  if (!all_finite(theta))
    throw TrainingDivergence(state.step, TrainingDivergence::kNoSample,
                             "parameters overflowed");
  state.model = state.model.with_theta(std::move(theta));
  ++state.step;
  return state;
}

}  // namespace detail

/// theta <- Proj(theta - lr * gradient).
inline OptimizerState sgd_step(OptimizerState state, const Vector& gradient,
                               double lr,
                               const std::optional<Box>& box = std::nullopt) {
  if (gradient.size() != state.model.theta().size())
    throw InputError("sgd_step: gradient length mismatch");
  detail::require_finite_gradient(gradient, state.step);
  Vector theta = state.model.theta();
  for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= lr * gradient[j];
  return detail::commit(std::move(state), std::move(theta), box);
}

/// Bias-corrected Adam; moments start at zero when state.step == 0.
inline OptimizerState adam_step(OptimizerState state, const Vector& gradient,
                                double lr, const AdamParams& p,
                                const std::optional<Box>& box = std::nullopt) {
  if (gradient.size() != state.model.theta().size())
    throw InputError("adam_step: gradient length mismatch");
  detail::require_finite_gradient(gradient, state.step);
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(p.beta1, t);
  const double c2 = 1.0 - std::pow(p.beta2, t);
  Vector theta = state.model.theta();
  for (std::size_t j = 0; j < theta.size(); ++j) {
    const double g = gradient[j];
    state.m[j] = p.beta1 * state.m[j] + (1.0 - p.beta1) * g;
    state.v[j] = p.beta2 * state.v[j] + (1.0 - p.beta2) * g * g;
    const double m_hat = state.m[j] / c1;
    const double v_hat = state.v[j] / c2;
    theta[j] -= lr * m_hat / (std::sqrt(v_hat) + p.epsilon);
  }
  return detail::commit(std::move(state), std::move(theta), box);
}

/// Applies the configured base optimizer with the scheduled rate.
inline OptimizerState apply_direction(OptimizerState state,
                                      const Vector& direction,
                                      const TrainConfig& config) {
  const double lr =
      lr_at(config.schedule, config.lr_base, state.step + 1, config.steps);
  if (config.optimizer == OptimizerKind::SGD)
    return sgd_step(std::move(state), direction, lr, config.box);
  return adam_step(std::move(state), direction, lr, config.adam, config.box);
}

/// A weighting policy maps a batch's losses to per-sample weights.
template <class W>
concept WeightingPolicy = requires(W w, const LossVector& l) {
  { w(l) } -> std::convertible_to<WeightVector>;
};

/// What a weighted step saw: losses, weights and the applied direction.
struct StepReport {
  LossVector losses;
  WeightVector weights;
  Vector direction;
};

namespace detail {

inline LossVector checked_losses(const ForwardPass& fwd, std::size_t step) {
  const Vector& l = fwd.losses();
  for (std::size_t i = 0; i < l.size(); ++i)
    if (!std::isfinite(l[i]))
      throw TrainingDivergence(step, i, "non-finite loss");
  return LossVector(l);
}

}  // namespace detail

/// One step with weights from any policy: losses, w_i = policy(l)_i,
/// v = (1/B) sum_i w_i grad l_i, then the base optimizer update.
template <WeightingPolicy Policy>
OptimizerState weighted_step(OptimizerState state, const Batch& batch,
                             const Policy& policy, const TrainConfig& config,
                             StepReport* report = nullptr) {
  ForwardPass fwd(state.model, batch);
  LossVector losses = detail::checked_losses(fwd, state.step);
  WeightVector weights = policy(losses);
  if (weights.size() != losses.size())
    throw InputError("weighting policy returned the wrong number of weights");
  const double B = static_cast<double>(batch.size());
  Vector scale(batch.size());
  for (std::size_t i = 0; i < scale.size(); ++i) scale[i] = weights[i] / B;
  Vector direction = fwd.backward(scale);
  detail::require_finite_gradient(direction, state.step);
  OptimizerState next = apply_direction(std::move(state), direction, config);
  if (report) *report = {std::move(losses), std::move(weights), std::move(direction)};
  return next;
}

/// The re-weighted gradient step with the given rule.
inline OptimizerState rgd_step(OptimizerState state, const Batch& batch,
                               const WeightingRule& rule,
                               const TrainConfig& config,
                               StepReport* report = nullptr) {
  return weighted_step(std::move(state), batch, RuleWeighting{rule}, config,
                       report);
}

/// Plain ERM step on the mean gradient.
inline OptimizerState erm_step(OptimizerState state, const Batch& batch,
                               const TrainConfig& config) {
  ForwardPass fwd(state.model, batch);
  detail::checked_losses(fwd, state.step);
  Vector scale(batch.size(), 1.0 / static_cast<double>(batch.size()));
  Vector direction = fwd.backward(scale);
  return apply_direction(std::move(state), direction, config);
}

// ---------------------------------------------------------------------------
// Tilted (TERM, batch version) baseline.

/// (1/t) log((1/n) sum_i exp(t l_i)).
inline double term_objective(const LossVector& losses, double t_tilt) {
  if (!(t_tilt > 0.0)) throw InputError("term_objective: t must be > 0");
  Vector scaled(losses.size());
  for (std::size_t i = 0; i < losses.size(); ++i)
    scaled[i] = t_tilt * losses[i];
  return (log_sum_exp(scaled) - std::log(static_cast<double>(losses.size()))) /
         t_tilt;
}

/// softmax(t * l), summing to one.
inline Vector term_probabilities(const LossVector& losses, double t_tilt) {
  if (!(t_tilt > 0.0)) throw InputError("term: t must be > 0");
  Vector p(losses.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = t_tilt * losses[i];
  const double lse = log_sum_exp(p);
  for (double& v : p) v = std::exp(v - lse);
  return p;
}

/// TERM as a weighting policy: w_i = B * softmax(t l)_i, so that the shared
/// (1/B) sum_i w_i grad l_i equals sum_i p_i grad l_i.
struct TermWeighting {
  double t_tilt;
  WeightVector operator()(const LossVector& losses) const {
    Vector p = term_probabilities(losses, t_tilt);
    const double B = static_cast<double>(losses.size());
    for (double& v : p) v *= B;
    return WeightVector(std::move(p));
  }
};

/// sum_i p_i grad l_i with p = softmax(t * l) held constant.
inline Vector term_grad(const ModelState& model, const Batch& batch,
                        double t_tilt) {
  ForwardPass fwd(model, batch);
  return fwd.backward(term_probabilities(LossVector(fwd.losses()), t_tilt));
}

inline OptimizerState term_step(OptimizerState state, const Batch& batch,
                                double t_tilt, const TrainConfig& config,
                                StepReport* report = nullptr) {
  return weighted_step(std::move(state), batch, TermWeighting{t_tilt}, config,
                       report);
}

// ---------------------------------------------------------------------------
// Moving-average exponential weighting (stochastic TERM / ABSGD style).

/// Running normalizer z of exp(lambda * l), kept in the log domain.
class MovingAverageState {
 public:
  MovingAverageState(double lambda, double beta_ma)
      : lambda_(lambda), beta_(beta_ma) {
    if (!(lambda > 0.0)) throw InputError("moving average: lambda must be > 0");
    if (!(beta_ma > 0.0 && beta_ma < 1.0))
      throw InputError("moving average: beta must lie in (0, 1)");
  }

  double lambda() const noexcept { return lambda_; }
  double beta() const noexcept { return beta_; }
  bool initialized() const noexcept { return log_z_.has_value(); }
  double log_z() const {
    if (!log_z_) throw StateError("moving average: normalizer not initialized");
    return *log_z_;
  }
  double z() const { return std::exp(log_z()); }

  /// Folds in a batch: z <- beta z + (1 - beta) mean_i exp(lambda l_i);
  /// the first batch sets z to its own mean.
  void update(const LossVector& losses) {
    Vector s(losses.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = lambda_ * losses[i];
    const double log_mean =
        log_sum_exp(s) - std::log(static_cast<double>(losses.size()));
    if (!log_z_) {
      log_z_ = log_mean;
    } else {
      const double a = std::log(beta_) + *log_z_;
      const double b = std::log1p(-beta_) + log_mean;
      const double m = std::max(a, b);
      log_z_ = m + std::log(std::exp(a - m) + std::exp(b - m));
    }
    if (!std::isfinite(*log_z_))
      throw StateError("moving average: normalizer is not a positive finite");
  }

  /// w_i = exp(lambda l_i) / z, unclipped.
  WeightVector weights(const LossVector& losses) const {
    const double lz = log_z();
    Vector w(losses.size());
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = std::exp(lambda_ * losses[i] - lz);
    return WeightVector(std::move(w));
  }

 private:
  double lambda_;
  double beta_;
  std::optional<double> log_z_;
};

inline std::pair<OptimizerState, MovingAverageState> ma_exp_step(
    OptimizerState state, MovingAverageState ma, const Batch& batch,
    const TrainConfig& config, StepReport* report = nullptr) {
  auto policy = [&ma](const LossVector& losses) {
    ma.update(losses);
    return ma.weights(losses);
  };
  OptimizerState next =
      weighted_step(std::move(state), batch, policy, config, report);
  return {std::move(next), std::move(ma)};
}

/// exp(gamma * clamp(l, 0, clip)) with a free scale; ablation only.
struct ScaledExpWeighting {
  double gamma;
  double clip;  // +inf disables clipping
  WeightVector operator()(const LossVector& losses) const {
    Vector w(losses.size());
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = weight_exp(losses[i], gamma, clip);
    return WeightVector(std::move(w));
  }
};

}  // namespace rgd
