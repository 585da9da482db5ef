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

// Differentiable predictors with per-sample losses and hand-derived
// per-sample gradients.
//
// Parameter layout in the flat theta vector:
//   LinearRegression   theta[0..d)                         (no bias)
//   SoftmaxClassifier  W (C x d, row-major), then b (C)
//   MLP                for each layer: W (out x in, row-major), then b (out);
//                      tanh on every hidden layer, linear logits on the last.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rgd/errors.hpp"
#include "rgd/linalg.hpp"
#include "rgd/reweight.hpp"

namespace rgd {

enum class ModelKind { LinearRegression, SoftmaxClassifier, MLP };

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::LinearRegression: return "linear";
    case ModelKind::SoftmaxClassifier: return "softmax";
    case ModelKind::MLP: return "mlp";
  }
  return "?";
}

inline ModelKind model_kind_from_string(std::string_view s) {
  if (s == "linear") return ModelKind::LinearRegression;
  if (s == "softmax") return ModelKind::SoftmaxClassifier;
  if (s == "mlp") return ModelKind::MLP;
  throw InputError("unknown model kind '" + std::string(s) + "'");
}

/// Per-sample regression loss. HalfSquared is 0.5 * (x^T theta - y)^2.
enum class RegressionLoss { Squared, HalfSquared };

struct ModelShape {
  ModelKind kind = ModelKind::LinearRegression;
  std::size_t input_dim = 1;
  std::size_t classes = 1;  // 1 for regression
  std::vector<std::size_t> hidden;  // MLP only: 1 or 2 widths
  RegressionLoss regression_loss = RegressionLoss::Squared;

  bool is_classifier() const noexcept {
    return kind != ModelKind::LinearRegression;
  }

  /// (fan_in, fan_out) of each affine layer, input to output.
  std::vector<std::pair<std::size_t, std::size_t>> layers() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t in = input_dim;
    if (kind == ModelKind::MLP) {
      for (std::size_t h : hidden) {
        out.emplace_back(in, h);
        in = h;
      }
    }
    out.emplace_back(in, classes);
    return out;
  }

  std::size_t param_count() const {
    if (kind == ModelKind::LinearRegression) return input_dim;
    std::size_t n = 0;
    for (auto [in, o] : layers()) n += in * o + o;
    return n;
  }

  void validate() const {
    if (input_dim == 0) throw InputError("ModelShape: input_dim must be >= 1");
    switch (kind) {
      case ModelKind::LinearRegression:
        if (classes != 1 || !hidden.empty())
          throw InputError("ModelShape: linear regression has one output");
        break;
      case ModelKind::SoftmaxClassifier:
        if (classes < 2) throw InputError("ModelShape: need >= 2 classes");
        if (!hidden.empty())
          throw InputError("ModelShape: softmax has no hidden layers");
        break;
      case ModelKind::MLP:
        if (classes < 2) throw InputError("ModelShape: need >= 2 classes");
        if (hidden.empty() || hidden.size() > 2)
          throw InputError("ModelShape: MLP takes one or two hidden layers");
        for (std::size_t h : hidden)
          if (h == 0) throw InputError("ModelShape: zero hidden width");
        break;
    }
  }

  bool operator==(const ModelShape&) const = default;
};

/// Shape metadata plus flat parameters. Immutable for evaluation;
/// optimizer steps produce new states.
class ModelState {
 public:
  ModelState(ModelShape shape, Vector theta)
      : shape_(std::move(shape)), theta_(std::move(theta)) {
    shape_.validate();
    if (theta_.size() != shape_.param_count())
      throw InputError("ModelState: theta has " +
                       std::to_string(theta_.size()) + " entries, shape needs " +
                       std::to_string(shape_.param_count()));
    if (!all_finite(theta_))
      throw InputError("ModelState: non-finite parameter");
  }

  const ModelShape& shape() const noexcept { return shape_; }
  ModelKind kind() const noexcept { return shape_.kind; }
  const Vector& theta() const noexcept { return theta_; }

  ModelState with_theta(Vector theta) const {
    return ModelState(shape_, std::move(theta));
  }

  bool operator==(const ModelState&) const = default;

 private:
  ModelShape shape_;
  Vector theta_;
};

inline ModelState make_linear(std::size_t d,
                              RegressionLoss loss = RegressionLoss::Squared) {
  ModelShape s{ModelKind::LinearRegression, d, 1, {}, loss};
  return ModelState(s, Vector(d, 0.0));
}

inline ModelState make_softmax(std::size_t d, std::size_t classes) {
  ModelShape s{ModelKind::SoftmaxClassifier, d, classes, {}, {}};
  return ModelState(s, Vector(s.param_count(), 0.0));
}

/// Weights ~ N(0, 1/fan_in), biases zero.
inline ModelState make_mlp(std::size_t d, std::vector<std::size_t> hidden,
                           std::size_t classes, std::uint64_t seed) {
  ModelShape s{ModelKind::MLP, d, classes, std::move(hidden), {}};
  s.validate();
  Vector theta;
  theta.reserve(s.param_count());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto [in, out] : s.layers()) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t k = 0; k < in * out; ++k)
      theta.push_back(scale * normal(rng));
    theta.insert(theta.end(), out, 0.0);
  }
  return ModelState(std::move(s), std::move(theta));
}

/// {z_i}: B x d inputs with either real targets or class labels.
class Batch {
 public:
  static Batch regression(Matrix inputs, Vector targets) {
    if (inputs.rows() == 0) throw InputError("Batch: empty");
    if (targets.size() != inputs.rows())
      throw InputError("Batch: target count does not match input rows");
    if (!all_finite(inputs.data()) || !all_finite(targets))
      throw InputError("Batch: non-finite input or target");
    Batch b;
    b.inputs_ = std::move(inputs);
    b.targets_ = std::move(targets);
    return b;
  }

  static Batch classification(Matrix inputs, std::vector<std::size_t> labels,
                              std::size_t classes) {
    if (inputs.rows() == 0) throw InputError("Batch: empty");
    if (labels.size() != inputs.rows())
      throw InputError("Batch: label count does not match input rows");
    if (!all_finite(inputs.data()))
      throw InputError("Batch: non-finite input");
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] >= classes)
        throw InputError("Batch: label " + std::to_string(labels[i]) +
                         " out of range at sample " + std::to_string(i));
    Batch b;
    b.inputs_ = std::move(inputs);
    b.labels_ = std::move(labels);
    b.classes_ = classes;
    return b;
  }

  std::size_t size() const noexcept { return inputs_.rows(); }
  std::size_t dim() const noexcept { return inputs_.cols(); }
  bool is_classification() const noexcept { return classes_ > 0; }
  std::size_t classes() const noexcept { return classes_; }
  const Matrix& inputs() const noexcept { return inputs_; }
  const Vector& targets() const noexcept { return targets_; }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }

 private:
  Batch() = default;
  Matrix inputs_;
  Vector targets_;
  std::vector<std::size_t> labels_;
  std::size_t classes_ = 0;
};

namespace detail {

inline void check_compatible(const ModelState& m, const Batch& b) {
  const ModelShape& s = m.shape();
  if (b.dim() != s.input_dim)
    throw InputError("batch dimension " + std::to_string(b.dim()) +
                     " does not match model input dimension " +
                     std::to_string(s.input_dim));
  if (s.is_classifier()) {
    if (!b.is_classification())
      throw InputError("classifier model given a regression batch");
    if (b.classes() != s.classes)
      throw InputError("batch has " + std::to_string(b.classes()) +
                       " classes, model has " + std::to_string(s.classes));
  } else if (b.is_classification()) {
    throw InputError("regression model given a classification batch");
  }
}

}  // namespace detail

/// One forward pass over a batch with the activations kept for backprop.
/// Splitting forward and backward lets a step compute losses, derive weights
/// from them and then backpropagate without a second forward pass.
class ForwardPass {
 public:
  ForwardPass(const ModelState& model, const Batch& batch)
      : model_(&model), batch_(&batch) {
    detail::check_compatible(model, batch);
    run();
  }

  const Vector& losses() const noexcept { return losses_; }

  /// Output scores: predictions (B x 1) or logits (B x C).
  const Matrix& outputs() const noexcept { return outputs_; }

  /// sum_i scale[i] * grad_theta loss_i.
  Vector backward(std::span<const double> scale) const {
    const std::size_t n = batch_->size();
    if (scale.size() != n)
      throw InputError("backward: scale length does not match batch");
    const ModelShape& s = model_->shape();
    const Vector& theta = model_->theta();
    Vector grad(theta.size(), 0.0);

    if (s.kind == ModelKind::LinearRegression) {
      const double k = s.regression_loss == RegressionLoss::Squared ? 2.0 : 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double c = scale[i] * k * residual_[i];
        auto x = batch_->inputs().row(i);
        for (std::size_t j = 0; j < x.size(); ++j) grad[j] += c * x[j];
      }
      return grad;
    }

    const auto layers = s.layers();
    const std::size_t L = layers.size();
    // Offsets of each layer's W and b inside theta.
    std::vector<std::size_t> offset(L);
    for (std::size_t l = 0, o = 0; l < L; ++l) {
      offset[l] = o;
      o += layers[l].first * layers[l].second + layers[l].second;
    }

    Vector delta, prev;
    for (std::size_t i = 0; i < n; ++i) {
      if (scale[i] == 0.0) continue;
      // d loss / d logits = softmax - onehot, scaled.
      auto p = probs_.row(i);
      delta.assign(p.begin(), p.end());
      delta[batch_->labels()[i]] -= 1.0;
      for (double& v : delta) v *= scale[i];

      for (std::size_t l = L; l-- > 0;) {
        const auto [in, out] = layers[l];
        std::span<const double> a = activation(l, i);
        double* gW = grad.data() + offset[l];
        double* gb = gW + in * out;
        for (std::size_t r = 0; r < out; ++r) {
          const double d = delta[r];
          gb[r] += d;
          double* row = gW + r * in;
          for (std::size_t c = 0; c < in; ++c) row[c] += d * a[c];
        }
        if (l == 0) break;
        // Propagate through W and the tanh of the layer below.
        const double* W = theta.data() + offset[l];
        prev.assign(in, 0.0);
        for (std::size_t r = 0; r < out; ++r) {
          const double d = delta[r];
          const double* row = W + r * in;
          for (std::size_t c = 0; c < in; ++c) prev[c] += d * row[c];
        }
        for (std::size_t c = 0; c < in; ++c) prev[c] *= 1.0 - a[c] * a[c];
        delta.swap(prev);
      }
    }
    return grad;
  }

 private:
  std::span<const double> activation(std::size_t layer, std::size_t i) const {
    return layer == 0 ? batch_->inputs().row(i) : hidden_[layer - 1].row(i);
  }

  void run() {
    const ModelShape& s = model_->shape();
    const Vector& theta = model_->theta();
    const std::size_t n = batch_->size();
    losses_.assign(n, 0.0);

    if (s.kind == ModelKind::LinearRegression) {
      outputs_ = Matrix(n, 1);
      residual_.assign(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double pred = dot(batch_->inputs().row(i), theta);
        outputs_(i, 0) = pred;
        const double r = pred - batch_->targets()[i];
        residual_[i] = r;
        losses_[i] =
            s.regression_loss == RegressionLoss::Squared ? r * r : 0.5 * r * r;
      }
      return;
    }

    const auto layers = s.layers();
    hidden_.clear();
    std::size_t off = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto [in, out] = layers[l];
      const double* W = theta.data() + off;
      const double* b = W + in * out;
      off += in * out + out;
      Matrix z(n, out);
      for (std::size_t i = 0; i < n; ++i) {
        std::span<const double> a = activation(l, i);
        for (std::size_t r = 0; r < out; ++r) {
          double acc = b[r];
          const double* row = W + r * in;
          for (std::size_t c = 0; c < in; ++c) acc += row[c] * a[c];
          z(i, r) = l + 1 < layers.size() ? std::tanh(acc) : acc;
        }
      }
      if (l + 1 < layers.size())
        hidden_.push_back(std::move(z));
      else
        outputs_ = std::move(z);
    }

    // Stable softmax / cross-entropy via log-sum-exp.
    const std::size_t C = s.classes;
    probs_ = Matrix(n, C);
    for (std::size_t i = 0; i < n; ++i) {
      auto z = outputs_.row(i);
      const double lse = log_sum_exp(z);
      for (std::size_t c = 0; c < C; ++c) probs_(i, c) = std::exp(z[c] - lse);
      losses_[i] = lse - z[batch_->labels()[i]];
    }
  }

  const ModelState* model_;
  const Batch* batch_;
  Vector losses_;
  Vector residual_;
  std::vector<Matrix> hidden_;
  Matrix outputs_;
  Matrix probs_;
};

inline LossVector per_sample_loss(const ModelState& model, const Batch& batch) {
  return LossVector(ForwardPass(model, batch).losses());
}

/// (1/B) sum_i w_i grad loss_i, weights held constant.
inline Vector weighted_grad(const ModelState& model, const Batch& batch,
                            const WeightVector& weights) {
  if (weights.size() != batch.size())
    throw InputError("weighted_grad: " + std::to_string(weights.size()) +
                     " weights for a batch of " + std::to_string(batch.size()));
  const double B = static_cast<double>(batch.size());
  Vector scale(batch.size());
  for (std::size_t i = 0; i < scale.size(); ++i) scale[i] = weights[i] / B;
  return ForwardPass(model, batch).backward(scale);
}

/// Plain mean gradient (1/B) sum_i grad loss_i.
inline Vector mean_grad(const ModelState& model, const Batch& batch) {
  Vector scale(batch.size(), 1.0 / static_cast<double>(batch.size()));
  return ForwardPass(model, batch).backward(scale);
}

/// B x P matrix of individual per-sample gradients.
inline Matrix per_sample_grads(const ModelState& model, const Batch& batch) {
  ForwardPass fwd(model, batch);
  const std::size_t n = batch.size();
  Matrix out(n, model.theta().size());
  Vector scale(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    scale[i] = 1.0;
    Vector g = fwd.backward(scale);
    std::copy(g.begin(), g.end(), out.row(i).begin());
    scale[i] = 0.0;
  }
  return out;
}

/// Central differences (f(theta + h e_j) - f(theta - h e_j)) / (2h).
template <class Objective>
Vector finite_diff_grad(Objective&& objective, const Vector& theta, double h) {
  if (!(h > 0.0)) throw InputError("finite_diff_grad: h must be > 0");
  Vector probe = theta;
  Vector grad(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) {
    probe[j] = theta[j] + h;
    const double up = objective(std::as_const(probe));
    probe[j] = theta[j] - h;
    const double down = objective(std::as_const(probe));
    probe[j] = theta[j];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw OracleError("finite_diff_grad: non-finite objective at coordinate " +
                        std::to_string(j));
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace rgd
