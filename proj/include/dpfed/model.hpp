/*
 * Copyright 2026 The dpfed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef DPFED_MODEL_HPP_
#define DPFED_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "dpfed/dataset.hpp"
#include "dpfed/error.hpp"

namespace dpfed {

struct ModelParams {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct GradientVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const GradientVector&, const GradientVector&) = default;
};

enum class NormOrder { kL1, kL2 };

inline double Norm(std::span<const double> v, NormOrder order) {
  double s = 0.0;
  if (order == NormOrder::kL1) {
    for (double x : v) s += std::abs(x);
    return s;
  }
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double SquaredDistance(std::span<const double> a, std::span<const double> b) {
  Require(a.size() == b.size(), "distance between vectors of different length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

/// Rescales `grad` onto the norm ball of radius `bound` when it lies outside.
/// The scale factor is nudged down until the recomputed norm is within the
/// bound, which makes clipping exactly idempotent.
inline GradientVector ClipGradient(const GradientVector& grad, double bound, NormOrder order) {
  Require(bound > 0.0, "clip bound must be positive");
  const double norm = Norm(grad.values, order);
  if (norm <= bound) return grad;
  double factor = bound / norm;
  GradientVector out{std::vector<double>(grad.size())};
  for (;;) {
    for (std::size_t i = 0; i < grad.size(); ++i) out.values[i] = grad.values[i] * factor;
    if (Norm(out.values, order) <= bound) return out;
    factor = std::nextafter(factor, 0.0);
  }
}

// Multinomial logistic regression, logits = theta^T x with theta stored as an
// n_features x n_classes row-major matrix. Optional l2 penalty (l2/2)|theta|^2
// makes the objective strongly convex.
class LogisticRegression {
 public:
  LogisticRegression(std::size_t n_features, std::size_t n_classes, double l2 = 0.0)
      : n_features_(n_features), n_classes_(n_classes), l2_(l2) {
    Require(n_features >= 1 && n_classes >= 2, "model needs >= 1 feature and >= 2 classes");
    Require(l2 >= 0.0, "l2 coefficient must be non-negative");
  }

  static LogisticRegression For(const Dataset& data, double l2 = 0.0) {
    return LogisticRegression(data.n_features(), std::max<std::size_t>(2, data.n_classes()), l2);
  }

  std::size_t n_features() const { return n_features_; }
  std::size_t n_classes() const { return n_classes_; }
  std::size_t num_params() const { return n_features_ * n_classes_; }
  double l2() const { return l2_; }

  ModelParams Zeros() const { return {std::vector<double>(num_params(), 0.0)}; }

  double Loss(const ModelParams& params, const Dataset& data) const {
    return Loss(params, data, AllRows(data));
  }

  /// Mean cross-entropy over `rows`, plus the l2 penalty.
  double Loss(const ModelParams& params, const Dataset& data,
              std::span<const std::size_t> rows) const {
    CheckShapes(params, data);
    Require(!rows.empty(), "loss of an empty batch", ErrorCode::kEmptyBatch);
    std::vector<double> logits(n_classes_);
    double total = 0.0;
    for (std::size_t r : rows) {
      Logits(params, data.row(r), logits);
      const double top = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double l : logits) z += std::exp(l - top);
      total += top + std::log(z) - logits[static_cast<std::size_t>(data.label(r))];
    }
    return total / static_cast<double>(rows.size()) + Penalty(params);
  }

  GradientVector Gradient(const ModelParams& params, const Dataset& data) const {
    return Gradient(params, data, AllRows(data));
  }

  /// Mean of per-sample gradients over `rows`.
  GradientVector Gradient(const ModelParams& params, const Dataset& data,
                          std::span<const std::size_t> rows) const {
    CheckShapes(params, data);
    Require(!rows.empty(), "gradient of an empty batch", ErrorCode::kEmptyBatch);
    GradientVector grad{std::vector<double>(num_params(), 0.0)};
    std::vector<double> probs(n_classes_);
    for (std::size_t r : rows) {
      AccumulateDataGradient(params, data.row(r), data.label(r), probs, grad.values);
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (std::size_t k = 0; k < grad.size(); ++k) {
      grad.values[k] = grad.values[k] * inv + l2_ * params.values[k];
    }
    return grad;
  }

  // Gradient of the single-sample objective (cross-entropy + penalty).
  GradientVector SampleGradient(const ModelParams& params, const Dataset& data,
                                std::size_t row) const {
    const std::size_t rows[1] = {row};
    return Gradient(params, data, rows);
  }

  int Predict(const ModelParams& params, std::span<const double> x) const {
    std::vector<double> logits(n_classes_);
    Logits(params, x, logits);
    // strict comparison: ties go to the lowest class index
    std::size_t best = 0;
    for (std::size_t c = 1; c < n_classes_; ++c) {
      if (logits[c] > logits[best]) best = c;
    }
    return static_cast<int>(best);
  }

  double Accuracy(const ModelParams& params, const Dataset& data) const {
    CheckShapes(params, data);
    Require(!data.empty(), "accuracy on an empty dataset", ErrorCode::kEmptyBatch);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (Predict(params, data.row(i)) == data.label(i)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
  }

  // Hessian bounds: the softmax cross-entropy curvature is at most
  // (1/2)|x|^2, the penalty adds l2 in every direction.
  double SmoothnessBound(const Dataset& data) const {
    return 0.5 * data.MaxRowNormSquared() + l2_;
  }
  double StrongConvexityBound() const { return l2_; }

 private:
  static std::vector<std::size_t> AllRows(const Dataset& data) {
    std::vector<std::size_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
  }

  void CheckShapes(const ModelParams& params, const Dataset& data) const {
    Require(params.size() == num_params(), "parameter vector has wrong length");
    Require(data.n_features() == n_features_, "feature dimension does not match the model");
    Require(data.n_classes() <= n_classes_, "dataset has more classes than the model");
  }

  double Penalty(const ModelParams& params) const {
    if (l2_ == 0.0) return 0.0;
    double s = 0.0;
    for (double v : params.values) s += v * v;
    return 0.5 * l2_ * s;
  }

  void Logits(const ModelParams& params, std::span<const double> x,
              std::vector<double>& logits) const {
    std::fill(logits.begin(), logits.end(), 0.0);
    for (std::size_t f = 0; f < n_features_; ++f) {
      const double xf = x[f];
      if (xf == 0.0) continue;
      const double* w = params.values.data() + f * n_classes_;
      for (std::size_t c = 0; c < n_classes_; ++c) logits[c] += xf * w[c];
    }
  }

  void AccumulateDataGradient(const ModelParams& params, std::span<const double> x, int label,
                              std::vector<double>& probs, std::vector<double>& out) const {
    Logits(params, x, probs);
    const double top = *std::max_element(probs.begin(), probs.end());
    double z = 0.0;
    for (double& p : probs) {
      p = std::exp(p - top);
      z += p;
    }
    for (double& p : probs) p /= z;
    probs[static_cast<std::size_t>(label)] -= 1.0;
    for (std::size_t f = 0; f < n_features_; ++f) {
      const double xf = x[f];
      if (xf == 0.0) continue;
      double* g = out.data() + f * n_classes_;
      for (std::size_t c = 0; c < n_classes_; ++c) g[c] += xf * probs[c];
    }
  }

  std::size_t n_features_;
  std::size_t n_classes_;
  double l2_;
};

/// Fits a (local or global) optimum by full-batch gradient descent with step
/// 1/lambda, using Nesterov momentum (sqrt(k)-1)/(sqrt(k)+1), k = lambda/mu,
/// when mu > 0. Stops once the gradient norm drops below `grad_tol`; returns
/// the final gradient norm.
inline double FitOptimum(const LogisticRegression& model, const Dataset& data, ModelParams& params,
                         double lambda, double mu, std::size_t max_iters, double grad_tol) {
  Require(lambda > 0.0 && mu >= 0.0, "fit needs lambda > 0 and mu >= 0");
  const double step = 1.0 / lambda;
  double momentum = 0.0;
  if (mu > 0.0) {
    const double root = std::sqrt(lambda / mu);
    momentum = (root - 1.0) / (root + 1.0);
  }
  double grad_norm = Norm(model.Gradient(params, data).values, NormOrder::kL2);
  ModelParams lookahead = params;
  ModelParams next = params;
  for (std::size_t it = 0; it < max_iters && grad_norm >= grad_tol; ++it) {
    const GradientVector g = model.Gradient(lookahead, data);
    for (std::size_t k = 0; k < params.size(); ++k) {
      next.values[k] = lookahead.values[k] - step * g.values[k];
      lookahead.values[k] = next.values[k] + momentum * (next.values[k] - params.values[k]);
    }
    std::swap(params, next);
    grad_norm = Norm(model.Gradient(params, data).values, NormOrder::kL2);
  }
  return grad_norm;
}

}  // namespace dpfed

#endif  // DPFED_MODEL_HPP_
