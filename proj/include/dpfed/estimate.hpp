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
#ifndef DPFED_ESTIMATE_HPP_
#define DPFED_ESTIMATE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dpfed/bounds.hpp"
#include "dpfed/dataset.hpp"
#include "dpfed/federation.hpp"
#include "dpfed/mechanisms.hpp"
#include "dpfed/model.hpp"

namespace dpfed {

// Largest squared l2 norm of a per-sample gradient at `params`, after the
// mechanism's clip when `spec` is given.
inline double MaxSampleGradientNormSq(const LogisticRegression& model, const Dataset& data,
                                      const ModelParams& params,
                                      const DpMechanismSpec* spec = nullptr) {
  double best = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    GradientVector g = model.SampleGradient(params, data, r);
    if (spec != nullptr) g = ClipForMechanism(g, *spec);
    const double n = Norm(g.values, NormOrder::kL2);
    best = std::max(best, n * n);
  }
  return best;
}

// max over samples of |grad F_i(params, D_i) - grad F(params, zeta)|^2.
inline double MaxSampleGradientSpreadSq(const LogisticRegression& model, const Dataset& data,
                                        const ModelParams& params) {
  const GradientVector full = model.Gradient(params, data);
  double best = 0.0;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const GradientVector g = model.SampleGradient(params, data, r);
    best = std::max(best, SquaredDistance(full.values, g.values));
  }
  return best;
}

struct ProbeConfig {
  std::optional<ModelParams> theta0;  // zeros when absent
  std::optional<double> mu;           // model strong-convexity bound when absent
  std::optional<double> lambda;       // model smoothness bound when absent
  std::size_t fit_iters = 20000;
  double fit_grad_tol = 1e-7;
  DpMechanismSpec spec;
  std::vector<PrivacyBudget> budgets;  // one per client
};

struct EstimateResult {
  BoundConstants constants;
  std::vector<ModelParams> local_optima;
  std::vector<double> local_losses;          // F_i*
  std::vector<double> local_grad_norms;      // at the end of each local fit
  std::vector<bool> local_converged;
  // Definition-based non-iid degree F* - sum (d_i/d) F_i*, from a global fit.
  double gamma_from_global_fit = 0.0;
  ModelParams global_optimum;
  std::vector<std::string> warnings;
};

/// Estimates the bound constants from data:
///   Y0    ~ sum (d_i/d) |theta_0 - theta_i*|^2
///   Gamma ~ max_i F_i* - sum (d_i/d) F_i*
///   G^2   = largest clipped per-sample squared gradient norm over the pooled
///           data at theta_0 and at every local optimum
///   Lambda_i^2 = largest per-sample deviation from client i's full gradient
///           at theta_0 and theta_i*
/// Local optima come from full-batch fits; clients whose fit does not reach
/// `fit_grad_tol` are flagged in `local_converged` and `warnings`.
inline EstimateResult EstimateConstants(const ClientPartition& partition,
                                        const LogisticRegression& model, const ProbeConfig& probe) {
  const std::size_t N = partition.num_clients();
  Require(N >= 1, "partition has no clients");
  Require(probe.budgets.size() == N, "need one privacy budget per client");
  const Dataset pooled = partition.Pooled();
  const double mu = probe.mu.value_or(model.StrongConvexityBound());
  const double lambda = probe.lambda.value_or(model.SmoothnessBound(pooled));
  Require(mu > 0.0, "strong convexity constant is zero: set an l2 penalty or supply mu");
  Require(lambda >= mu, "smoothness constant must be at least mu");

  const ModelParams theta0 = probe.theta0.value_or(model.Zeros());
  const double d = static_cast<double>(partition.total_size());

  EstimateResult out;
  BoundConstants& c = out.constants;
  c.mu = mu;
  c.lambda = lambda;
  c.p = static_cast<double>(model.num_params());
  c.d = d;
  c.N = N;
  c.budgets = probe.budgets;
  c.xi1 = probe.spec.xi1;
  c.xi2 = probe.spec.xi2;
  c.q = probe.spec.q;
  c.c2 = probe.spec.c2;

  double weighted_loss = 0.0;
  double max_loss = -std::numeric_limits<double>::infinity();
  double y0 = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const Dataset& client = partition.client_datasets[i];
    const double weight = static_cast<double>(client.size()) / d;
    ModelParams local = theta0;
    const double local_lambda = model.SmoothnessBound(client);
    const double grad_norm =
        FitOptimum(model, client, local, local_lambda, mu, probe.fit_iters, probe.fit_grad_tol);
    const double loss = model.Loss(local, client);
    out.local_grad_norms.push_back(grad_norm);
    out.local_converged.push_back(grad_norm < probe.fit_grad_tol);
    if (grad_norm >= probe.fit_grad_tol) {
      out.warnings.push_back("local fit of client " + std::to_string(i) +
                             " did not converge (gradient norm " + std::to_string(grad_norm) + ")");
    }
    weighted_loss += weight * loss;
    max_loss = std::max(max_loss, loss);
    y0 += weight * SquaredDistance(theta0.values, local.values);
    out.local_losses.push_back(loss);
    out.local_optima.push_back(std::move(local));
    c.client_sizes.push_back(static_cast<double>(client.size()));
  }
  c.Y0 = y0;
  c.Gamma = std::max(0.0, max_loss - weighted_loss);

  const DpMechanismSpec* clip = probe.spec.kind == MechanismKind::kNone ? nullptr : &probe.spec;
  double g2 = MaxSampleGradientNormSq(model, pooled, theta0, clip);
  for (const ModelParams& local : out.local_optima) {
    g2 = std::max(g2, MaxSampleGradientNormSq(model, pooled, local, clip));
  }
  c.G = std::sqrt(g2);

  for (std::size_t i = 0; i < N; ++i) {
    const Dataset& client = partition.client_datasets[i];
    const double spread = std::max(MaxSampleGradientSpreadSq(model, client, theta0),
                                   MaxSampleGradientSpreadSq(model, client, out.local_optima[i]));
    c.Lambda.push_back(std::sqrt(spread));
  }

  out.global_optimum = theta0;
  const double global_grad =
      FitOptimum(model, pooled, out.global_optimum, lambda, mu, probe.fit_iters, probe.fit_grad_tol);
  if (global_grad >= probe.fit_grad_tol) {
    out.warnings.push_back("global fit did not converge (gradient norm " +
                           std::to_string(global_grad) + ")");
  }
  out.gamma_from_global_fit = model.Loss(out.global_optimum, pooled) - weighted_loss;
  return out;
}

}  // namespace dpfed

#endif  // DPFED_ESTIMATE_HPP_
