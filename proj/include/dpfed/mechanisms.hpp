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
#ifndef DPFED_MECHANISMS_HPP_
#define DPFED_MECHANISMS_HPP_

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dpfed/error.hpp"
#include "dpfed/model.hpp"
#include "dpfed/random.hpp"
#include "dpfed/schedule.hpp"

namespace dpfed {

enum class MechanismKind { kNone, kLaplace, kGaussian };

inline const char* MechanismName(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::kNone: return "none";
    case MechanismKind::kLaplace: return "laplace";
    case MechanismKind::kGaussian: return "gaussian";
  }
  return "none";
}

inline MechanismKind ParseMechanism(const std::string& name) {
  if (name == "none") return MechanismKind::kNone;
  if (name == "laplace") return MechanismKind::kLaplace;
  if (name == "gaussian") return MechanismKind::kGaussian;
  throw Error(ErrorCode::kConfig, "unknown mechanism: " + name);
}

// Per-client (epsilon, delta).
struct PrivacyBudget {
  double epsilon = 1.0;
  double delta = 0.0;
};

struct DpMechanismSpec {
  MechanismKind kind = MechanismKind::kNone;
  double xi1 = 300.0;  // l1 clip, Laplace
  double xi2 = 10.0;   // l2 clip, Gaussian
  double q = 1.0;      // per-round sampling rate
  double c1 = 10.0;
  double c2 = 1.0;

  void Validate() const {
    Require(xi1 > 0.0 && xi2 > 0.0, "clip bounds must be positive");
    Require(c1 > 0.0 && c2 > 0.0, "mechanism constants must be positive");
    switch (kind) {
      case MechanismKind::kLaplace:
        Require(q == 1.0, "the Laplace mechanism uses every local sample (q = 1)");
        break;
      case MechanismKind::kGaussian:
        Require(q > 0.0 && q < 1.0, "the Gaussian mechanism needs q in (0, 1)");
        break;
      case MechanismKind::kNone:
        Require(q > 0.0 && q <= 1.0, "q must lie in (0, 1]");
        break;
    }
  }

  void ValidateBudget(const PrivacyBudget& budget) const {
    if (kind == MechanismKind::kNone) return;
    Require(budget.epsilon > 0.0, "epsilon must be positive");
    if (kind == MechanismKind::kLaplace) {
      Require(budget.delta == 0.0, "the Laplace mechanism is pure DP: delta must be 0");
    } else {
      Require(budget.delta > 0.0 && budget.delta < 1.0,
              "the Gaussian mechanism needs delta in (0, 1)");
    }
  }
};

struct NoiseVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

/// Laplace scale 2 b T xi1 / (N d_i eps_i): each client answers bT/N queries,
/// each with l1 sensitivity 2 xi1 / d_i.
inline double LaplaceScale(const PrivacyBudget& budget, double xi1, double b, double T, double N,
                           double d_i) {
  Require(budget.epsilon > 0.0 && xi1 > 0.0 && b > 0.0 && T > 0.0 && N > 0.0 && d_i > 0.0,
          "Laplace calibration needs positive inputs");
  Require(b <= N, "b must not exceed N");
  return 2.0 * b * T * xi1 / (N * d_i * budget.epsilon);
}

/// Minimal compliant Gaussian standard deviation:
/// sigma^2 = c2^2 xi2^2 / (d_i^2 eps^2) * (bT/N) * log(1/delta).
inline double GaussianSigma(const PrivacyBudget& budget, double xi2, double b, double T, double N,
                            double d_i, double c2) {
  Require(budget.delta > 0.0 && budget.delta < 1.0, "Gaussian calibration needs delta in (0, 1)");
  Require(budget.epsilon > 0.0 && xi2 > 0.0 && b > 0.0 && T > 0.0 && N > 0.0 && d_i > 0.0 &&
              c2 > 0.0,
          "Gaussian calibration needs positive inputs");
  Require(b <= N, "b must not exceed N");
  const double variance = (c2 * c2 * xi2 * xi2) / (d_i * d_i * budget.epsilon * budget.epsilon) *
                          (b * T / N) * std::log(1.0 / budget.delta);
  return std::sqrt(variance);
}

// Privacy precondition of the Gaussian mechanism: eps < c1 q^2 T.
inline bool ValidateGaussianEpsilon(double q, double T, double c1, double epsilon) {
  return epsilon < c1 * q * q * T;
}

// Scale of one coordinate of client noise: Laplace b-parameter, Gaussian sigma,
// 0 for no mechanism.
inline double NoiseScale(const DpMechanismSpec& spec, const PrivacyBudget& budget,
                         const FederationSchedule& schedule, double d_i) {
  const auto b = static_cast<double>(schedule.participants);
  const auto T = static_cast<double>(schedule.rounds);
  const auto N = static_cast<double>(schedule.num_clients);
  switch (spec.kind) {
    case MechanismKind::kNone: return 0.0;
    case MechanismKind::kLaplace: return LaplaceScale(budget, spec.xi1, b, T, N, d_i);
    case MechanismKind::kGaussian: return GaussianSigma(budget, spec.xi2, b, T, N, d_i, spec.c2);
  }
  return 0.0;
}

// Inverse-CDF Laplace draw.
inline double SampleLaplace(double scale, Rng& rng) {
  const double u = UniformOpen01(rng) - 0.5;
  return -scale * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
}

inline void FillNoise(MechanismKind kind, double scale, std::span<double> out, Rng& rng) {
  switch (kind) {
    case MechanismKind::kNone:
      std::fill(out.begin(), out.end(), 0.0);
      return;
    case MechanismKind::kLaplace:
      for (double& v : out) v = SampleLaplace(scale, rng);
      return;
    case MechanismKind::kGaussian: {
      std::normal_distribution<double> normal(0.0, scale);
      for (double& v : out) v = normal(rng);
      return;
    }
  }
}

inline NoiseVector SampleNoise(const DpMechanismSpec& spec, const PrivacyBudget& budget,
                               const FederationSchedule& schedule, double d_i, std::size_t p,
                               Rng& rng) {
  Require(p >= 1, "noise dimension must be positive");
  NoiseVector noise{std::vector<double>(p, 0.0)};
  if (spec.kind == MechanismKind::kNone) return noise;
  spec.ValidateBudget(budget);
  FillNoise(spec.kind, NoiseScale(spec, budget, schedule, d_i), noise.values, rng);
  return noise;
}

/// Analytic E|w_t^b|^2 of the aggregated noise
/// w_t^b = (N/b) sum_{i in P_t} (d_i/d) eta_t w_t^i.
///   Laplace:  8 eta^2 p b T^2 xi1^2 / (N d^2) * sum 1/eps_i^2
///   Gaussian: c2^2 eta^2 p T xi2^2 / d^2 * sum log(1/delta_i) / eps_i^2
inline double AggregatedNoiseVariance(const DpMechanismSpec& spec,
                                      std::span<const PrivacyBudget> budgets,
                                      const FederationSchedule& schedule, double eta, double p,
                                      double d) {
  Require(budgets.size() == schedule.num_clients, "need one budget per client");
  Require(d > 0.0 && p > 0.0, "p and d must be positive");
  const auto b = static_cast<double>(schedule.participants);
  const auto T = static_cast<double>(schedule.rounds);
  const auto N = static_cast<double>(schedule.num_clients);
  double sum = 0.0;
  switch (spec.kind) {
    case MechanismKind::kNone: return 0.0;
    case MechanismKind::kLaplace:
      for (const auto& budget : budgets) sum += 1.0 / (budget.epsilon * budget.epsilon);
      return 8.0 * eta * eta * p * b * T * T * spec.xi1 * spec.xi1 / (N * d * d) * sum;
    case MechanismKind::kGaussian:
      for (const auto& budget : budgets) {
        sum += std::log(1.0 / budget.delta) / (budget.epsilon * budget.epsilon);
      }
      return spec.c2 * spec.c2 * eta * eta * p * T * spec.xi2 * spec.xi2 / (d * d) * sum;
  }
  return 0.0;
}

}  // namespace dpfed

#endif  // DPFED_MECHANISMS_HPP_
