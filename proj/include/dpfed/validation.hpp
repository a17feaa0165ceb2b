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
#ifndef DPFED_VALIDATION_HPP_
#define DPFED_VALIDATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "dpfed/bounds.hpp"
#include "dpfed/dataset.hpp"
#include "dpfed/error.hpp"
#include "dpfed/federation.hpp"
#include "dpfed/mechanisms.hpp"
#include "dpfed/model.hpp"
#include "dpfed/random.hpp"
#include "dpfed/schedule.hpp"

// Brute-force and Monte-Carlo oracles for the analytic results. Client
// subsets are drawn uniformly without replacement throughout, which is the
// distribution the sampling lemmas are stated over.
namespace dpfed {

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t trials = 0;

  double stderr() const { return stderr_; }
  // |mean - target| <= k * stderr
  bool Agrees(double target, double k) const { return std::abs(mean - target) <= k * stderr_; }
};

namespace internal {

// Welford accumulator.
class RunningStats {
 public:
  void Add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  std::size_t count() const { return n_; }

  McEstimate Estimate() const {
    return {mean_, std::sqrt(variance() / static_cast<double>(n_)), n_};
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace internal

/// Simulates E|w_t^b|^2 with w_t^b = (N/b) sum_{i in P} (d_i/d) eta w_i over
/// uniform b-subsets P.
inline McEstimate McNoiseVariance(const DpMechanismSpec& spec,
                                  std::span<const PrivacyBudget> budgets,
                                  std::span<const double> client_sizes,
                                  const FederationSchedule& schedule, double eta, std::size_t p,
                                  std::size_t trials, std::uint64_t seed) {
  const std::size_t N = schedule.num_clients;
  const std::size_t b = schedule.participants;
  Require(trials >= 100, "need at least 100 trials");
  Require(budgets.size() == N && client_sizes.size() == N, "need one budget and size per client");
  Require(p >= 1, "noise dimension must be positive");
  double d = 0.0;
  for (double s : client_sizes) d += s;

  internal::RunningStats stats;
  if (spec.kind == MechanismKind::kNone) {
    for (std::size_t k = 0; k < trials; ++k) stats.Add(0.0);
    return stats.Estimate();
  }
  std::vector<double> scales(N);
  for (std::size_t i = 0; i < N; ++i) {
    spec.ValidateBudget(budgets[i]);
    scales[i] = NoiseScale(spec, budgets[i], schedule, client_sizes[i]);
  }

  Rng rng = MakeRng(seed, {0x40155e});
  std::vector<double> aggregate(p);
  std::vector<double> draw(p);
  for (std::size_t k = 0; k < trials; ++k) {
    std::fill(aggregate.begin(), aggregate.end(), 0.0);
    for (std::size_t i : SelectClientsUniform(N, b, rng)) {
      const double weight = static_cast<double>(N) * client_sizes[i] / (static_cast<double>(b) * d) * eta;
      FillNoise(spec.kind, scales[i], draw, rng);
      for (std::size_t j = 0; j < p; ++j) aggregate[j] += weight * draw[j];
    }
    double sq = 0.0;
    for (double v : aggregate) sq += v * v;
    stats.Add(sq);
  }
  return stats.Estimate();
}

/// Deviation |E[(N/b) sum_{i in P} w_i v_i] - sum_i w_i v_i| estimated over
/// uniform b-subsets. `stderr` is the root of the summed per-coordinate
/// variances of the mean, i.e. the expected deviation under the null.
inline McEstimate McSamplingBias(const std::vector<std::vector<double>>& values_per_client,
                                 std::span<const double> weights, std::size_t N, std::size_t b,
                                 std::size_t trials, std::uint64_t seed) {
  Require(values_per_client.size() == N && weights.size() == N, "need one value and weight per client");
  Require(trials >= 100, "need at least 100 trials");
  const std::size_t dim = values_per_client.front().size();
  std::vector<double> full(dim, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    Require(values_per_client[i].size() == dim, "client values disagree on dimension");
    for (std::size_t j = 0; j < dim; ++j) full[j] += weights[i] * values_per_client[i][j];
  }

  Rng rng = MakeRng(seed, {0xb1a5});
  std::vector<internal::RunningStats> coords(dim);
  std::vector<double> sample(dim);
  const double scale = static_cast<double>(N) / static_cast<double>(b);
  for (std::size_t k = 0; k < trials; ++k) {
    std::fill(sample.begin(), sample.end(), 0.0);
    for (std::size_t i : SelectClientsUniform(N, b, rng)) {
      for (std::size_t j = 0; j < dim; ++j) sample[j] += scale * weights[i] * values_per_client[i][j];
    }
    for (std::size_t j = 0; j < dim; ++j) coords[j].Add(sample[j]);
  }
  double dev = 0.0;
  double var = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double diff = coords[j].mean() - full[j];
    dev += diff * diff;
    var += coords[j].variance() / static_cast<double>(trials);
  }
  return {std::sqrt(dev), std::sqrt(var), trials};
}

/// Exhaustive version over all C(N, b) subsets with weights d_i / d. All sums
/// are carried as sum d_i v_i, so integer inputs give an exact result.
inline double ExactSamplingBias(const std::vector<std::vector<double>>& values_per_client,
                                std::span<const double> client_sizes, std::size_t b) {
  const std::size_t N = values_per_client.size();
  Require(N >= 1 && N <= 24, "exhaustive enumeration supports 1..24 clients");
  Require(client_sizes.size() == N && b >= 1 && b <= N, "need one size per client and 1 <= b <= N");
  const std::size_t dim = values_per_client.front().size();
  double d = 0.0;
  for (double s : client_sizes) d += s;

  std::vector<double> subset_total(dim, 0.0);  // sum_S N sum_{i in S} d_i v_i
  double subsets = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << N); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != b) continue;
    subsets += 1.0;
    for (std::size_t i = 0; i < N; ++i) {
      if ((mask >> i) & 1u) {
        for (std::size_t j = 0; j < dim; ++j) {
          subset_total[j] += static_cast<double>(N) * client_sizes[i] * values_per_client[i][j];
        }
      }
    }
  }
  double dev = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    double full = 0.0;
    for (std::size_t i = 0; i < N; ++i) full += client_sizes[i] * values_per_client[i][j];
    const double diff = subset_total[j] - subsets * static_cast<double>(b) * full;
    dev += diff * diff;
  }
  return std::sqrt(dev) / (static_cast<double>(b) * d * subsets);
}

/// Empirical E|g^{b,q} - g|^2 at fixed parameters, where
/// g^{b,q} = (N/b) sum_{i in P} (d_i/d) grad F_i(theta, B_i) over uniform
/// b-subsets P and ceil(q d_i)-sample batches B_i, and g is the full gradient
/// sum_i (d_i/d) grad F_i(theta, D_i).
inline McEstimate McGradientVariance(const ClientPartition& partition,
                                     const LogisticRegression& model, const ModelParams& params,
                                     std::size_t b, double q, std::size_t trials,
                                     std::uint64_t seed) {
  const std::size_t N = partition.num_clients();
  Require(b >= 1 && b <= N, "need 1 <= b <= N");
  Require(q > 0.0 && q <= 1.0, "q must lie in (0, 1]");
  Require(trials >= 100, "need at least 100 trials");
  const std::size_t p = model.num_params();
  const double d = static_cast<double>(partition.total_size());

  // per-sample gradients, one row-major block per client
  std::vector<std::vector<double>> samples(N);
  std::vector<std::vector<double>> client_full(N);
  std::vector<double> global(p, 0.0);
  for (std::size_t i = 0; i < N; ++i) {
    const Dataset& client = partition.client_datasets[i];
    samples[i].resize(client.size() * p);
    for (std::size_t r = 0; r < client.size(); ++r) {
      const GradientVector g = model.SampleGradient(params, client, r);
      std::copy(g.values.begin(), g.values.end(), samples[i].begin() + static_cast<std::ptrdiff_t>(r * p));
    }
  }
  const auto batch_mean = [&](std::size_t i, std::span<const std::size_t> rows, std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t r : rows) {
      for (std::size_t j = 0; j < p; ++j) out[j] += samples[i][r * p + j];
    }
    for (double& v : out) v /= static_cast<double>(rows.size());
  };
  for (std::size_t i = 0; i < N; ++i) {
    const std::size_t d_i = partition.client_datasets[i].size();
    std::vector<std::size_t> all(d_i);
    std::iota(all.begin(), all.end(), std::size_t{0});
    client_full[i].resize(p);
    batch_mean(i, all, client_full[i]);
    const double weight = static_cast<double>(d_i) / d;
    for (std::size_t j = 0; j < p; ++j) global[j] += weight * client_full[i][j];
  }

  Rng rng = MakeRng(seed, {0x9a2d});
  internal::RunningStats stats;
  std::vector<double> sampled(p);
  std::vector<double> mean(p);
  for (std::size_t k = 0; k < trials; ++k) {
    std::fill(sampled.begin(), sampled.end(), 0.0);
    for (std::size_t i : SelectClientsUniform(N, b, rng)) {
      const std::size_t d_i = partition.client_datasets[i].size();
      const std::vector<std::size_t> rows = SampleBatch(d_i, q, rng);
      batch_mean(i, rows, mean);
      const double weight =
          static_cast<double>(N) * static_cast<double>(d_i) / (static_cast<double>(b) * d);
      for (std::size_t j = 0; j < p; ++j) sampled[j] += weight * mean[j];
    }
    stats.Add(SquaredDistance(sampled, global));
  }
  return stats.Estimate();
}

struct GridMinimum {
  std::size_t T = 0;
  std::size_t b = 1;
  double value = std::numeric_limits<double>::infinity();
};

/// Exhaustive minimum over T in {0, step, ..., T_max} x b in {1..N}; ties keep
/// the smallest T, then the smallest b.
inline GridMinimum GridMinimizeBound(MechanismKind kind, const BoundConstants& c, std::size_t T_max,
                                     std::size_t step = 1) {
  Require(T_max >= 1 && step >= 1, "grid needs T_max >= 1 and step >= 1");
  c.Validate(kind);
  GridMinimum best;
  for (std::size_t T = 0; T <= T_max; T += step) {
    for (std::size_t b = 1; b <= c.N; ++b) {
      const double value =
          BoundFor(kind, static_cast<double>(T), static_cast<double>(b), c);
      if (value < best.value) best = {T, b, value};
    }
  }
  return best;
}

}  // namespace dpfed

#endif  // DPFED_VALIDATION_HPP_
