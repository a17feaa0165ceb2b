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
#ifndef DPFED_FEDERATION_HPP_
#define DPFED_FEDERATION_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpfed/dataset.hpp"
#include "dpfed/error.hpp"
#include "dpfed/mechanisms.hpp"
#include "dpfed/model.hpp"
#include "dpfed/random.hpp"
#include "dpfed/schedule.hpp"

namespace dpfed {

/// Clients (t*b mod N), ..., (t*b + b - 1 mod N). Over N consecutive rounds
/// every client is picked exactly b times.
inline std::vector<std::size_t> SelectClientsRoundRobin(std::size_t round, std::size_t N,
                                                        std::size_t b) {
  Require(b >= 1 && b <= N, "need 1 <= b <= N");
  std::vector<std::size_t> ids(b);
  const std::size_t start = static_cast<std::size_t>((static_cast<unsigned __int128>(round) * b) % N);
  for (std::size_t k = 0; k < b; ++k) ids[k] = (start + k) % N;
  return ids;
}

// Uniform b-subset without replacement, returned in increasing order.
inline std::vector<std::size_t> SelectClientsUniform(std::size_t N, std::size_t b, Rng& rng) {
  Require(b >= 1 && b <= N, "need 1 <= b <= N");
  std::vector<std::size_t> pool(N);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t k = 0; k < b; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, N - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(b);
  std::sort(pool.begin(), pool.end());
  return pool;
}

inline std::size_t BatchSize(double q, std::size_t d_i) {
  const auto m = static_cast<std::size_t>(std::ceil(q * static_cast<double>(d_i) - 1e-9));
  return std::clamp<std::size_t>(m, d_i == 0 ? 0 : 1, d_i);
}

// ceil(q d_i) rows without replacement; the full set, in order, when q = 1.
inline std::vector<std::size_t> SampleBatch(std::size_t d_i, double q, Rng& rng) {
  const std::size_t m = BatchSize(q, d_i);
  Require(m >= 1, "client batch would be empty", ErrorCode::kEmptyBatch);
  std::vector<std::size_t> rows(d_i);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  if (m == d_i) return rows;
  for (std::size_t k = 0; k < m; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, d_i - 1);
    std::swap(rows[k], rows[pick(rng)]);
  }
  rows.resize(m);
  return rows;
}

inline GradientVector ClipForMechanism(const GradientVector& grad, const DpMechanismSpec& spec) {
  switch (spec.kind) {
    case MechanismKind::kLaplace: return ClipGradient(grad, spec.xi1, NormOrder::kL1);
    case MechanismKind::kGaussian: return ClipGradient(grad, spec.xi2, NormOrder::kL2);
    case MechanismKind::kNone: return grad;
  }
  return grad;
}

/// One local step: theta_t - eta_t (clip(g) + w) on a batch of
/// ceil(q d_i) samples, q being the schedule's sampling rate.
inline ModelParams ClientUpdate(const ModelParams& global, const Dataset& client_data,
                                const LogisticRegression& model, const DpMechanismSpec& spec,
                                const PrivacyBudget& budget, const FederationSchedule& schedule,
                                std::size_t t, Rng& rng) {
  Require(global.size() == model.num_params(), "parameter vector has wrong length");
  Require(!client_data.empty(), "client holds no data", ErrorCode::kEmptyBatch);
  const std::vector<std::size_t> batch =
      SampleBatch(client_data.size(), schedule.sampling_rate, rng);
  const GradientVector grad = ClipForMechanism(model.Gradient(global, client_data, batch), spec);
  const NoiseVector noise = SampleNoise(spec, budget, schedule,
                                        static_cast<double>(client_data.size()), global.size(), rng);
  const double eta = schedule.eta(t);
  ModelParams out = global;
  for (std::size_t k = 0; k < out.size(); ++k) {
    out.values[k] -= eta * (grad.values[k] + noise.values[k]);
  }
  return out;
}

struct ClientReply {
  std::size_t client_id = 0;
  ModelParams params;
};

/// (N/b) sum_i (d_i/d) theta_i, reduced in increasing client-id order.
inline ModelParams Aggregate(std::span<const ClientReply> replies,
                             std::span<const std::size_t> client_sizes, std::size_t N,
                             std::size_t b) {
  Require(client_sizes.size() == N, "need one size per client");
  if (replies.size() != b) {
    throw Error(ErrorCode::kReplyCount, "expected " + std::to_string(b) + " replies, got " +
                                            std::to_string(replies.size()));
  }
  std::vector<const ClientReply*> ordered;
  for (const ClientReply& r : replies) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const ClientReply* a, const ClientReply* c) { return a->client_id < c->client_id; });
  for (std::size_t k = 0; k < ordered.size(); ++k) {
    Require(ordered[k]->client_id < N, "reply from unknown client");
    if (k > 0 && ordered[k]->client_id == ordered[k - 1]->client_id) {
      throw Error(ErrorCode::kDuplicateReply,
                  "duplicate reply from client " + std::to_string(ordered[k]->client_id));
    }
  }
  const double d = static_cast<double>(std::accumulate(client_sizes.begin(), client_sizes.end(),
                                                       std::size_t{0}));
  const std::size_t p = ordered.front()->params.size();
  ModelParams out{std::vector<double>(p, 0.0)};
  for (const ClientReply* r : ordered) {
    Require(r->params.size() == p, "replies disagree on parameter length");
    const double weight = static_cast<double>(N) * static_cast<double>(client_sizes[r->client_id]) /
                          (static_cast<double>(b) * d);
    for (std::size_t k = 0; k < p; ++k) out.values[k] += weight * r->params.values[k];
  }
  return out;
}

enum class SelectionMode { kRoundRobin, kUniform };

struct RoundRecord {
  std::size_t t = 0;
  std::vector<std::size_t> selected;
  double train_loss = 0.0;
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
  double eta = 0.0;
  double dist_sq_opt = std::numeric_limits<double>::quiet_NaN();
};

struct TrainingTrace {
  std::vector<RoundRecord> rounds;
  ModelParams final_params;
};

struct FederationOptions {
  const Dataset* test_set = nullptr;
  std::optional<ModelParams> reference_optimum;
  std::optional<ModelParams> initial_params;  // zeros when absent
  SelectionMode selection = SelectionMode::kRoundRobin;
  // Called with the global parameters at the start of every round.
  std::function<void(std::size_t, const ModelParams&)> on_round;
};

/// Runs T rounds of select -> local noisy step -> weighted aggregation.
/// Client c in round t draws from stream (base_seed, t, c), so the result does
/// not depend on the order in which client updates are evaluated.
inline TrainingTrace RunFederation(const ClientPartition& partition,
                                   const LogisticRegression& model, const DpMechanismSpec& spec,
                                   std::span<const PrivacyBudget> budgets,
                                   const FederationSchedule& schedule,
                                   const FederationOptions& options = {}) {
  schedule.Validate();
  spec.Validate();
  Require(partition.num_clients() == schedule.num_clients,
          "partition has " + std::to_string(partition.num_clients()) + " clients, schedule expects " +
              std::to_string(schedule.num_clients));
  Require(budgets.size() == schedule.num_clients, "need one privacy budget per client");
  for (const auto& budget : budgets) spec.ValidateBudget(budget);
  Require(spec.kind == MechanismKind::kNone || spec.q == schedule.sampling_rate,
          "schedule sampling rate must equal the mechanism's q");

  const std::vector<std::size_t> sizes = partition.client_sizes();
  const Dataset pooled = partition.Pooled();

  TrainingTrace trace;
  trace.final_params = options.initial_params.value_or(model.Zeros());
  Require(trace.final_params.size() == model.num_params(), "initial parameters have wrong length");
  ModelParams& theta = trace.final_params;

  Rng selection_rng = MakeRng(schedule.base_seed, {0x5e1ec7});
  for (std::size_t t = 0; t < schedule.rounds; ++t) {
    try {
      if (options.on_round) options.on_round(t, theta);
      RoundRecord record;
      record.t = t;
      record.eta = schedule.eta(t);
      record.selected =
          options.selection == SelectionMode::kRoundRobin
              ? SelectClientsRoundRobin(t, schedule.num_clients, schedule.participants)
              : SelectClientsUniform(schedule.num_clients, schedule.participants, selection_rng);

      std::vector<ClientReply> replies;
      replies.reserve(record.selected.size());
      for (std::size_t id : record.selected) {
        Rng rng = MakeRng(schedule.base_seed, {t, id});
        replies.push_back({id, ClientUpdate(theta, partition.client_datasets[id], model, spec,
                                            budgets[id], schedule, t, rng)});
      }
      theta = Aggregate(replies, sizes, schedule.num_clients, schedule.participants);

      record.train_loss = model.Loss(theta, pooled);
      if (options.test_set != nullptr) record.test_accuracy = model.Accuracy(theta, *options.test_set);
      if (options.reference_optimum) {
        record.dist_sq_opt = SquaredDistance(theta.values, options.reference_optimum->values);
      }
      trace.rounds.push_back(std::move(record));
    } catch (const Error& e) {
      throw Error(e.code(), "round " + std::to_string(t) + ": " + e.what());
    }
  }
  return trace;
}

}  // namespace dpfed

#endif  // DPFED_FEDERATION_HPP_
