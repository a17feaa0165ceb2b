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
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <string>
#include <vector>

#include "dpfed/dataset.hpp"
#include "dpfed/federation.hpp"
#include "dpfed/model.hpp"
#include "dpfed/schedule.hpp"

using namespace dpfed;

namespace {

FederationSchedule Schedule(std::size_t N, std::size_t b, std::size_t T, double mu, double lambda) {
  FederationSchedule s;
  s.num_clients = N;
  s.participants = b;
  s.rounds = T;
  s.mu = mu;
  s.lambda = lambda;
  s.base_seed = 99;
  return s;
}

ClientPartition Replicated(const Dataset& data, std::size_t N) {
  ClientPartition out;
  out.client_datasets.assign(N, data);
  return out;
}

}  // namespace

TEST_CASE("learning rate schedule", "[federation]") {
  CHECK(LearningRate(0, 1, 1) == 1.0);
  CHECK(LearningRate(2, 1, 1) == 0.5);
  const double mu = 0.3;
  const double lambda = 2.5;
  const double gamma = 2 * lambda / mu;
  CHECK(LearningRate(0, mu, lambda) == Catch::Approx(1.0 / lambda).epsilon(1e-15));
  for (int t = 0; t < 50; ++t) {
    CHECK(LearningRate(t, mu, lambda) * (t + gamma) == Catch::Approx(2.0 / mu).epsilon(1e-14));
    CHECK(LearningRate(t + 1, mu, lambda) < LearningRate(t, mu, lambda));
  }
  CHECK_THROWS_AS(LearningRate(0, 0, 1), Error);
  FederationSchedule s = Schedule(2, 1, 3, mu, lambda);
  CHECK(s.gamma() == gamma);
  s.participants = 3;
  CHECK_THROWS_AS(s.Validate(), Error);
}

TEST_CASE("round-robin selection", "[federation]") {
  using V = std::vector<std::size_t>;
  CHECK(SelectClientsRoundRobin(0, 10, 5) == V{0, 1, 2, 3, 4});
  CHECK(SelectClientsRoundRobin(1, 10, 5) == V{5, 6, 7, 8, 9});
  CHECK(SelectClientsRoundRobin(3, 10, 5) == V{5, 6, 7, 8, 9});
  CHECK(SelectClientsRoundRobin(7, 4, 4) == V{0, 1, 2, 3});
  CHECK(SelectClientsRoundRobin(2, 7, 3) == V{6, 0, 1});
  CHECK_THROWS_AS(SelectClientsRoundRobin(0, 3, 0), Error);

  for (std::size_t N : {1u, 3u, 7u, 10u}) {
    for (std::size_t b = 1; b <= N; ++b) {
      for (std::size_t start : {0u, 5u, 13u}) {
        std::vector<std::size_t> count(N, 0);
        for (std::size_t t = start; t < start + N; ++t) {
          for (std::size_t id : SelectClientsRoundRobin(t, N, b)) ++count[id];
        }
        CHECK(count == std::vector<std::size_t>(N, b));
      }
    }
  }
}

TEST_CASE("uniform selection draws distinct sorted ids", "[federation]") {
  Rng rng = MakeRng(4);
  std::vector<std::size_t> hits(9, 0);
  for (int k = 0; k < 3000; ++k) {
    const auto ids = SelectClientsUniform(9, 4, rng);
    REQUIRE(ids.size() == 4);
    for (std::size_t j = 1; j < ids.size(); ++j) REQUIRE(ids[j - 1] < ids[j]);
    for (std::size_t id : ids) ++hits[id];
  }
  // each id appears with probability 4/9
  for (std::size_t h : hits) CHECK(std::abs(h / 3000.0 - 4.0 / 9.0) < 0.04);
}

TEST_CASE("batch size", "[federation]") {
  CHECK(BatchSize(1.0, 17) == 17);
  CHECK(BatchSize(0.1, 100) == 10);
  CHECK(BatchSize(0.1, 101) == 11);
  CHECK(BatchSize(0.001, 5) == 1);
  Rng rng = MakeRng(3);
  const auto rows = SampleBatch(20, 0.25, rng);
  CHECK(rows.size() == 5);
  CHECK_THROWS_AS(SampleBatch(0, 0.5, rng), Error);
}

TEST_CASE("aggregate", "[federation]") {
  const std::vector<std::size_t> sizes = {1, 3};
  const std::vector<ClientReply> replies = {{1, {{8.0}}}, {0, {{4.0}}}};
  CHECK(Aggregate(replies, sizes, 2, 2).values == std::vector<double>{7.0});

  const std::vector<std::size_t> equal = {5, 5, 5, 5};
  const std::vector<ClientReply> all = {{0, {{1.0, 2.0}}}, {1, {{3.0, 2.0}}}, {2, {{5.0, 0.0}}},
                                        {3, {{7.0, 4.0}}}};
  const auto avg = Aggregate(all, equal, 4, 4).values;
  CHECK(avg[0] == Catch::Approx(4.0).epsilon(1e-15));
  CHECK(avg[1] == Catch::Approx(2.0).epsilon(1e-15));
  const std::vector<ClientReply> one = {{2, {{5.5, -1.25}}}};
  CHECK(Aggregate(one, equal, 4, 1).values == std::vector<double>{5.5, -1.25});

  try {
    const std::vector<ClientReply> dup = {{1, {{1.0}}}, {1, {{2.0}}}};
    Aggregate(dup, sizes, 2, 2);
    FAIL("duplicate ids accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDuplicateReply);
  }
  try {
    Aggregate(one, equal, 4, 2);
    FAIL("short reply list accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kReplyCount);
  }
}

TEST_CASE("client update", "[federation]") {
  const Dataset data = MakeSyntheticDataset(40, 3, 3, 2.0, 8);
  const LogisticRegression model(3, 3, 0.1);
  FederationSchedule schedule = Schedule(1, 1, 5, 0.1, model.SmoothnessBound(data));
  ModelParams theta = model.Zeros();
  for (std::size_t k = 0; k < theta.size(); ++k) theta.values[k] = 0.1 * static_cast<double>(k % 4);

  SECTION("no mechanism and q = 1 is a plain gradient step") {
    Rng rng = MakeRng(1);
    const ModelParams out = ClientUpdate(theta, data, model, {}, {1.0, 0.0}, schedule, 2, rng);
    const GradientVector g = model.Gradient(theta, data);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      CHECK(out.values[k] == theta.values[k] - schedule.eta(2) * g.values[k]);
    }
  }
  SECTION("same seed gives the same update") {
    const DpMechanismSpec spec{.kind = MechanismKind::kLaplace, .xi1 = 1.0};
    Rng a = MakeRng(7, {2, 0});
    Rng b = MakeRng(7, {2, 0});
    CHECK(ClientUpdate(theta, data, model, spec, {1.0, 0.0}, schedule, 2, a).values ==
          ClientUpdate(theta, data, model, spec, {1.0, 0.0}, schedule, 2, b).values);
  }
  SECTION("noisy updates average to the noiseless clipped step") {
    const DpMechanismSpec spec{.kind = MechanismKind::kGaussian, .xi2 = 0.5, .q = 1.0 - 1e-12};
    schedule.sampling_rate = spec.q;
    const PrivacyBudget budget{2.0, 1e-3};
    const GradientVector clipped = ClipForMechanism(model.Gradient(theta, data), spec);
    const double sigma = NoiseScale(spec, budget, schedule, 40.0);
    const double eta = schedule.eta(1);
    constexpr int kTrials = 10000;
    std::vector<double> sum(theta.size(), 0.0);
    Rng rng = MakeRng(21);
    for (int k = 0; k < kTrials; ++k) {
      const auto out = ClientUpdate(theta, data, model, spec, budget, schedule, 1, rng);
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += out.values[j];
    }
    const double se = eta * sigma / std::sqrt(double(kTrials));
    for (std::size_t j = 0; j < sum.size(); ++j) {
      const double expected = theta.values[j] - eta * clipped.values[j];
      CHECK(std::abs(sum[j] / kTrials - expected) < 4.0 * se);
    }
  }
}

TEST_CASE("federation with no rounds returns the initial parameters", "[federation]") {
  const Dataset data = MakeSyntheticDataset(30, 2, 2, 1.0, 3);
  const LogisticRegression model(2, 2, 0.1);
  const std::vector<PrivacyBudget> budgets(2);
  FederationOptions opts;
  opts.initial_params = ModelParams{{0.5, -0.5, 1.0, 2.0}};
  const auto trace =
      RunFederation(Replicated(data, 2), model, {}, budgets, Schedule(2, 1, 0, 0.1, 1.0), opts);
  CHECK(trace.rounds.empty());
  CHECK(trace.final_params.values == opts.initial_params->values);
  const auto zero = RunFederation(Replicated(data, 2), model, {}, budgets, Schedule(2, 1, 0, 0.1, 1.0));
  CHECK(zero.final_params.values == model.Zeros().values);
}

TEST_CASE("replicated noiseless federation equals centralized gradient descent", "[federation]") {
  const Dataset data = MakeSyntheticDataset(60, 4, 3, 1.5, 17);
  const LogisticRegression model(4, 3, 0.05);
  const double lambda = model.SmoothnessBound(data);
  constexpr std::size_t kRounds = 25;

  for (std::size_t N : {1u, 2u, 4u, 3u, 5u}) {
    const FederationSchedule schedule = Schedule(N, N, kRounds, 0.05, lambda);
    std::vector<ModelParams> seen;
    FederationOptions opts;
    opts.on_round = [&](std::size_t, const ModelParams& p) { seen.push_back(p); };
    const std::vector<PrivacyBudget> budgets(N);
    const auto trace = RunFederation(Replicated(data, N), model, {}, budgets, schedule, opts);
    seen.push_back(trace.final_params);

    ModelParams theta = model.Zeros();
    for (std::size_t t = 0; t <= kRounds; ++t) {
      const bool power_of_two = (N & (N - 1)) == 0;
      for (std::size_t k = 0; k < theta.size(); ++k) {
        if (power_of_two) {
          REQUIRE(seen[t].values[k] == theta.values[k]);
        } else {
          REQUIRE(seen[t].values[k] == Catch::Approx(theta.values[k]).epsilon(1e-12).margin(1e-14));
        }
      }
      if (t == kRounds) break;
      const GradientVector g = model.Gradient(theta, data);
      for (std::size_t k = 0; k < theta.size(); ++k) theta.values[k] -= schedule.eta(t) * g.values[k];
    }
  }
}

TEST_CASE("trace records", "[federation]") {
  const Dataset data = MakeSyntheticDataset(200, 5, 4, 2.0, 1);
  const Dataset test = MakeSyntheticDataset(100, 5, 4, 2.0, 2);
  const ClientPartition partition = PartitionNonIid(data, 4, 2, 5);
  const LogisticRegression model(5, 4, 0.05);
  const FederationSchedule schedule = Schedule(4, 2, 12, 0.05, model.SmoothnessBound(data));
  const DpMechanismSpec spec{.kind = MechanismKind::kLaplace, .xi1 = 5.0};
  const std::vector<PrivacyBudget> budgets(4, {5.0, 0.0});
  FederationOptions opts;
  opts.test_set = &test;
  opts.reference_optimum = model.Zeros();
  const auto trace = RunFederation(partition, model, spec, budgets, schedule, opts);
  REQUIRE(trace.rounds.size() == 12);
  for (std::size_t t = 0; t < 12; ++t) {
    const auto& r = trace.rounds[t];
    CHECK(r.t == t);
    CHECK(r.selected == SelectClientsRoundRobin(t, 4, 2));
    CHECK(r.eta == schedule.eta(t));
    if (t > 0) CHECK(r.eta < trace.rounds[t - 1].eta);
    CHECK(r.test_accuracy >= 0.0);
    CHECK(r.test_accuracy <= 1.0);
    CHECK(std::isfinite(r.train_loss));
  }
  CHECK(trace.rounds.back().dist_sq_opt ==
        Catch::Approx(SquaredDistance(trace.final_params.values, model.Zeros().values)));
  CHECK(trace.rounds.back().train_loss == Catch::Approx(model.Loss(trace.final_params, partition.Pooled())));

  SECTION("trace is a pure function of its inputs") {
    const auto again = RunFederation(partition, model, spec, budgets, schedule, opts);
    CHECK(again.final_params.values == trace.final_params.values);
    FederationSchedule other = schedule;
    other.base_seed += 1;
    CHECK(RunFederation(partition, model, spec, budgets, other, opts).final_params.values !=
          trace.final_params.values);
  }
}

TEST_CASE("noiseless full participation never increases the loss", "[federation]") {
  const Dataset data = MakeSyntheticDataset(300, 6, 3, 1.0, 31);
  const ClientPartition partition = PartitionNonIid(data, 3, 1, 2);
  const LogisticRegression model(6, 3, 0.01);
  const FederationSchedule schedule = Schedule(3, 3, 200, 0.01, model.SmoothnessBound(data));
  const std::vector<PrivacyBudget> budgets(3);
  const auto trace = RunFederation(partition, model, {}, budgets, schedule);
  for (std::size_t t = 1; t < trace.rounds.size(); ++t) {
    CHECK(trace.rounds[t].train_loss <= trace.rounds[t - 1].train_loss + 1e-9);
  }
}

TEST_CASE("federation errors carry the round index", "[federation]") {
  const Dataset data = MakeSyntheticDataset(20, 2, 2, 1.0, 3);
  const LogisticRegression model(2, 2, 0.1);
  ClientPartition partition = Replicated(data, 2);
  partition.client_datasets[1] = data.Subset({});
  const std::vector<PrivacyBudget> budgets(2);
  try {
    RunFederation(partition, model, {}, budgets, Schedule(2, 1, 3, 0.1, 1.0));
    FAIL("empty client accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kEmptyBatch);
    CHECK(std::string(e.what()).rfind("round 1: ", 0) == 0);
  }
  const DpMechanismSpec gaussian{.kind = MechanismKind::kGaussian, .q = 0.5};
  CHECK_THROWS_AS(RunFederation(Replicated(data, 2), model, gaussian,
                                std::vector<PrivacyBudget>(2, {1.0, 1e-5}),
                                Schedule(2, 1, 3, 0.1, 1.0)),
                  Error);
  CHECK_THROWS_AS(RunFederation(Replicated(data, 2), model, {}, std::vector<PrivacyBudget>(3),
                                Schedule(2, 1, 3, 0.1, 1.0)),
                  Error);
}
