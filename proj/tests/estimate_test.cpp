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
#include <numeric>
#include <vector>

#include "dpfed/dataset.hpp"
#include "dpfed/estimate.hpp"
#include "dpfed/federation.hpp"
#include "dpfed/model.hpp"

using namespace dpfed;

namespace {

ProbeConfig Probe(std::size_t N) {
  ProbeConfig probe;
  probe.spec = {.kind = MechanismKind::kLaplace, .xi1 = 50.0};
  probe.budgets.assign(N, {1.0, 0.0});
  return probe;
}

}  // namespace

TEST_CASE("identical clients have no non-iid degree", "[estimate]") {
  const Dataset data = MakeSyntheticDataset(120, 4, 3, 2.0, 3);
  const LogisticRegression model(4, 3, 0.1);
  ClientPartition replicated;
  replicated.client_datasets.assign(4, data);
  const EstimateResult est = EstimateConstants(replicated, model, Probe(4));
  CHECK(est.constants.Gamma < 1e-12);
  CHECK(est.warnings.empty());
  for (const auto& local : est.local_optima) CHECK(local.values == est.local_optima[0].values);
  CHECK(std::abs(est.gamma_from_global_fit) < 1e-10);
}

TEST_CASE("an iid split has a small non-iid degree", "[estimate]") {
  const Dataset data = MakeSyntheticDataset(4000, 5, 4, 1.5, 8);
  const LogisticRegression model(5, 4, 0.1);
  // rows are already shuffled, so contiguous blocks form an iid split
  ClientPartition iid;
  for (std::size_t i = 0; i < 4; ++i) {
    std::vector<std::size_t> rows(1000);
    std::iota(rows.begin(), rows.end(), i * 1000);
    iid.client_datasets.push_back(data.Subset(rows));
  }
  const ClientPartition skewed = PartitionNonIid(data, 4, 1, 2);
  const EstimateResult iid_est = EstimateConstants(iid, model, Probe(4));
  const EstimateResult skewed_est = EstimateConstants(skewed, model, Probe(4));
  // sampling noise between 1000-row clients is a few hundredths
  CHECK(iid_est.constants.Gamma < 0.05);
  CHECK(std::abs(iid_est.gamma_from_global_fit) < 0.01);
  CHECK(skewed_est.gamma_from_global_fit > 0.5);
}

TEST_CASE("starting at the only client's optimum gives Y0 near zero", "[estimate]") {
  const Dataset data = MakeSyntheticDataset(200, 3, 2, 1.0, 5);
  const LogisticRegression model(3, 2, 0.05);
  ClientPartition single;
  single.client_datasets = {data};
  ModelParams opt = model.Zeros();
  FitOptimum(model, data, opt, model.SmoothnessBound(data), 0.05, 20000, 1e-9);
  ProbeConfig probe = Probe(1);
  probe.theta0 = opt;
  const EstimateResult est = EstimateConstants(single, model, probe);
  CHECK(est.constants.Y0 < 1e-12);
  CHECK(est.constants.Gamma == 0.0);
  CHECK(est.constants.N == 1);
}

TEST_CASE("estimated constants are shaped for the bounds", "[estimate]") {
  const Dataset data = MakeSyntheticDataset(600, 6, 4, 2.0, 9);
  const ClientPartition partition = PartitionNonIid(data, 6, 2, 1);
  const LogisticRegression model(6, 4, 0.05);
  const EstimateResult est = EstimateConstants(partition, model, Probe(6));
  const BoundConstants& c = est.constants;
  CHECK_NOTHROW(c.Validate(MechanismKind::kLaplace));
  CHECK(c.mu == 0.05);
  CHECK(c.lambda == model.SmoothnessBound(partition.Pooled()));
  CHECK(c.p == 24);
  CHECK(c.d == static_cast<double>(partition.total_size()));
  CHECK(c.Lambda.size() == 6);
  CHECK(c.client_sizes.size() == 6);
  CHECK(c.Gamma > 0.0);
  CHECK(c.Y0 > 0.0);
  double y0 = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    y0 += c.client_sizes[i] / c.d * SquaredDistance(model.Zeros().values, est.local_optima[i].values);
    CHECK(est.local_converged[i]);
  }
  CHECK(c.Y0 == Catch::Approx(y0).epsilon(1e-14));
  // the Gamma estimator upper-bounds the definition computed from a global fit
  CHECK(est.gamma_from_global_fit <= c.Gamma + 1e-9);
}

TEST_CASE("estimated G covers every gradient seen while training", "[estimate]") {
  const Dataset data = MakeSyntheticDataset(500, 5, 4, 2.0, 12);
  const ClientPartition partition = PartitionNonIid(data, 5, 2, 4);
  const LogisticRegression model(5, 4, 0.05);
  ProbeConfig probe = Probe(5);
  probe.spec.kind = MechanismKind::kNone;
  const EstimateResult est = EstimateConstants(partition, model, probe);
  const double G = est.constants.G;

  // a clip at the estimated G never rescales
  const DpMechanismSpec clip_at_g{.kind = MechanismKind::kGaussian, .xi2 = G, .q = 0.5};
  FederationSchedule schedule;
  schedule.num_clients = 5;
  schedule.participants = 2;
  schedule.rounds = 200;
  schedule.mu = est.constants.mu;
  schedule.lambda = est.constants.lambda;
  FederationOptions opts;
  std::size_t checked = 0;
  double worst = 0.0;
  opts.on_round = [&](std::size_t, const ModelParams& theta) {
    const Dataset pooled = partition.Pooled();
    for (std::size_t r = 0; r < pooled.size(); ++r) {
      const GradientVector g = model.SampleGradient(theta, pooled, r);
      worst = std::max(worst, Norm(g.values, NormOrder::kL2));
      CHECK(ClipForMechanism(g, clip_at_g).values == g.values);
      ++checked;
    }
  };
  RunFederation(partition, model, {}, std::vector<PrivacyBudget>(5), schedule, opts);
  CHECK(checked == 200 * partition.total_size());
  CHECK(worst <= G);
}

TEST_CASE("clipped G never exceeds the clip bound", "[estimate]") {
  const Dataset data = MakeSyntheticDataset(200, 4, 2, 3.0, 2);
  const LogisticRegression model(4, 2, 0.01);
  const DpMechanismSpec spec{.kind = MechanismKind::kGaussian, .xi2 = 0.1, .q = 0.5};
  ModelParams theta = model.Zeros();
  CHECK(MaxSampleGradientNormSq(model, data, theta, &spec) <= 0.1 * 0.1);
  CHECK(MaxSampleGradientNormSq(model, data, theta) > 0.01);
}

TEST_CASE("unconverged local fits are flagged", "[estimate]") {
  const Dataset data = MakeSyntheticDataset(200, 4, 2, 1.0, 2);
  const ClientPartition partition = PartitionNonIid(data, 2, 1, 2);
  const LogisticRegression model(4, 2, 0.01);
  ProbeConfig probe = Probe(2);
  probe.fit_iters = 2;
  const EstimateResult est = EstimateConstants(partition, model, probe);
  CHECK_FALSE(est.local_converged[0]);
  CHECK(est.warnings.size() >= 2);

  probe.budgets.resize(1);
  CHECK_THROWS_AS(EstimateConstants(partition, model, probe), Error);
  const LogisticRegression flat(4, 2, 0.0);
  CHECK_THROWS_AS(EstimateConstants(partition, flat, Probe(2)), Error);
}
