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
#ifndef DPFED_HARNESS_EXPERIMENT_HPP_
#define DPFED_HARNESS_EXPERIMENT_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dpfed/bounds.hpp"
#include "dpfed/dataset.hpp"
#include "dpfed/estimate.hpp"
#include "dpfed/federation.hpp"
#include "dpfed/harness/config.hpp"
#include "dpfed/harness/serialize.hpp"
#include "dpfed/model.hpp"

namespace dpfed::harness {

struct PreparedData {
  Dataset train;
  std::optional<Dataset> test;
  ClientPartition partition;
  LogisticRegression model;
};

namespace internal {

inline Dataset FirstRows(const Dataset& data, std::size_t count) {
  std::vector<std::size_t> rows(std::min(count, data.size()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return data.Subset(rows);
}

inline Dataset Scaled(const Dataset& data, double scale) {
  if (scale == 1.0) return data;
  std::vector<double> features = data.features();
  for (double& x : features) x *= scale;
  return Dataset(data.n_features(), data.n_classes(), std::move(features), data.labels());
}

inline Dataset WithClasses(const Dataset& data, std::size_t n_classes) {
  if (data.n_classes() == n_classes) return data;
  return Dataset(data.n_features(), n_classes, data.features(), data.labels());
}

}  // namespace internal

/// Loads or generates the data, partitions it across clients and builds the
/// model. Everything here depends only on the configuration.
inline PreparedData PrepareData(const ExperimentConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  Dataset train;
  std::optional<Dataset> test;
  if (d.source == "synthetic") {
    const Dataset all = internal::Scaled(
        MakeSyntheticDataset(d.samples + d.test_samples, d.features, d.classes, d.separation, d.seed),
        d.scale);
    std::vector<std::size_t> train_rows(d.samples);
    std::iota(train_rows.begin(), train_rows.end(), std::size_t{0});
    train = all.Subset(train_rows);
    if (d.test_samples > 0) {
      std::vector<std::size_t> test_rows(d.test_samples);
      std::iota(test_rows.begin(), test_rows.end(), d.samples);
      test = all.Subset(test_rows);
    }
  } else {
    train = LoadIdxDataset(d.train_images, d.train_labels);
    if (!d.test_images.empty()) {
      test = LoadIdxDataset(d.test_images, d.test_labels);
      Require(test->n_features() == train.n_features(), "test images differ in size from training images",
              ErrorCode::kConfig);
      const std::size_t classes = std::max(train.n_classes(), test->n_classes());
      train = internal::WithClasses(train, classes);
      test = internal::WithClasses(*test, classes);
    }
  }
  if (d.limit > 0) train = internal::FirstRows(train, d.limit);

  PartitionOptions options;
  options.equal_sizes = cfg.partition.equal_sizes;
  ClientPartition partition = PartitionNonIid(train, cfg.partition.clients,
                                              cfg.partition.classes_per_client,
                                              DeriveSeed(cfg.seed, {0x9a27}), options);
  if (cfg.partition.data_fraction < 1.0) {
    partition = SubsampleClients(partition, cfg.partition.data_fraction, DeriveSeed(cfg.seed, {0xf7ac}));
  }
  LogisticRegression model(train.n_features(), train.n_classes(), cfg.l2);
  return {std::move(train), std::move(test), std::move(partition), model};
}

/// Learning-rate constants: configured values, else the model's bounds.
inline std::pair<double, double> ScheduleConstants(const ExperimentConfig& cfg,
                                                   const PreparedData& data) {
  const double mu = cfg.schedule.mu.value_or(data.model.StrongConvexityBound());
  const double lambda = cfg.schedule.lambda.value_or(data.model.SmoothnessBound(data.partition.Pooled()));
  Require(mu > 0.0, "mu is zero: set model.l2 > 0 or schedule.mu", ErrorCode::kConfig);
  Require(lambda >= mu, "schedule.lambda must be at least mu", ErrorCode::kConfig);
  return {mu, lambda};
}

inline EstimateResult EstimateForConfig(const ExperimentConfig& cfg, const PreparedData& data) {
  const auto [mu, lambda] = ScheduleConstants(cfg, data);
  ProbeConfig probe;
  probe.mu = mu;
  probe.lambda = lambda;
  probe.spec = cfg.mechanism;
  probe.budgets = cfg.budgets;
  return EstimateConstants(data.partition, data.model, probe);
}

/// Joint optimum of the mechanism's bound over T in [0, T_cap], b in [1, N].
inline PlanResult PlanFor(MechanismKind kind, const BoundConstants& c, double T_cap) {
  switch (kind) {
    case MechanismKind::kLaplace: return KktSolutionsLaplace(c, T_cap);
    case MechanismKind::kGaussian: return OptimalGaussian(c, T_cap);
    case MechanismKind::kNone: break;
  }
  throw Error(ErrorCode::kConfig, "planning needs a Laplace or Gaussian mechanism");
}

/// Optimum along one axis with the other fixed.
inline PlanResult PlanAlongAxis(MechanismKind kind, const BoundConstants& c, double T_cap,
                                std::optional<std::size_t> fixed_b,
                                std::optional<std::size_t> fixed_T) {
  Require(kind != MechanismKind::kNone, "planning needs a Laplace or Gaussian mechanism",
          ErrorCode::kConfig);
  c.Validate(kind);
  const auto bound = [&](double T, double b) { return BoundFor(kind, T, b, c); };
  PlanResult plan;
  if (fixed_b) {
    const double b = static_cast<double>(*fixed_b);
    double T = T_cap;
    if (kind == MechanismKind::kLaplace) {
      T = std::min(T_cap, OptimalTFixedBLaplace(c, b));
    } else if (bound(0.0, b) <= bound(std::floor(T_cap), b)) {
      T = 0.0;
    }
    CandidateSolution s = Integerize(T, b, c.N, T_cap, Provenance::kClosedFormT, bound);
    s.T_capped = T >= std::floor(T_cap);
    plan.candidates.push_back(s);
  } else {
    const double T = static_cast<double>(fixed_T.value());
    const double b = kind == MechanismKind::kLaplace ? OptimalBFixedTLaplace(c, T)
                                                     : static_cast<double>(c.N);
    plan.candidates.push_back(Integerize(T, b, c.N, T_cap, Provenance::kClosedFormB, bound));
  }
  if (plan.selected().T == 0) plan.warnings.emplace_back(kUselessLearningWarning);
  return plan;
}

struct ResolvedSchedule {
  std::size_t b = 1;
  std::size_t T = 0;
  double mu = 1.0;
  double lambda = 1.0;
  std::optional<PlanResult> plan;
  std::optional<BoundConstants> constants;
  std::vector<std::string> warnings;
};

inline ResolvedSchedule ResolveSchedule(const ExperimentConfig& cfg, const PreparedData& data) {
  ResolvedSchedule out;
  std::tie(out.mu, out.lambda) = ScheduleConstants(cfg, data);
  if (!cfg.auto_schedule()) {
    out.b = *cfg.schedule.participants;
    out.T = *cfg.schedule.rounds;
  } else {
    Require(cfg.mechanism.kind != MechanismKind::kNone,
            "an \"auto\" schedule needs a Laplace or Gaussian mechanism", ErrorCode::kConfig);
    BoundConstants c;
    if (!cfg.constants_path.empty()) {
      c = ConstantsFromJson(ReadJsonFile(cfg.constants_path));
      Require(c.N == cfg.partition.clients, "constants file has a different client count",
              ErrorCode::kConfig);
    } else {
      EstimateResult est = EstimateForConfig(cfg, data);
      c = est.constants;
      for (auto& w : est.warnings) out.warnings.push_back("estimate: " + w);
    }
    PlanResult plan = cfg.schedule.participants || cfg.schedule.rounds
                          ? PlanAlongAxis(cfg.mechanism.kind, c, cfg.schedule.T_cap,
                                          cfg.schedule.participants, cfg.schedule.rounds)
                          : PlanFor(cfg.mechanism.kind, c, cfg.schedule.T_cap);
    out.b = plan.selected().b;
    out.T = plan.selected().T;
    for (const auto& w : plan.warnings) out.warnings.push_back("plan: " + w);
    out.plan = std::move(plan);
    out.constants = std::move(c);
  }
  if (cfg.mechanism.kind == MechanismKind::kGaussian) {
    for (std::size_t i = 0; i < cfg.budgets.size(); ++i) {
      if (!ValidateGaussianEpsilon(cfg.mechanism.q, static_cast<double>(out.T), cfg.mechanism.c1,
                                   cfg.budgets[i].epsilon)) {
        out.warnings.push_back("client " + std::to_string(i) +
                               ": epsilon violates the Gaussian condition epsilon < c1 q^2 T");
      }
    }
  }
  return out;
}

struct TrialResult {
  std::uint64_t seed = 0;
  TrainingTrace trace;
  double final_loss = 0.0;
  double final_accuracy = std::numeric_limits<double>::quiet_NaN();
  double final_dist = std::numeric_limits<double>::quiet_NaN();
};

struct RoundSummary {
  double loss_mean = 0.0;
  double loss_std = 0.0;
  double acc_mean = 0.0;
  double acc_std = 0.0;
  double dist_mean = 0.0;
  double dist_std = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  ResolvedSchedule schedule;
  std::vector<TrialResult> trials;
  std::vector<RoundSummary> rounds;  // one per round, across trials
  RoundSummary final;                // final parameters, across trials
  double reference_grad_norm = 0.0;
};

namespace internal {

// Mean and sample standard deviation (0 for a single value).
inline std::pair<double, double> MeanStd(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / static_cast<double>(xs.size() - 1))};
}

inline RoundSummary Summarize(const std::vector<double>& loss, const std::vector<double>& acc,
                              const std::vector<double>& dist) {
  RoundSummary s;
  std::tie(s.loss_mean, s.loss_std) = MeanStd(loss);
  std::tie(s.acc_mean, s.acc_std) = MeanStd(acc);
  std::tie(s.dist_mean, s.dist_std) = MeanStd(dist);
  return s;
}

// Runs fn(k) for k in [0, count) on up to `threads` workers.
template <typename Fn>
void ParallelFor(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace internal

/// Resolves the schedule, then runs `repeat` federations; trial k uses base
/// seed TrialSeed(seed, k).
inline ExperimentResult RunExperiment(const ExperimentConfig& cfg) {
  const PreparedData data = PrepareData(cfg);
  ExperimentResult result;
  result.config = cfg;
  result.schedule = ResolveSchedule(cfg, data);
  const ResolvedSchedule& rs = result.schedule;

  const Dataset pooled = data.partition.Pooled();
  ModelParams reference = data.model.Zeros();
  result.reference_grad_norm =
      FitOptimum(data.model, pooled, reference, data.model.SmoothnessBound(pooled),
                 data.model.StrongConvexityBound(), 5000, 1e-8);

  FederationSchedule schedule;
  schedule.num_clients = cfg.partition.clients;
  schedule.participants = rs.b;
  schedule.rounds = rs.T;
  schedule.mu = rs.mu;
  schedule.lambda = rs.lambda;
  schedule.sampling_rate = cfg.mechanism.q;

  FederationOptions options;
  options.test_set = data.test ? &*data.test : nullptr;
  options.reference_optimum = reference;
  options.selection = cfg.schedule.selection;

  result.trials.resize(cfg.repeat);
  internal::ParallelFor(cfg.repeat, cfg.threads, [&](std::size_t k) {
    FederationSchedule trial_schedule = schedule;
    trial_schedule.base_seed = TrialSeed(cfg.seed, k);
    TrialResult& trial = result.trials[k];
    trial.seed = trial_schedule.base_seed;
    trial.trace = RunFederation(data.partition, data.model, cfg.mechanism, cfg.budgets,
                                trial_schedule, options);
    trial.final_loss = data.model.Loss(trial.trace.final_params, pooled);
    if (data.test) trial.final_accuracy = data.model.Accuracy(trial.trace.final_params, *data.test);
    trial.final_dist = SquaredDistance(trial.trace.final_params.values, reference.values);
  });

  std::vector<double> loss(cfg.repeat);
  std::vector<double> acc(cfg.repeat);
  std::vector<double> dist(cfg.repeat);
  for (std::size_t t = 0; t < rs.T; ++t) {
    for (std::size_t k = 0; k < cfg.repeat; ++k) {
      const RoundRecord& r = result.trials[k].trace.rounds[t];
      loss[k] = r.train_loss;
      acc[k] = r.test_accuracy;
      dist[k] = r.dist_sq_opt;
    }
    result.rounds.push_back(internal::Summarize(loss, acc, dist));
  }
  for (std::size_t k = 0; k < cfg.repeat; ++k) {
    loss[k] = result.trials[k].final_loss;
    acc[k] = result.trials[k].final_accuracy;
    dist[k] = result.trials[k].final_dist;
  }
  result.final = internal::Summarize(loss, acc, dist);
  return result;
}

inline std::string TraceCsv(const ExperimentResult& result) {
  std::ostringstream os;
  os << "trial,t,loss,acc,eta,dist\n";
  for (std::size_t k = 0; k < result.trials.size(); ++k) {
    for (const RoundRecord& r : result.trials[k].trace.rounds) {
      os << k << ',' << r.t << ',' << dpfed::internal::FormatDouble(r.train_loss) << ','
         << dpfed::internal::FormatDouble(r.test_accuracy) << ','
         << dpfed::internal::FormatDouble(r.eta) << ','
         << dpfed::internal::FormatDouble(r.dist_sq_opt) << '\n';
    }
  }
  return os.str();
}

inline std::string AggregateCsv(const ExperimentResult& result) {
  std::ostringstream os;
  os << "t,loss_mean,loss_std,acc_mean,acc_std,dist_mean,dist_std\n";
  for (std::size_t t = 0; t < result.rounds.size(); ++t) {
    const RoundSummary& s = result.rounds[t];
    os << t;
    for (double v : {s.loss_mean, s.loss_std, s.acc_mean, s.acc_std, s.dist_mean, s.dist_std}) {
      os << ',' << dpfed::internal::FormatDouble(v);
    }
    os << '\n';
  }
  return os.str();
}

inline Json SummaryJson(const ExperimentResult& result) {
  Json trials = Json::array();
  for (std::size_t k = 0; k < result.trials.size(); ++k) {
    const TrialResult& t = result.trials[k];
    trials.push_back({{"trial", k},
                      {"seed", t.seed},
                      {"final_loss", t.final_loss},
                      {"final_accuracy", t.final_accuracy},
                      {"final_dist", t.final_dist}});
  }
  const RoundSummary& f = result.final;
  Json j = {{"config", ToJson(result.config)},
            {"b", result.schedule.b},
            {"T", result.schedule.T},
            {"mu", result.schedule.mu},
            {"lambda", result.schedule.lambda},
            {"final",
             {{"loss_mean", f.loss_mean},
              {"loss_std", f.loss_std},
              {"accuracy_mean", f.acc_mean},
              {"accuracy_std", f.acc_std},
              {"dist_mean", f.dist_mean},
              {"dist_std", f.dist_std}}},
            {"trials", trials},
            {"reference_grad_norm", result.reference_grad_norm},
            {"warnings", result.schedule.warnings}};
  if (result.schedule.plan) {
    j["plan"] = PlanToJson(*result.schedule.plan, result.config.mechanism.kind,
                           result.config.schedule.T_cap, *result.schedule.constants);
  }
  return j;
}

/// Writes trace.csv, aggregate.csv, summary.json and, for planned runs,
/// plan.json into `dir`. Each file is replaced atomically.
inline void WriteExperiment(const ExperimentResult& result, const std::filesystem::path& dir) {
  const std::string trace = TraceCsv(result);
  const std::string aggregate = AggregateCsv(result);
  const Json summary = SummaryJson(result);
  AtomicWrite(dir / "trace.csv", trace);
  AtomicWrite(dir / "aggregate.csv", aggregate);
  if (summary.contains("plan")) AtomicWrite(dir / "plan.json", summary["plan"].dump(2) + "\n");
  AtomicWrite(dir / "summary.json", summary.dump(2) + "\n");
}

enum class SweepAxis { kParticipants, kRounds, kEpsilon, kDataFraction };

inline SweepAxis ParseSweepAxis(const std::string& name) {
  if (name == "b") return SweepAxis::kParticipants;
  if (name == "T") return SweepAxis::kRounds;
  if (name == "epsilon") return SweepAxis::kEpsilon;
  if (name == "data_fraction") return SweepAxis::kDataFraction;
  throw Error(ErrorCode::kConfig, "sweep axis must be one of b, T, epsilon, data_fraction");
}

inline const char* SweepAxisName(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kParticipants: return "b";
    case SweepAxis::kRounds: return "T";
    case SweepAxis::kEpsilon: return "epsilon";
    case SweepAxis::kDataFraction: return "data_fraction";
  }
  return "?";
}

/// Copy of `cfg` with one axis set to `value`; throws kConfig when the value
/// does not fit the axis.
inline ExperimentConfig WithAxisValue(const ExperimentConfig& cfg, SweepAxis axis, double value) {
  ExperimentConfig out = cfg;
  const auto whole = [&](double lo) {
    Require(value >= lo && value == std::floor(value),
            std::string(SweepAxisName(axis)) + " values must be integers >= " +
                std::to_string(static_cast<int>(lo)),
            ErrorCode::kConfig);
    return static_cast<std::size_t>(value);
  };
  switch (axis) {
    case SweepAxis::kParticipants:
      out.schedule.participants = whole(1);
      Require(*out.schedule.participants <= cfg.partition.clients, "b must not exceed the client count",
              ErrorCode::kConfig);
      break;
    case SweepAxis::kRounds:
      out.schedule.rounds = whole(0);
      break;
    case SweepAxis::kEpsilon:
      Require(value > 0.0 && std::isfinite(value), "epsilon values must be positive", ErrorCode::kConfig);
      for (auto& b : out.budgets) b.epsilon = value;
      break;
    case SweepAxis::kDataFraction:
      Require(value > 0.0 && value <= 1.0, "data_fraction values must lie in (0, 1]", ErrorCode::kConfig);
      out.partition.data_fraction = value;
      break;
  }
  return out;
}

struct SweepRow {
  double value = 0.0;
  bool ok = false;
  std::string message;
  std::size_t b = 0;
  std::size_t T = 0;
  RoundSummary final;
};

inline std::string SweepValueLabel(double value) {
  std::ostringstream os;
  os.precision(12);
  os << value;
  return os.str();
}

/// One experiment per value, written to <output_dir>/<axis>_<value>, plus a
/// combined sweep.csv. A failing value is recorded and the rest continue.
inline std::vector<SweepRow> RunSweep(const ExperimentConfig& cfg, SweepAxis axis,
                                      const std::vector<double>& values, bool write = true) {
  Require(!values.empty(), "sweep needs at least one value", ErrorCode::kConfig);
  std::vector<SweepRow> rows;
  for (double value : values) {
    SweepRow row;
    row.value = value;
    try {
      ExperimentConfig one = WithAxisValue(cfg, axis, value);
      const std::filesystem::path dir = std::filesystem::path(cfg.output_dir) /
                                        (std::string(SweepAxisName(axis)) + "_" + SweepValueLabel(value));
      one.output_dir = dir.string();
      const ExperimentResult result = RunExperiment(one);
      if (write) WriteExperiment(result, dir);
      row.ok = true;
      row.b = result.schedule.b;
      row.T = result.schedule.T;
      row.final = result.final;
    } catch (const std::exception& e) {
      row.message = e.what();
    }
    rows.push_back(std::move(row));
  }
  if (write) {
    std::ostringstream os;
    os << "axis,value,status,b,T,loss_mean,loss_std,acc_mean,acc_std,message\n";
    for (const SweepRow& r : rows) {
      std::string message = r.message;
      std::replace(message.begin(), message.end(), '\n', ' ');
      std::replace(message.begin(), message.end(), ',', ';');
      os << SweepAxisName(axis) << ',' << SweepValueLabel(r.value) << ',' << (r.ok ? "ok" : "failed")
         << ',' << r.b << ',' << r.T << ',' << dpfed::internal::FormatDouble(r.final.loss_mean) << ','
         << dpfed::internal::FormatDouble(r.final.loss_std) << ','
         << dpfed::internal::FormatDouble(r.final.acc_mean) << ','
         << dpfed::internal::FormatDouble(r.final.acc_std) << ',' << message << '\n';
    }
    AtomicWrite(std::filesystem::path(cfg.output_dir) / "sweep.csv", os.str());
  }
  return rows;
}

}  // namespace dpfed::harness

#endif  // DPFED_HARNESS_EXPERIMENT_HPP_
