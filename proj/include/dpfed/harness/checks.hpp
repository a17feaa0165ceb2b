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
#ifndef DPFED_HARNESS_CHECKS_HPP_
#define DPFED_HARNESS_CHECKS_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dpfed/bounds.hpp"
#include "dpfed/dataset.hpp"
#include "dpfed/estimate.hpp"
#include "dpfed/mechanisms.hpp"
#include "dpfed/model.hpp"
#include "dpfed/random.hpp"
#include "dpfed/validation.hpp"

// Oracle-versus-formula checks shared by the `validate` verb and the
// acceptance binary. Each check is deterministic given its seed.
namespace dpfed::harness {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

struct CheckOptions {
  std::uint64_t seed = 2024;
  // Scales trial counts; 1 is the full battery.
  double effort = 1.0;
};

namespace internal {

inline double LogUniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

inline std::size_t UniformIndex(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline std::size_t Scaled(std::size_t n, double effort, std::size_t floor_value) {
  return std::max(floor_value, static_cast<std::size_t>(std::llround(static_cast<double>(n) * effort)));
}

template <typename Fn>
CheckResult Timed(const std::string& name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r;
  r.name = name;
  try {
    fn(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("error: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace internal

/// Random constants spanning several orders of magnitude.
inline BoundConstants RandomBoundConstants(Rng& rng, MechanismKind kind) {
  using internal::LogUniform;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BoundConstants c;
  c.mu = LogUniform(rng, 0.02, 1.0);
  c.lambda = c.mu * LogUniform(rng, 1.0, 50.0);
  c.G = LogUniform(rng, 0.2, 5.0);
  c.Gamma = u(rng) < 0.2 ? 0.0 : LogUniform(rng, 1e-3, 1.0);
  c.Y0 = u(rng) < 0.1 ? 0.0 : LogUniform(rng, 1e-2, 20.0);
  c.p = std::floor(LogUniform(rng, 2.0, 800.0));
  c.N = internal::UniformIndex(rng, 2, 10);
  c.d = std::floor(static_cast<double>(c.N) * LogUniform(rng, 20.0, 2000.0));
  c.xi1 = LogUniform(rng, 0.01, 5.0);
  c.xi2 = LogUniform(rng, 0.01, 5.0);
  c.q = LogUniform(rng, 0.01, 1.0);
  c.c2 = LogUniform(rng, 0.5, 2.0);
  for (std::size_t i = 0; i < c.N; ++i) {
    const double delta = kind == MechanismKind::kGaussian ? LogUniform(rng, 1e-8, 1e-2) : 0.0;
    c.budgets.push_back({LogUniform(rng, 0.2, 20.0), delta});
    c.Lambda.push_back(LogUniform(rng, 0.01, 3.0));
  }
  return c;
}

/// Monte-Carlo E|w_t^b|^2 against the aggregated-variance formulas.
inline CheckResult CheckNoiseVariance(const CheckOptions& opt = {}) {
  return internal::Timed("noise variance", [&](CheckResult& r) {
    Rng rng = MakeRng(opt.seed, {1});
    const std::size_t configs = 20;
    const std::size_t trials = internal::Scaled(100000, opt.effort, 1000);
    double worst = 0.0;
    std::size_t failures = 0;
    for (std::size_t k = 0; k < configs; ++k) {
      const bool gaussian = k % 2 == 1;
      DpMechanismSpec spec;
      spec.kind = gaussian ? MechanismKind::kGaussian : MechanismKind::kLaplace;
      spec.xi1 = internal::LogUniform(rng, 0.1, 10.0);
      spec.xi2 = internal::LogUniform(rng, 0.1, 10.0);
      spec.q = gaussian ? internal::LogUniform(rng, 0.01, 0.9) : 1.0;
      spec.c2 = internal::LogUniform(rng, 0.5, 2.0);
      FederationSchedule schedule;
      schedule.num_clients = internal::UniformIndex(rng, 1, 10);
      schedule.participants = internal::UniformIndex(rng, 1, schedule.num_clients);
      schedule.rounds = internal::UniformIndex(rng, 1, 200);
      const std::size_t p = internal::UniformIndex(rng, 1, 50);
      std::vector<PrivacyBudget> budgets;
      std::vector<double> sizes;
      for (std::size_t i = 0; i < schedule.num_clients; ++i) {
        budgets.push_back({internal::LogUniform(rng, 0.1, 10.0),
                           gaussian ? internal::LogUniform(rng, 1e-8, 1e-2) : 0.0});
        sizes.push_back(static_cast<double>(internal::UniformIndex(rng, 10, 1000)));
      }
      double d = 0.0;
      for (double s : sizes) d += s;
      const double eta = internal::LogUniform(rng, 1e-3, 1.0);
      const double analytic = AggregatedNoiseVariance(spec, budgets, schedule, eta, p, d);
      const McEstimate mc = McNoiseVariance(spec, budgets, sizes, schedule, eta, p, trials,
                                            DeriveSeed(opt.seed, {1, k}));
      const double z = std::abs(mc.mean - analytic) / mc.stderr();
      worst = std::max(worst, z);
      if (!mc.Agrees(analytic, 3.0)) ++failures;
    }
    r.passed = failures == 0;
    std::ostringstream os;
    os << configs << " configs x " << trials << " trials, worst |z| = " << worst;
    r.detail = os.str();
  });
}

/// Unbiasedness of uniform b-subset averaging: Monte Carlo and exhaustive.
inline CheckResult CheckSamplingBias(const CheckOptions& opt = {}) {
  return internal::Timed("sampling bias", [&](CheckResult& r) {
    Rng rng = MakeRng(opt.seed, {2});
    const std::size_t trials = internal::Scaled(20000, opt.effort, 1000);
    std::normal_distribution<double> normal(0.0, 3.0);
    double worst = 0.0;
    bool ok = true;
    for (std::size_t k = 0; k < 10; ++k) {
      const std::size_t N = internal::UniformIndex(rng, 1, 8);
      const std::size_t b = internal::UniformIndex(rng, 1, N);
      std::vector<std::vector<double>> values(N, std::vector<double>(5));
      std::vector<double> sizes(N);
      double d = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        for (double& v : values[i]) v = normal(rng);
        sizes[i] = static_cast<double>(internal::UniformIndex(rng, 5, 500));
        d += sizes[i];
      }
      std::vector<double> weights;
      for (double s : sizes) weights.push_back(s / d);
      const McEstimate mc = McSamplingBias(values, weights, N, b, trials, DeriveSeed(opt.seed, {2, k}));
      if (mc.stderr() > 0.0) worst = std::max(worst, mc.mean / mc.stderr());
      ok = ok && mc.mean <= 4.0 * mc.stderr() + 1e-12;
    }
    // integer data keep the exhaustive sums exact
    const std::vector<std::vector<double>> three = {{3, -1, 4}, {1, 5, -9}, {2, 6, 5}};
    const std::vector<double> sizes = {3, 5, 8};
    for (std::size_t b = 1; b <= 3; ++b) ok = ok && ExactSamplingBias(three, sizes, b) == 0.0;
    r.passed = ok;
    std::ostringstream os;
    os << "10 cases x " << trials << " trials, worst deviation/stderr = " << worst
       << "; exhaustive N=3 deviation 0 for b=1..3";
    r.detail = os.str();
  });
}

/// Empirical sampled-gradient variance against the client-sampling bound
/// (q = 1) and the client-plus-batch bound (q < 1).
inline CheckResult CheckGradientVariance(const CheckOptions& opt = {}) {
  return internal::Timed("gradient variance", [&](CheckResult& r) {
    Rng rng = MakeRng(opt.seed, {3});
    const std::size_t trials = internal::Scaled(4000, opt.effort, 500);
    std::size_t failures = 0;
    double worst_ratio = 0.0;
    const std::size_t partitions = 12;
    for (std::size_t k = 0; k < partitions; ++k) {
      const std::size_t N = internal::UniformIndex(rng, 2, 8);
      const std::size_t C = internal::UniformIndex(rng, 2, 5);
      const std::size_t per_client = internal::UniformIndex(rng, 1, C);
      const std::size_t F = internal::UniformIndex(rng, 2, 8);
      const Dataset data = MakeSyntheticDataset(N * internal::UniformIndex(rng, 30, 120), F, C,
                                                internal::LogUniform(rng, 0.5, 4.0), rng());
      const ClientPartition partition = PartitionNonIid(data, N, per_client, rng());
      const LogisticRegression model(F, C, 0.01);
      ModelParams theta = model.Zeros();
      std::normal_distribution<double> normal(0.0, k % 2 == 0 ? 0.0 : 0.5);
      for (double& v : theta.values) v = normal(rng);

      double g2 = 0.0;
      BoundConstants c;
      c.N = N;
      c.d = static_cast<double>(partition.total_size());
      for (const Dataset& client : partition.client_datasets) {
        const double n = Norm(model.Gradient(theta, client).values, NormOrder::kL2);
        g2 = std::max(g2, n * n);
        c.client_sizes.push_back(static_cast<double>(client.size()));
        c.Lambda.push_back(std::sqrt(MaxSampleGradientSpreadSq(model, client, theta)));
      }
      const std::size_t b = internal::UniformIndex(rng, 1, N);
      c.q = k % 3 == 0 ? 1.0 : internal::LogUniform(rng, 0.05, 0.8);
      const double client_term = ClientSamplingFactor(static_cast<double>(N), static_cast<double>(b)) * g2;
      const double bound = client_term + (c.q < 1.0 ? c.SampleVarianceTerm() : 0.0);
      const McEstimate mc = McGradientVariance(partition, model, theta, b, c.q, trials,
                                               DeriveSeed(opt.seed, {3, k}));
      if (bound > 0.0) worst_ratio = std::max(worst_ratio, mc.mean / bound);
      if (mc.mean > bound + 3.0 * mc.stderr()) ++failures;
    }
    r.passed = failures == 0;
    std::ostringstream os;
    os << partitions << " partitions x " << trials << " trials, " << failures
       << " above bound + 3 stderr, worst estimate/bound = " << worst_ratio;
    r.detail = os.str();
  });
}

/// Closed forms and planners against exhaustive grid search.
inline CheckResult CheckClosedFormsAgainstGrid(const CheckOptions& opt = {}) {
  return internal::Timed("closed forms vs grid", [&](CheckResult& r) {
    Rng rng = MakeRng(opt.seed, {4});
    const std::size_t cases = internal::Scaled(100, opt.effort, 10);
    const std::size_t T_max = 10000;
    std::size_t t_fail = 0;
    std::size_t b_fail = 0;
    std::size_t kkt_fail = 0;
    std::size_t gauss_fail = 0;
    for (std::size_t k = 0; k < cases; ++k) {
      const BoundConstants c = RandomBoundConstants(rng, MechanismKind::kLaplace);
      const double N = static_cast<double>(c.N);

      // T for fixed b
      const double b = static_cast<double>(internal::UniformIndex(rng, 1, c.N));
      const double t_star = std::min(OptimalTFixedBLaplace(c, b), static_cast<double>(T_max));
      std::size_t t_arg = 0;
      double t_best = BoundLaplace(0.0, b, c);
      for (std::size_t T = 1; T <= T_max; ++T) {
        const double v = BoundLaplace(static_cast<double>(T), b, c);
        if (v < t_best) {
          t_best = v;
          t_arg = T;
        }
      }
      if (std::abs(static_cast<double>(t_arg) - t_star) > 1.0) ++t_fail;

      // b for fixed T
      const double T = std::floor(internal::LogUniform(rng, 1.0, static_cast<double>(T_max)));
      const double b_star = OptimalBFixedTLaplace(c, T);
      std::size_t b_arg = 1;
      for (std::size_t bb = 2; bb <= c.N; ++bb) {
        if (BoundLaplace(T, static_cast<double>(bb), c) < BoundLaplace(T, static_cast<double>(b_arg), c)) {
          b_arg = bb;
        }
      }
      if (std::abs(static_cast<double>(b_arg) - b_star) > 1.0 || b_star < 1.0 || b_star > N) ++b_fail;

      // joint planners
      const GridMinimum grid = GridMinimizeBound(MechanismKind::kLaplace, c, T_max);
      const PlanResult kkt = KktSolutionsLaplace(c, static_cast<double>(T_max));
      if (std::abs(kkt.selected().bound_value - grid.value) > 1e-9 * std::abs(grid.value)) ++kkt_fail;

      const BoundConstants g = RandomBoundConstants(rng, MechanismKind::kGaussian);
      const GridMinimum ggrid = GridMinimizeBound(MechanismKind::kGaussian, g, T_max);
      const PlanResult gplan = OptimalGaussian(g, static_cast<double>(T_max));
      if (std::abs(gplan.selected().bound_value - ggrid.value) > 1e-9 * std::abs(ggrid.value)) ++gauss_fail;
    }
    r.passed = t_fail + b_fail + kkt_fail + gauss_fail == 0;
    std::ostringstream os;
    os << cases << " constants; misses: T*(b) " << t_fail << ", b*(T) " << b_fail << ", KKT " << kkt_fail
       << ", Gaussian " << gauss_fail;
    r.detail = os.str();
  });
}

/// Midpoint convexity in each coordinate and stationarity of the closed forms.
inline CheckResult CheckBiconvexity(const CheckOptions& opt = {}) {
  return internal::Timed("biconvexity and stationarity", [&](CheckResult& r) {
    Rng rng = MakeRng(opt.seed, {5});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t probes = internal::Scaled(1000, opt.effort, 100);
    std::size_t convex_fail = 0;
    std::size_t stationary_fail = 0;
    std::size_t stationary_checked = 0;
    for (std::size_t k = 0; k < probes; ++k) {
      const MechanismKind kind = k % 2 == 0 ? MechanismKind::kLaplace : MechanismKind::kGaussian;
      const BoundConstants c = RandomBoundConstants(rng, kind);
      const auto U = [&](double T, double b) { return BoundFor(kind, T, b, c); };
      const double N = static_cast<double>(c.N);

      const double b = std::floor(1.0 + u(rng) * N);
      const double T1 = u(rng) * 1e4;
      const double T2 = u(rng) * 1e4;
      const double mid_T = U((T1 + T2) / 2, b);
      const double avg_T = (U(T1, b) + U(T2, b)) / 2;
      const double tol_T = 1e-9 * std::abs(avg_T);
      if (kind == MechanismKind::kLaplace) {
        if (mid_T > avg_T + tol_T) ++convex_fail;
      } else {
        // E3 + K / (T + gamma) is convex in T exactly when K >= 0
        const GaussianCoefficients e = GaussianCoefficientsOf(c);
        const double K = e.E1 / b + e.E2;
        if (K >= 0 ? mid_T > avg_T + tol_T : mid_T < avg_T - tol_T) ++convex_fail;
      }
      const double T = std::floor(u(rng) * 1e4);
      const double b1 = 1.0 + u(rng) * (N - 1);
      const double b2 = 1.0 + u(rng) * (N - 1);
      const double avg_b = (U(T, b1) + U(T, b2)) / 2;
      if (U(T, (b1 + b2) / 2) > avg_b + 1e-9 * std::abs(avg_b)) ++convex_fail;

      if (kind != MechanismKind::kLaplace) continue;
      const LaplaceCoefficients kc = LaplaceCoefficientsOf(c);
      const double t_star = OptimalTFixedBLaplace(c, b);
      if (t_star > 1.0) {
        ++stationary_checked;
        const double h = 1e-3 * t_star;
        const double dU = (U(t_star + h, b) - U(t_star - h, b)) / (2 * h);
        if (std::abs(dU) * t_star / U(t_star, b) > 1e-6) ++stationary_fail;
      }
      const double T_b = std::floor(internal::LogUniform(rng, 1.0, 1e4));
      const double b_star = OptimalBFixedTLaplace(c, T_b);
      if (b_star > 1.0 && b_star < N) {
        ++stationary_checked;
        const double h = 1e-4 * b_star;
        const double dU = (U(T_b, b_star + h) - U(T_b, b_star - h)) / (2 * h);
        const double scale = (kc.C1 / b_star + kc.C2 * b_star * T_b * T_b) / (T_b + kc.gamma);
        if (std::abs(dU) * b_star / scale > 1e-6) ++stationary_fail;
      }
    }
    r.passed = convex_fail == 0 && stationary_fail == 0 && stationary_checked > 0;
    std::ostringstream os;
    os << probes << " probes, " << convex_fail << " convexity failures, " << stationary_fail << "/"
       << stationary_checked << " stationarity failures";
    r.detail = os.str();
  });
}

/// Laplace bound grows like C2 b T; Gaussian bound approaches E3 like 1/T.
inline CheckResult CheckAsymptotes(const CheckOptions& opt = {}) {
  return internal::Timed("asymptotic shape", [&](CheckResult& r) {
    Rng rng = MakeRng(opt.seed, {6});
    std::size_t slope_checked = 0;
    std::size_t slope_fail = 0;
    double worst_slope = 0.0;
    while (slope_checked < 50) {
      const BoundConstants c = RandomBoundConstants(rng, MechanismKind::kLaplace);
      const double b = static_cast<double>(internal::UniformIndex(rng, 1, c.N));
      // the 1/T part must have died out by T = 1e5
      if (OptimalTFixedBLaplace(c, b) > 1e3) continue;
      ++slope_checked;
      const double C2b = LaplaceCoefficientsOf(c).C2 * b;
      const double slope = (BoundLaplace(1e5, b, c) - BoundLaplace(1e5 - 1e3, b, c)) / 1e3;
      const double err = std::abs(slope - C2b) / C2b;
      const double ratio_err = std::abs(BoundLaplace(1e5, b, c) / 1e5 - C2b) / C2b;
      worst_slope = std::max({worst_slope, err, ratio_err});
      if (err > 0.01 || ratio_err > 0.01) ++slope_fail;
    }
    std::size_t flat_fail = 0;
    double worst_flat = 0.0;
    for (std::size_t k = 0; k < 50; ++k) {
      const BoundConstants c = RandomBoundConstants(rng, MechanismKind::kGaussian);
      const GaussianCoefficients e = GaussianCoefficientsOf(c);
      const double b = static_cast<double>(internal::UniformIndex(rng, 1, c.N));
      const double ref = e.E1 / b + e.E2;
      for (double T : {0.0, 10.0, 100.0, 1000.0, 10000.0}) {
        const double product = (BoundGaussian(T, b, c) - e.E3) * (T + e.gamma);
        const double scale = e.E1 / b + std::abs(e.E2) + e.E3 * (T + e.gamma);
        const double err = std::abs(product - ref) / scale;
        worst_flat = std::max(worst_flat, err);
        if (err > 1e-9) ++flat_fail;
      }
    }
    r.passed = slope_fail == 0 && flat_fail == 0;
    std::ostringstream os;
    os << "Laplace slope vs C2 b: worst rel err " << worst_slope << " over " << slope_checked
       << "; Gaussian (U - E3)(T + gamma): worst rel err " << worst_flat;
    r.detail = os.str();
  });
}

inline std::vector<CheckResult> RunValidationSuite(const CheckOptions& opt = {}) {
  return {CheckNoiseVariance(opt), CheckSamplingBias(opt), CheckGradientVariance(opt),
          CheckClosedFormsAgainstGrid(opt), CheckBiconvexity(opt), CheckAsymptotes(opt)};
}

}  // namespace dpfed::harness

#endif  // DPFED_HARNESS_CHECKS_HPP_
