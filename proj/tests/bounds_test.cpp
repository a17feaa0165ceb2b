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
#include <random>
#include <vector>

#include "dpfed/bounds.hpp"
#include "dpfed/random.hpp"
#include "dpfed/validation.hpp"

using namespace dpfed;

namespace {

double LogUniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
  return std::exp(u(rng));
}

BoundConstants RandomConstants(Rng& rng, bool gaussian = false) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BoundConstants c;
  c.mu = LogUniform(rng, 0.02, 1.0);
  c.lambda = c.mu * LogUniform(rng, 1.0, 50.0);
  c.G = LogUniform(rng, 0.2, 5.0);
  c.Gamma = u(rng) < 0.2 ? 0.0 : LogUniform(rng, 1e-3, 1.0);
  c.Y0 = u(rng) < 0.1 ? 0.0 : LogUniform(rng, 1e-2, 20.0);
  c.p = std::floor(LogUniform(rng, 2.0, 800.0));
  c.N = 2 + static_cast<std::size_t>(u(rng) * 9);
  c.d = std::floor(c.N * LogUniform(rng, 20.0, 2000.0));
  c.xi1 = LogUniform(rng, 0.01, 5.0);
  c.xi2 = LogUniform(rng, 0.01, 5.0);
  c.q = LogUniform(rng, 0.01, 1.0);
  c.c2 = LogUniform(rng, 0.5, 2.0);
  for (std::size_t i = 0; i < c.N; ++i) {
    c.budgets.push_back({LogUniform(rng, 0.2, 20.0), gaussian ? LogUniform(rng, 1e-8, 1e-2) : 0.0});
    c.Lambda.push_back(LogUniform(rng, 0.01, 3.0));
  }
  return c;
}

// Gaussian bound in its omega form, written out independently of the library.
double GaussianOmegaForm(double T, double b, const BoundConstants& c) {
  const double N = static_cast<double>(c.N);
  double sum_log = 0.0;
  for (const auto& e : c.budgets) sum_log += std::log(1.0 / e.delta) / (e.epsilon * e.epsilon);
  double spread = 0.0;
  for (std::size_t i = 0; i < c.N; ++i) spread += (c.d / N) * c.Lambda[i] * c.Lambda[i];
  spread /= c.q * c.d * c.d;
  const double gamma = 2 * c.lambda / c.mu;
  const double w0 = 2 * (N - b) * c.G * c.G / ((N - 1) * b) + spread + 2 * c.lambda * c.Gamma;
  const double w1 = 4 * c.c2 * c.c2 * c.p * T * c.xi2 * c.xi2 / (c.d * c.d) * sum_log;
  return (4 * w0 / (c.mu * c.mu) + gamma * c.Y0) / (T + gamma) + w1 / (c.mu * c.mu * (T + gamma));
}

double RelErr(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("Laplace omega form and C form agree", "[bounds]") {
  Rng rng = MakeRng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const BoundConstants c = RandomConstants(rng);
    const double T = LogUniform(rng, 1e-2, 1e5) * (u(rng) < 0.1 ? 0.0 : 1.0);
    const double b = 1.0 + u(rng) * (static_cast<double>(c.N) - 1.0);
    const double omega = BoundLaplace(T, b, c);
    const double cform = LaplaceCoefficientsOf(c).Evaluate(T, b);
    // C3 can be negative, so compare against the sum of magnitudes.
    const auto k3 = LaplaceCoefficientsOf(c);
    const double scale = (k3.C1 / b + k3.C2 * b * T * T + std::abs(k3.C3)) / (T + k3.gamma);
    CHECK(std::abs(omega - cform) <= 1e-12 * scale);
  }
}

TEST_CASE("Laplace bound at T = 0 carries no noise", "[bounds]") {
  Rng rng = MakeRng(5);
  BoundConstants c = RandomConstants(rng);
  const double at0 = BoundLaplace(0, 2, c);
  c.xi1 *= 100;
  CHECK(BoundLaplace(0, 2, c) == at0);
  const double N = static_cast<double>(c.N);
  const double w0 = 2 * (N - 2) * c.G * c.G / ((N - 1) * 2) + 2 * c.lambda * c.Gamma;
  CHECK(at0 == Catch::Approx((4 * w0 / (c.mu * c.mu) + c.gamma() * c.Y0) / c.gamma()).epsilon(1e-13));
  CHECK_THROWS_AS(BoundLaplace(1, 0.5, c), Error);
  CHECK_THROWS_AS(BoundLaplace(1, N + 1, c), Error);
  CHECK_THROWS_AS(BoundLaplace(-1, 1, c), Error);
}

TEST_CASE("Laplace bound diverges linearly with slope C2 b", "[bounds]") {
  Rng rng = MakeRng(6);
  int checked = 0;
  while (checked < 20) {
    const BoundConstants c = RandomConstants(rng);
    const double b = 1.0 + static_cast<double>(checked % c.N);
    // the 1/T part has died out once T is well past T*(b)
    if (OptimalTFixedBLaplace(c, b) > 1e3) continue;
    ++checked;
    const double slope = (BoundLaplace(1e5, b, c) - BoundLaplace(1e4, b, c)) / 9e4;
    CHECK(RelErr(slope, LaplaceCoefficientsOf(c).C2 * b) < 1e-2);
    CHECK(RelErr(BoundLaplace(1e5, b, c) / 1e5, LaplaceCoefficientsOf(c).C2 * b) < 1e-2);
  }
}

TEST_CASE("Laplace bound eventually increases beyond T*(b)", "[bounds]") {
  Rng rng = MakeRng(61);
  for (int k = 0; k < 30; ++k) {
    const BoundConstants c = RandomConstants(rng);
    for (double b : {1.0, static_cast<double>(c.N)}) {
      const double t_star = OptimalTFixedBLaplace(c, b);
      const double start = std::ceil(t_star) + 1;
      double prev = BoundLaplace(start, b, c);
      for (double T = start + 1; T < start + 200; T += 1) {
        const double next = BoundLaplace(T, b, c);
        REQUIRE(next > prev);
        prev = next;
      }
    }
  }
}

TEST_CASE("Gaussian omega form and E form agree", "[bounds]") {
  Rng rng = MakeRng(202);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const BoundConstants c = RandomConstants(rng, true);
    const double T = LogUniform(rng, 1e-2, 1e5) * (u(rng) < 0.1 ? 0.0 : 1.0);
    const double b = 1.0 + u(rng) * (static_cast<double>(c.N) - 1.0);
    const double oracle = GaussianOmegaForm(T, b, c);
    CHECK(RelErr(BoundGaussian(T, b, c), oracle) < 1e-12);
    const auto e = GaussianCoefficientsOf(c);
    const double scale = e.E1 / (b * (T + e.gamma)) + std::abs(e.E2) / (T + e.gamma) + e.E3;
    CHECK(std::abs(e.Evaluate(T, b) - oracle) <= 1e-12 * scale);
  }
}

TEST_CASE("Gaussian bound tends to E3 at rate 1/T", "[bounds]") {
  Rng rng = MakeRng(203);
  for (int k = 0; k < 20; ++k) {
    const BoundConstants c = RandomConstants(rng, true);
    const auto e = GaussianCoefficientsOf(c);
    for (double b : {1.0, static_cast<double>(c.N)}) {
      const double ref = e.E1 / b + e.E2;
      for (double T : {0.0, 3.0, 50.0, 700.0}) {
        const double product = (BoundGaussian(T, b, c) - e.E3) * (T + e.gamma);
        const double scale = e.E1 / b + std::abs(e.E2) + e.E3 * (T + e.gamma);
        CHECK(std::abs(product - ref) <= 1e-9 * scale);
      }
    }
  }
}

TEST_CASE("Gaussian bound decreases in q and needs delta > 0", "[bounds]") {
  Rng rng = MakeRng(204);
  BoundConstants c = RandomConstants(rng, true);
  double prev = BoundGaussian(10, 1, c);
  for (double q : {0.05, 0.1, 0.3, 0.9}) {
    c.q = q;
    const double next = BoundGaussian(10, 1, c);
    if (q > 0.05) CHECK(next < prev);
    prev = next;
  }
  c.budgets[0].delta = 0.0;
  CHECK_THROWS_AS(OptimalGaussian(c, 100), Error);
}

TEST_CASE("closed-form T for fixed b", "[bounds]") {
  CHECK(StationaryHorizon(1.0, 0.0, 1.0) == 0.0);
  CHECK(StationaryHorizon(2.0, 21.0, 1.0) == 3.0);
  CHECK(StationaryHorizon(2.0, -10.0, 1.0) == 0.0);
  CHECK_THROWS_AS(StationaryHorizon(2.0, 1.0, 0.0), Error);

  // mu = lambda = 1 (gamma = 2), Gamma = 0, b = N = 2, gamma Y0 = 21, A2 = 64 / d^2 = 1
  BoundConstants c;
  c.N = 2;
  c.Y0 = 10.5;
  c.d = 8;
  c.budgets = {{1.0, 0.0}, {1.0, 0.0}};
  CHECK(OptimalTFixedBLaplace(c, 2) == Catch::Approx(3.0).epsilon(1e-15));

  Rng rng = MakeRng(7);
  int compared = 0;
  while (compared < 25) {
    const BoundConstants r = RandomConstants(rng);
    const double b = 1.0 + static_cast<double>(compared % r.N);
    const double t_star = OptimalTFixedBLaplace(r, b);
    if (t_star > 5000) continue;
    ++compared;
    std::size_t arg = 0;
    double best = BoundLaplace(0, b, r);
    for (std::size_t T = 1; T <= 10000; ++T) {
      const double v = BoundLaplace(static_cast<double>(T), b, r);
      if (v < best) {
        best = v;
        arg = T;
      }
    }
    CHECK(std::abs(static_cast<double>(arg) - std::round(t_star)) <= 1.0);
  }
}

TEST_CASE("closed-form b for fixed T", "[bounds]") {
  BoundConstants c;
  c.G = 2;
  c.N = 5;
  c.d = 10;
  c.xi1 = 1;
  c.p = 1;
  c.budgets.assign(5, {std::sqrt(5.0), 0.0});
  CHECK(c.SumInvEpsilonSq() == Catch::Approx(1.0).epsilon(1e-15));
  CHECK(OptimalBFixedTLaplace(c, 1) == 5.0);
  // unclamped: 25 / T
  CHECK(OptimalBFixedTLaplace(c, 10) == Catch::Approx(2.5).epsilon(1e-14));
  CHECK(OptimalBFixedTLaplace(c, 20) == Catch::Approx(1.25).epsilon(1e-14));
  CHECK(OptimalBFixedTLaplace(c, 100) == 1.0);
  c.N = 1;
  c.budgets.resize(1);
  CHECK(OptimalBFixedTLaplace(c, 10) == 1.0);

  Rng rng = MakeRng(8);
  for (int k = 0; k < 50; ++k) {
    const BoundConstants r = RandomConstants(rng);
    const double T = LogUniform(rng, 1.0, 1e4);
    const double b_star = OptimalBFixedTLaplace(r, T);
    std::size_t arg = 1;
    for (std::size_t b = 2; b <= r.N; ++b) {
      if (BoundLaplace(T, double(b), r) < BoundLaplace(T, double(arg), r)) arg = b;
    }
    CHECK((arg == static_cast<std::size_t>(std::floor(b_star)) ||
           arg == static_cast<std::size_t>(std::ceil(b_star))));
  }
}

TEST_CASE("closed forms are stationary", "[bounds]") {
  Rng rng = MakeRng(9);
  int checked_t = 0;
  int checked_b = 0;
  for (int k = 0; k < 400; ++k) {
    const BoundConstants c = RandomConstants(rng);
    const double b = 1.0 + static_cast<double>(k % c.N);
    const double T = OptimalTFixedBLaplace(c, b);
    if (T > 1.0) {
      const double h = 1e-3 * T;
      const double dU = (BoundLaplace(T + h, b, c) - BoundLaplace(T - h, b, c)) / (2 * h);
      CHECK(std::abs(dU) * T / BoundLaplace(T, b, c) < 1e-6);
      ++checked_t;
    }
    const double T2 = LogUniform(rng, 1.0, 1e4);
    const double bs = OptimalBFixedTLaplace(c, T2);
    if (bs > 1.0 && bs < static_cast<double>(c.N)) {
      const double h = 1e-4 * bs;
      const double dU = (BoundLaplace(T2, bs + h, c) - BoundLaplace(T2, bs - h, c)) / (2 * h);
      const auto kc = LaplaceCoefficientsOf(c);
      const double scale = (kc.C1 / bs + kc.C2 * bs * T2 * T2) / (T2 + kc.gamma);
      CHECK(std::abs(dU) * bs / scale < 1e-6);
      ++checked_b;
    }
  }
  CHECK(checked_t > 100);
  CHECK(checked_b > 20);
}

TEST_CASE("bounds are convex in each coordinate", "[bounds]") {
  Rng rng = MakeRng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const bool gaussian = k % 2 == 1;
    const MechanismKind kind = gaussian ? MechanismKind::kGaussian : MechanismKind::kLaplace;
    const BoundConstants c = RandomConstants(rng, gaussian);
    const auto U = [&](double T, double b) { return BoundFor(kind, T, b, c); };
    const double N = static_cast<double>(c.N);
    const double b = std::floor(1.0 + u(rng) * N);
    const double T1 = u(rng) * 1e4;
    const double T2 = u(rng) * 1e4;
    const double mid_T = U((T1 + T2) / 2, b);
    const double avg_T = (U(T1, b) + U(T2, b)) / 2;
    if (!gaussian) {
      CHECK(mid_T <= avg_T + 1e-9 * std::abs(avg_T));
    } else {
      // E3 + K / (T + gamma) bends with the sign of K = E1 / b + E2.
      const auto e = GaussianCoefficientsOf(c);
      const double K = e.E1 / b + e.E2;
      if (K >= 0) CHECK(mid_T <= avg_T + 1e-9 * std::abs(avg_T));
      if (K < 0) CHECK(mid_T >= avg_T - 1e-9 * std::abs(avg_T));
    }
    const double T = std::floor(u(rng) * 1e4);
    const double b1 = 1.0 + u(rng) * (N - 1);
    const double b2 = 1.0 + u(rng) * (N - 1);
    const double mid_b = U(T, (b1 + b2) / 2);
    const double avg_b = (U(T, b1) + U(T, b2)) / 2;
    CHECK(mid_b <= avg_b + 1e-9 * std::abs(avg_b));
  }
}

TEST_CASE("KKT candidates cover the grid minimum", "[bounds]") {
  Rng rng = MakeRng(11);
  constexpr std::size_t kTMax = 4000;
  for (int k = 0; k < 60; ++k) {
    const BoundConstants c = RandomConstants(rng);
    const PlanResult plan = KktSolutionsLaplace(c, kTMax);
    const GridMinimum grid = GridMinimizeBound(MechanismKind::kLaplace, c, kTMax);
    const auto& best = plan.selected();
    CHECK(best.bound_value <= grid.value + 1e-9 * std::abs(grid.value));
    CHECK(best.b == grid.b);
    CHECK(std::abs(double(best.T) - double(grid.T)) <= 1.0);
    for (const auto& cand : plan.candidates) {
      CHECK(cand.T <= kTMax);
      CHECK(cand.b >= 1);
      CHECK(cand.b <= c.N);
      CHECK(cand.bound_value == BoundLaplace(double(cand.T), double(cand.b), c));
    }
  }
}

TEST_CASE("KKT regimes", "[bounds]") {
  BoundConstants c;
  c.mu = 0.1;
  c.lambda = 1.0;
  c.G = 1.0;
  c.p = 100;
  c.N = 10;
  c.d = 1000;
  c.budgets.assign(10, {1.0, 0.0});
  // Along b = b*(T) the bound is (2 sqrt(C1 C2) T + C3) / (T + gamma): the
  // sign of C3 - 2 gamma sqrt(C1 C2) decides between the two faces.
  const auto face_sign = [&] {
    const auto k = LaplaceCoefficientsOf(c);
    return k.C3 - 2 * k.gamma * std::sqrt(k.C1 * k.C2);
  };

  SECTION("distant start: one participant, long horizon") {
    c.Y0 = 50.0;
    c.xi1 = 1e-3;
    REQUIRE(face_sign() > 0);
    const PlanResult plan = KktSolutionsLaplace(c);
    CHECK(plan.selected().b == 1);
    CHECK(plan.candidates[0].provenance == Provenance::kKktSol1);
    CHECK(plan.candidates[0].bound_value == plan.selected().bound_value);
    CHECK(plan.selected().T > 0);
    CHECK(plan.warnings.empty());
  }
  SECTION("vanishing noise with negative C3: full participation") {
    c.Y0 = 0.0;
    c.xi1 = 1e-7;
    REQUIRE(LaplaceCoefficientsOf(c).C3 < 0);
    REQUIRE(face_sign() < 0);
    const PlanResult plan = KktSolutionsLaplace(c);
    CHECK(plan.candidates[1].bound_value < plan.candidates[0].bound_value);
    CHECK(plan.selected().b == 10);
  }
  SECTION("vanishing noise with positive C3 still favours b = 1") {
    c.Y0 = 5.0;
    c.xi1 = 1e-7;
    REQUIRE(face_sign() > 0);
    const PlanResult plan = KktSolutionsLaplace(c);
    CHECK(plan.candidates[0].bound_value < plan.candidates[1].bound_value);
  }
  SECTION("overwhelming noise: no training") {
    c.xi1 = 1e4;
    c.Y0 = 0.0;
    const PlanResult plan = KktSolutionsLaplace(c);
    CHECK(plan.selected().T == 0);
    CHECK(plan.warnings == std::vector<std::string>{kUselessLearningWarning});
  }
  CHECK(std::string(ProvenanceName(Provenance::kKktSol3)) == "KKT-sol3");
}

TEST_CASE("Gaussian planning", "[bounds]") {
  BoundConstants c;
  c.mu = 0.1;
  c.lambda = 1.0;
  c.G = 1.0;
  c.p = 100;
  c.N = 10;
  c.d = 5000;
  c.xi2 = 1.0;
  c.q = 0.1;
  c.Lambda.assign(10, 0.5);
  SECTION("moderate budgets and large Y0 train as long as allowed") {
    c.Y0 = 50.0;
    c.budgets.assign(10, {1.0, 1e-5});
    const PlanResult plan = OptimalGaussian(c, 1000);
    const auto& s = plan.selected();
    CHECK(s.provenance == Provenance::kGaussianSol1);
    CHECK(s.T == 1000);
    CHECK(s.b == 10);
    CHECK(s.T_capped);
    REQUIRE(s.limit_value.has_value());
    CHECK(*s.limit_value == GaussianCoefficientsOf(c).E3);
    const GridMinimum grid = GridMinimizeBound(MechanismKind::kGaussian, c, 1000);
    CHECK(grid.T == s.T);
    CHECK(grid.b == s.b);
  }
  SECTION("tiny budgets make training useless") {
    c.Y0 = 0.0;
    c.budgets.assign(10, {1e-3, 1e-5});
    const PlanResult plan = OptimalGaussian(c, 1000);
    CHECK(plan.selected().T == 0);
    CHECK(plan.selected().provenance == Provenance::kGaussianSol2);
    CHECK(plan.warnings == std::vector<std::string>{kUselessLearningWarning});
    CHECK(GridMinimizeBound(MechanismKind::kGaussian, c, 1000).T == 0);
  }
  SECTION("random problems match the grid") {
    Rng rng = MakeRng(12);
    for (int k = 0; k < 40; ++k) {
      const BoundConstants r = RandomConstants(rng, true);
      const PlanResult plan = OptimalGaussian(r, 500);
      const GridMinimum grid = GridMinimizeBound(MechanismKind::kGaussian, r, 500);
      CHECK(plan.selected().bound_value <= grid.value + 1e-9 * std::abs(grid.value));
      CHECK(plan.selected().T == grid.T);
      CHECK(plan.selected().b == grid.b);
    }
  }
}

TEST_CASE("alternate convex search", "[bounds]") {
  Rng rng = MakeRng(13);
  int agreed = 0;
  for (int k = 0; k < 200; ++k) {
    const bool gaussian = k % 4 == 3;
    const MechanismKind kind = gaussian ? MechanismKind::kGaussian : MechanismKind::kLaplace;
    const BoundConstants c = RandomConstants(rng, gaussian);
    const double T_cap = 5000;
    const AcsResult acs = AcsMinimize(kind, c, T_cap);
    CHECK(acs.converged);
    for (std::size_t j = 1; j < acs.history.size(); ++j) {
      CHECK(acs.history[j] <= acs.history[j - 1] * (1 + 1e-12) + 1e-15);
    }
    CHECK(acs.solution.provenance == Provenance::kAcs);
    if (!gaussian) {
      // fixed point: each coordinate is optimal given the other
      const double t_opt = std::min(T_cap, OptimalTFixedBLaplace(c, acs.b));
      CHECK(BoundLaplace(acs.T, acs.b, c) <= BoundLaplace(t_opt, acs.b, c) + 1e-9 * BoundLaplace(t_opt, acs.b, c));
      const double b_opt = OptimalBFixedTLaplace(c, acs.T);
      CHECK(BoundLaplace(acs.T, acs.b, c) <= BoundLaplace(acs.T, b_opt, c) + 1e-9 * BoundLaplace(acs.T, b_opt, c));

      const PlanResult kkt = KktSolutionsLaplace(c, T_cap);
      CHECK(acs.solution.bound_value >= kkt.selected().bound_value * (1 - 1e-12));
      if (kkt.selected().provenance == Provenance::kKktSol1) {
        AcsOptions opts;
        opts.start_b = 1.0 + 0.5 * (k % 2);
        const AcsResult from_one = AcsMinimize(kind, c, T_cap, opts);
        CHECK(from_one.solution.b == 1);
        CHECK(from_one.solution.T == kkt.selected().T);
        ++agreed;
      }
    }
  }
  CHECK(agreed > 10);
  CHECK_THROWS_AS(AcsMinimize(MechanismKind::kNone, BoundConstants{}, 10), Error);
}
