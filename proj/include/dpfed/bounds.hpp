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
#ifndef DPFED_BOUNDS_HPP_
#define DPFED_BOUNDS_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dpfed/error.hpp"
#include "dpfed/mechanisms.hpp"

namespace dpfed {

/// Every symbol that feeds the convergence bounds U(T, b).
struct BoundConstants {
  double mu = 1.0;      // strong convexity
  double lambda = 1.0;  // smoothness
  double G = 1.0;       // E|grad F_i(theta, zeta)|^2 <= G^2
  double Gamma = 0.0;   // non-iid degree
  double Y0 = 0.0;      // |theta_0 - theta*|^2
  double p = 1.0;       // parameter dimension
  double d = 1.0;       // total samples
  std::size_t N = 1;
  std::vector<PrivacyBudget> budgets;  // one per client
  double xi1 = 1.0;
  double xi2 = 1.0;
  std::vector<double> Lambda;        // per-client sample-gradient spread, optional
  std::vector<double> client_sizes;  // d_i, optional (uniform d/N when empty)
  double q = 1.0;
  double c2 = 1.0;

  double gamma() const { return 2.0 * lambda / mu; }

  double SumInvEpsilonSq() const {
    double s = 0.0;
    for (const auto& b : budgets) s += 1.0 / (b.epsilon * b.epsilon);
    return s;
  }

  double SumLogInvDeltaOverEpsilonSq() const {
    double s = 0.0;
    for (const auto& b : budgets) s += std::log(1.0 / b.delta) / (b.epsilon * b.epsilon);
    return s;
  }

  // sum_i d_i Lambda_i^2 / (q d^2)
  double SampleVarianceTerm() const {
    if (Lambda.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < Lambda.size(); ++i) {
      const double d_i = client_sizes.empty() ? d / static_cast<double>(N) : client_sizes[i];
      s += d_i * Lambda[i] * Lambda[i];
    }
    return s / (q * d * d);
  }

  void Validate(MechanismKind kind) const {
    Require(mu > 0.0 && lambda > 0.0, "mu and lambda must be positive");
    Require(G >= 0.0 && Gamma >= 0.0 && Y0 >= 0.0, "G, Gamma and Y0 must be non-negative");
    Require(p > 0.0 && d > 0.0 && N >= 1, "p, d and N must be positive");
    Require(budgets.size() == N, "need one privacy budget per client");
    Require(xi1 > 0.0 && xi2 > 0.0, "clip bounds must be positive");
    Require(q > 0.0 && q <= 1.0 && c2 > 0.0, "q must lie in (0, 1] and c2 be positive");
    Require(Lambda.empty() || Lambda.size() == N, "need one Lambda per client");
    Require(client_sizes.empty() || client_sizes.size() == N, "need one size per client");
    for (const auto& b : budgets) {
      Require(b.epsilon > 0.0, "epsilon must be positive");
      if (kind == MechanismKind::kGaussian) {
        Require(b.delta > 0.0 && b.delta < 1.0, "Gaussian bound needs delta in (0, 1)");
      }
    }
  }
};

// 2 (N - b) / ((N - 1) b); zero for N = 1, where b = N means no sampling.
inline double ClientSamplingFactor(double N, double b) {
  if (N <= 1.0) return 0.0;
  return 2.0 * (N - b) / ((N - 1.0) * b);
}

namespace internal {

inline void CheckBoundArgs(double T, double b, const BoundConstants& c) {
  Require(T >= 0.0, "T must be non-negative");
  if (!(b >= 1.0 && b <= static_cast<double>(c.N))) {
    throw Error(ErrorCode::kInvalidArgument, "b must lie in [1, N]");
  }
}

}  // namespace internal

/// Laplace upper bound on Y_T:
///   (4 w0 / mu^2 + gamma Y0) / (T + gamma) + w1 / (mu^2 (T + gamma))
///   w0 = 2 (N-b) G^2 / ((N-1) b) + 2 lambda Gamma
///   w1 = 32 p b T^2 xi1^2 / (N d^2) * sum 1/eps_i^2
/// Real-valued T and b are accepted for the continuous relaxation.
inline double BoundLaplace(double T, double b, const BoundConstants& c) {
  internal::CheckBoundArgs(T, b, c);
  const double N = static_cast<double>(c.N);
  const double mu2 = c.mu * c.mu;
  const double gamma = c.gamma();
  const double w0 = ClientSamplingFactor(N, b) * c.G * c.G + 2.0 * c.lambda * c.Gamma;
  const double w1 = 32.0 * c.p * b * T * T * c.xi1 * c.xi1 / (N * c.d * c.d) * c.SumInvEpsilonSq();
  return (4.0 * w0 / mu2 + gamma * c.Y0) / (T + gamma) + w1 / (mu2 * (T + gamma));
}

// U(T, b) = (C1 / b + C2 b T^2 + C3) / (T + gamma)
struct LaplaceCoefficients {
  double C1 = 0.0;
  double C2 = 0.0;
  double C3 = 0.0;
  double gamma = 1.0;

  double Evaluate(double T, double b) const { return (C1 / b + C2 * b * T * T + C3) / (T + gamma); }
};

inline LaplaceCoefficients LaplaceCoefficientsOf(const BoundConstants& c) {
  const double N = static_cast<double>(c.N);
  const double mu2 = c.mu * c.mu;
  const double g2 = c.G * c.G;
  LaplaceCoefficients out;
  out.gamma = c.gamma();
  out.C1 = c.N > 1 ? (4.0 / mu2) * (2.0 * N * g2 / (N - 1.0)) : 0.0;
  out.C2 = (32.0 * c.p * c.xi1 * c.xi1 / (mu2 * N * c.d * c.d)) * c.SumInvEpsilonSq();
  out.C3 = out.gamma * c.Y0 +
           (4.0 / mu2) * (2.0 * c.lambda * c.Gamma - (c.N > 1 ? 2.0 * g2 / (N - 1.0) : 0.0));
  return out;
}

/// Gaussian upper bound on Y_T, same shape as the Laplace one with
///   w0' = 2 (N-b) G^2 / ((N-1) b) + sum d_i Lambda_i^2 / (q d^2) + 2 lambda Gamma
///   w1' = 4 c2^2 p T xi2^2 / d^2 * sum log(1/delta_i) / eps_i^2
inline double BoundGaussian(double T, double b, const BoundConstants& c) {
  internal::CheckBoundArgs(T, b, c);
  const double N = static_cast<double>(c.N);
  const double mu2 = c.mu * c.mu;
  const double gamma = c.gamma();
  const double w0 = ClientSamplingFactor(N, b) * c.G * c.G + c.SampleVarianceTerm() +
                    2.0 * c.lambda * c.Gamma;
  const double w1 = 4.0 * c.c2 * c.c2 * c.p * T * c.xi2 * c.xi2 / (c.d * c.d) *
                    c.SumLogInvDeltaOverEpsilonSq();
  return (4.0 * w0 / mu2 + gamma * c.Y0) / (T + gamma) + w1 / (mu2 * (T + gamma));
}

// U(T, b) = E1 / (b (T + gamma)) + E2 / (T + gamma) + E3. E2 carries the
// -gamma E3 left over from writing T / (T + gamma) as 1 - gamma / (T + gamma),
// so this form equals BoundGaussian exactly.
struct GaussianCoefficients {
  double E1 = 0.0;
  double E2 = 0.0;
  double E3 = 0.0;
  double gamma = 1.0;

  double Evaluate(double T, double b) const { return E1 / (b * (T + gamma)) + E2 / (T + gamma) + E3; }
};

inline GaussianCoefficients GaussianCoefficientsOf(const BoundConstants& c) {
  const double N = static_cast<double>(c.N);
  const double mu2 = c.mu * c.mu;
  const double g2 = c.G * c.G;
  GaussianCoefficients out;
  out.gamma = c.gamma();
  out.E1 = c.N > 1 ? (8.0 * g2 / mu2) * (N / (N - 1.0)) : 0.0;
  out.E3 = (4.0 / mu2) * (c.c2 * c.c2 * c.p * c.xi2 * c.xi2 / (c.d * c.d)) *
           c.SumLogInvDeltaOverEpsilonSq();
  out.E2 = (4.0 / mu2) * (-(c.N > 1 ? 2.0 * g2 / (N - 1.0) : 0.0) + c.SampleVarianceTerm() +
                          2.0 * c.lambda * c.Gamma) +
           out.gamma * c.Y0 - out.gamma * out.E3;
  return out;
}

inline double BoundFor(MechanismKind kind, double T, double b, const BoundConstants& c) {
  return kind == MechanismKind::kGaussian ? BoundGaussian(T, b, c) : BoundLaplace(T, b, c);
}

/// Stationary point of (A + A2 T^2) / (T + gamma) in T:
/// sqrt(gamma^2 + A / A2) - gamma, floored at 0 (a negative radicand or a
/// negative root means the bound increases from T = 0).
inline double StationaryHorizon(double gamma, double numerator, double A2) {
  Require(A2 > 0.0, "noise coefficient vanishes: the optimal T is unbounded",
          ErrorCode::kUnboundedHorizon);
  const double radicand = gamma * gamma + numerator / A2;
  if (!(radicand > 0.0)) return 0.0;
  return std::max(0.0, std::sqrt(radicand) - gamma);
}

/// Optimal continuous T for a fixed b under the Laplace bound:
/// T* = sqrt(gamma^2 + (A1 + gamma Y0) / A2) - gamma with
/// A1 = (4/mu^2)(2 (N-b) G^2 / ((N-1) b) + 2 lambda Gamma) and
/// A2 = (32 p b xi1^2 / (mu^2 N d^2)) sum 1/eps_i^2.
inline double OptimalTFixedBLaplace(const BoundConstants& c, double b) {
  internal::CheckBoundArgs(0.0, b, c);
  const double N = static_cast<double>(c.N);
  const double mu2 = c.mu * c.mu;
  const double A1 = (4.0 / mu2) * (ClientSamplingFactor(N, b) * c.G * c.G + 2.0 * c.lambda * c.Gamma);
  const double A2 = (32.0 * c.p * b * c.xi1 * c.xi1 / (mu2 * N * c.d * c.d)) * c.SumInvEpsilonSq();
  return StationaryHorizon(c.gamma(), A1 + c.gamma() * c.Y0, A2);
}

/// Optimal continuous b for a fixed T under the Laplace bound,
/// b* = G N d / (2 T xi1 sqrt(p (N-1) sum 1/eps_i^2)), clamped to [1, N].
/// N = 1 gives 1; T = 0 gives N (the noise term vanishes).
inline double OptimalBFixedTLaplace(const BoundConstants& c, double T) {
  Require(T >= 0.0, "T must be non-negative");
  const double N = static_cast<double>(c.N);
  if (c.N == 1) return 1.0;
  if (T == 0.0) return N;
  const double b = c.G * N * c.d / (2.0 * T * c.xi1) / std::sqrt(c.p * (N - 1.0)) /
                   std::sqrt(c.SumInvEpsilonSq());
  return std::clamp(b, 1.0, N);
}

enum class Provenance {
  kKktSol1,
  kKktSol2,
  kKktSol3,
  kAcs,
  kClosedFormT,
  kClosedFormB,
  kGaussianSol1,
  kGaussianSol2,
  kGrid,
};

inline const char* ProvenanceName(Provenance p) {
  switch (p) {
    case Provenance::kKktSol1: return "KKT-sol1";
    case Provenance::kKktSol2: return "KKT-sol2";
    case Provenance::kKktSol3: return "KKT-sol3";
    case Provenance::kAcs: return "ACS";
    case Provenance::kClosedFormT: return "closed-form-T";
    case Provenance::kClosedFormB: return "closed-form-b";
    case Provenance::kGaussianSol1: return "Gaussian-sol1";
    case Provenance::kGaussianSol2: return "Gaussian-sol2";
    case Provenance::kGrid: return "grid";
  }
  return "unknown";
}

struct CandidateSolution {
  std::size_t T = 0;
  std::size_t b = 1;
  double bound_value = 0.0;
  Provenance provenance = Provenance::kGrid;
  double T_continuous = 0.0;
  double b_continuous = 1.0;
  // T stands in for "as large as possible" and was capped.
  bool T_capped = false;
  // Limit of the bound as T grows without bound (Gaussian E3), when relevant.
  std::optional<double> limit_value;
};

/// Evaluates the bound at the floor and ceiling of a continuous (T, b),
/// clamped to [0, T_cap] x [1, N], and keeps the smallest.
template <typename BoundFn>
CandidateSolution Integerize(double T, double b, std::size_t N, double T_cap, Provenance provenance,
                             BoundFn&& bound) {
  const double t_hi = std::isfinite(T_cap) ? T_cap : std::numeric_limits<double>::max();
  const double t_lo_c = std::clamp(std::floor(T), 0.0, std::floor(t_hi));
  const double t_hi_c = std::clamp(std::ceil(T), 0.0, std::floor(t_hi));
  const double n = static_cast<double>(N);
  const double b_lo_c = std::clamp(std::floor(b), 1.0, n);
  const double b_hi_c = std::clamp(std::ceil(b), 1.0, n);

  CandidateSolution best;
  best.provenance = provenance;
  best.T_continuous = T;
  best.b_continuous = b;
  bool first = true;
  for (double tt : {t_lo_c, t_hi_c}) {
    for (double bb : {b_lo_c, b_hi_c}) {
      const double value = bound(tt, bb);
      if (first || value < best.bound_value) {
        best.T = static_cast<std::size_t>(tt);
        best.b = static_cast<std::size_t>(bb);
        best.bound_value = value;
        first = false;
      }
    }
  }
  return best;
}

struct PlanResult {
  std::vector<CandidateSolution> candidates;
  std::size_t best = 0;
  std::vector<std::string> warnings;

  const CandidateSolution& selected() const { return candidates.at(best); }
};

inline constexpr const char* kUselessLearningWarning = "learning is useless at this budget";

namespace internal {

inline std::size_t ArgminCandidate(const std::vector<CandidateSolution>& candidates) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    if (candidates[k].bound_value < candidates[best].bound_value) best = k;
  }
  return best;
}

}  // namespace internal

/// Enumerates the KKT candidates of min U(T, b) over T >= 0, 1 <= b <= N:
/// interior-T stationary points on the faces b = 1 and b = N, and the T = 0
/// face. Along the interior curve b = b*(T) the bound is monotone in T, so
/// these cover the continuous problem. Integer b and a finite T_cap can move
/// the optimum inside, so the cap face and a sweep of T*(b) over integer b
/// are added. Each candidate is integerized; the smallest bound wins.
inline PlanResult KktSolutionsLaplace(const BoundConstants& c,
                                      double T_cap = std::numeric_limits<double>::infinity()) {
  c.Validate(MechanismKind::kLaplace);
  const LaplaceCoefficients k = LaplaceCoefficientsOf(c);
  const auto bound = [&](double T, double b) { return BoundLaplace(T, b, c); };
  const double N = static_cast<double>(c.N);

  PlanResult plan;
  const std::pair<double, Provenance> faces[] = {{1.0, Provenance::kKktSol1},
                                                 {N, Provenance::kKktSol2}};
  for (const auto& [b, provenance] : faces) {
    double T = 0.0;
    bool capped = false;
    if (k.C2 > 0.0) {
      T = StationaryHorizon(k.gamma, k.C1 / b + k.C3, k.C2 * b);
    } else {
      Require(std::isfinite(T_cap), "noise-free bound has no finite optimal T; supply a cap",
              ErrorCode::kUnboundedHorizon);
      T = T_cap;
      capped = true;
    }
    if (std::isfinite(T_cap) && T > T_cap) {
      T = T_cap;
      capped = true;
    }
    CandidateSolution s = Integerize(T, b, c.N, T_cap, provenance, bound);
    s.T_capped = capped;
    plan.candidates.push_back(s);
  }
  // T = 0: U(0, b) = (C1 / b + C3) / gamma is smallest at b = N when C1 > 0.
  const double b0 = k.C1 > 0.0 ? N : 1.0;
  plan.candidates.push_back(Integerize(0.0, b0, c.N, T_cap, Provenance::kKktSol3, bound));
  // A finite cap adds the face T = T_cap, where b* may be interior.
  if (std::isfinite(T_cap) && T_cap > 0.0) {
    CandidateSolution s = Integerize(T_cap, OptimalBFixedTLaplace(c, T_cap), c.N, T_cap,
                                     Provenance::kClosedFormB, bound);
    s.T_capped = true;
    plan.candidates.push_back(s);
  }
  // Integer b: the exact optimum is T*(b) rounded for one of b = 1..N.
  if (k.C2 > 0.0) {
    CandidateSolution sweep;
    for (std::size_t b = 1; b <= c.N; ++b) {
      const double T = std::min(T_cap, OptimalTFixedBLaplace(c, static_cast<double>(b)));
      CandidateSolution s =
          Integerize(T, static_cast<double>(b), c.N, T_cap, Provenance::kClosedFormT, bound);
      s.T_capped = std::isfinite(T_cap) && T == T_cap;
      if (b == 1 || s.bound_value < sweep.bound_value) sweep = s;
    }
    plan.candidates.push_back(sweep);
  }

  plan.best = internal::ArgminCandidate(plan.candidates);
  if (plan.selected().T == 0) plan.warnings.emplace_back(kUselessLearningWarning);
  return plan;
}

/// Gaussian planning. For fixed b the bound is monotone in T, so the optimum
/// sits at T = T_cap (standing in for T -> infinity, b = N) or at T = 0.
inline PlanResult OptimalGaussian(const BoundConstants& c, double T_cap) {
  c.Validate(MechanismKind::kGaussian);
  Require(T_cap >= 1.0 && std::isfinite(T_cap), "T_cap must be a finite value >= 1");
  const GaussianCoefficients e = GaussianCoefficientsOf(c);
  const auto bound = [&](double T, double b) { return BoundGaussian(T, b, c); };
  const double N = static_cast<double>(c.N);

  PlanResult plan;
  CandidateSolution sol1 = Integerize(std::floor(T_cap), N, c.N, T_cap, Provenance::kGaussianSol1, bound);
  sol1.T_capped = true;
  sol1.limit_value = e.E3;
  plan.candidates.push_back(sol1);

  // U(0, b) = (E1 / b + E2) / gamma + E3 is smallest at b = N when E1 > 0.
  const double b0 = e.E1 > 0.0 ? N : 1.0;
  plan.candidates.push_back(Integerize(0.0, b0, c.N, T_cap, Provenance::kGaussianSol2, bound));

  plan.best = internal::ArgminCandidate(plan.candidates);
  if (plan.selected().T == 0) plan.warnings.emplace_back(kUselessLearningWarning);
  return plan;
}

struct AcsOptions {
  double tol = 1e-9;
  std::size_t max_iters = 1000;
  // Defaults to (T_cap / 2, N / 2).
  std::optional<double> start_T;
  std::optional<double> start_b;
};

struct AcsResult {
  CandidateSolution solution;
  double T = 0.0;  // continuous fixed point
  double b = 1.0;
  std::vector<double> history;  // bound after every half-step
  std::size_t iterations = 0;
  bool converged = false;
};

/// Alternate Convex Search on the continuous relaxation: exact minimization
/// over T for the current b, then over b for the current T, until a full sweep
/// improves the bound by less than `tol`. The fixed point is integerized.
inline AcsResult AcsMinimize(MechanismKind kind, const BoundConstants& c, double T_cap,
                             const AcsOptions& options = {}) {
  Require(kind == MechanismKind::kLaplace || kind == MechanismKind::kGaussian,
          "ACS needs a Laplace or Gaussian bound");
  Require(options.tol > 0.0, "ACS tolerance must be positive");
  Require(T_cap >= 1.0 && std::isfinite(T_cap), "ACS needs a finite T_cap >= 1");
  c.Validate(kind);
  const double N = static_cast<double>(c.N);
  const auto bound = [&](double T, double b) { return BoundFor(kind, T, b, c); };

  double T = std::clamp(options.start_T.value_or(T_cap / 2.0), 0.0, T_cap);
  double b = std::clamp(options.start_b.value_or(N / 2.0), 1.0, N);

  const auto best_T = [&](double bb) {
    if (kind == MechanismKind::kLaplace) {
      const LaplaceCoefficients k = LaplaceCoefficientsOf(c);
      if (!(k.C2 > 0.0)) return T_cap;
      return std::min(T_cap, StationaryHorizon(k.gamma, k.C1 / bb + k.C3, k.C2 * bb));
    }
    const GaussianCoefficients e = GaussianCoefficientsOf(c);
    const double slope = e.E1 / bb + e.E2;
    if (slope > 0.0) return T_cap;
    if (slope < 0.0) return 0.0;
    return T;
  };
  const auto best_b = [&](double TT) {
    if (kind == MechanismKind::kLaplace) return OptimalBFixedTLaplace(c, TT);
    return GaussianCoefficientsOf(c).E1 > 0.0 ? N : b;
  };

  AcsResult result;
  double current = bound(T, b);
  result.history.push_back(current);
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    T = best_T(b);
    result.history.push_back(bound(T, b));
    b = best_b(T);
    const double next = bound(T, b);
    result.history.push_back(next);
    result.iterations = it + 1;
    if (current - next < options.tol) {
      result.converged = true;
      break;
    }
    current = next;
  }
  result.T = T;
  result.b = b;
  result.solution = Integerize(T, b, c.N, T_cap, Provenance::kAcs, bound);
  result.solution.T_capped = kind == MechanismKind::kGaussian && result.solution.T > 0;
  if (kind == MechanismKind::kGaussian) result.solution.limit_value = GaussianCoefficientsOf(c).E3;
  return result;
}

}  // namespace dpfed

#endif  // DPFED_BOUNDS_HPP_
