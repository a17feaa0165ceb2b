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
#ifndef DPFED_SCHEDULE_HPP_
#define DPFED_SCHEDULE_HPP_

#include <cstddef>
#include <cstdint>
#include <string>

#include "dpfed/error.hpp"

namespace dpfed {

/// eta_t = (2 / mu) / (t + gamma) with gamma = 2 lambda / mu, so eta_0 = 1 / lambda.
inline double LearningRate(double t, double mu, double lambda) {
  Require(t >= 0.0 && mu > 0.0 && lambda > 0.0, "learning rate needs t >= 0 and mu, lambda > 0");
  return (2.0 / mu) / (t + 2.0 * lambda / mu);
}

struct FederationSchedule {
  std::size_t num_clients = 1;    // N
  std::size_t participants = 1;   // b
  std::size_t rounds = 0;         // T
  double mu = 1.0;
  double lambda = 1.0;
  double sampling_rate = 1.0;     // q
  std::uint64_t base_seed = 0;

  double gamma() const { return 2.0 * lambda / mu; }
  double eta(std::size_t t) const { return LearningRate(static_cast<double>(t), mu, lambda); }

  void Validate() const {
    Require(num_clients >= 1, "schedule needs at least one client");
    Require(participants >= 1 && participants <= num_clients,
            "participants per round must lie in [1, N], got " + std::to_string(participants));
    Require(mu > 0.0 && lambda > 0.0, "mu and lambda must be positive");
    Require(sampling_rate > 0.0 && sampling_rate <= 1.0, "sampling rate must lie in (0, 1]");
  }
};

}  // namespace dpfed

#endif  // DPFED_SCHEDULE_HPP_
