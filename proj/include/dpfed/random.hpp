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
#ifndef DPFED_RANDOM_HPP_
#define DPFED_RANDOM_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dpfed {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
inline std::uint64_t MixBits(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a parent seed and a path of
// stream labels (trial, round, client id, ...). Order of labels matters.
inline std::uint64_t DeriveSeed(std::uint64_t parent,
                                std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = MixBits(parent);
  for (std::uint64_t label : path) s = MixBits(s ^ MixBits(label + 0x632be59bd9b4e019ULL));
  return s;
}

inline Rng MakeRng(std::uint64_t parent,
                   std::initializer_list<std::uint64_t> path = {}) {
  return Rng(DeriveSeed(parent, path));
}

// Uniform double strictly inside (0, 1), 53 bits of resolution.
inline double UniformOpen01(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace dpfed

#endif  // DPFED_RANDOM_HPP_
