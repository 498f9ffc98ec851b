/*
 * Copyright 2026 The pfderiv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace pfd {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key);

/// What a stream is used for; keeps streams of different consumers disjoint
/// even when they share a master seed and indices.
enum class StreamPurpose : std::uint32_t {
  kModelBuild = 1,
  kSimulate = 2,
  kParticles = 3,
  kRatioStudy = 4,
  kProbe = 5,
};

/// Sub-seed for an experiment arm (e.g. one particle count of a sweep):
/// the splitmix64 finalizer applied to seed + tag * golden-ratio increment.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + (tag + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Coordinates of a counter-based stream. Every (seed, purpose, replicate,
/// step, particle) tuple names an independent sequence, so results never
/// depend on which thread draws them or in what order.
struct StreamId {
  std::uint64_t seed = 0;
  StreamPurpose purpose = StreamPurpose::kParticles;
  std::uint32_t replicate = 0;
  std::uint32_t step = 0;
  std::uint32_t particle = 0;
};

/// Sequential reader over one Philox stream. Satisfies
/// UniformRandomBitGenerator so it can feed <random> distributions in tests,
/// but the library draws only through uniform()/normal() for bit-stable
/// output across standard library implementations.
class RandomStream {
 public:
  using result_type = std::uint32_t;

  explicit RandomStream(const StreamId& id);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }
  // Standard normal, Box-Muller (one value per call, the pair partner is kept).
  double normal();

 private:
  void refill();

  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> ctr_{};
  std::array<std::uint32_t, 4> buf_{};
  std::uint32_t block_ = 0;
  int pos_ = 4;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pfd
