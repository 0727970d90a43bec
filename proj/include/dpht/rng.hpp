//
// Copyright 2026 The dpht Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DPHT_RNG_HPP
#define DPHT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace dpht {

// SplitMix64 finalizer. Used to derive independent seed streams from one
// user-facing seed, e.g. mix_seed(seed, kInitStream).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Named sub-streams of a run seed.
enum : std::uint64_t {
  kStreamInit = 1,
  kStreamBatch = 2,
  kStreamNoise = 3,
  kStreamData = 4,
};

// Deterministic Gaussian sampler.
//
// Uniform variates are taken as the top 53 bits of std::mt19937_64 output
// (the engine's sequence is fully specified by the standard) and converted
// to N(0,1) with the Marsaglia polar method. std::normal_distribution is
// deliberately not used: its algorithm is implementation-defined and would
// break cross-platform reproducibility of seeded runs.
class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed) : engine_(seed) {}

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Standard normal draw. Polar method; the second variate of each
  // accepted pair is cached and returned on the next call.
  double standard_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
  }

  double normal(double mean, double stddev) {
    return mean + stddev * standard_normal();
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dpht

#endif  // DPHT_RNG_HPP
