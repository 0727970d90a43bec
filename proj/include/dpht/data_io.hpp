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

#ifndef DPHT_DATA_IO_HPP
#define DPHT_DATA_IO_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dpht/common.hpp"

namespace dpht::data {

// Cached feature vectors with class labels. Features are stored 32-bit
// (matching the cache file format); all arithmetic on them happens in
// 64-bit accumulators downstream. Immutable after load.
struct FeatureDataset {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t k = 0;
  std::vector<float> features;        // n x d, row-major
  std::vector<std::int32_t> labels;   // in [0, k)

  const float* row(std::size_t i) const { return features.data() + i * d; }

  friend bool operator==(const FeatureDataset& a, const FeatureDataset& b) {
    return a.n == b.n && a.d == b.d && a.k == b.k && a.features == b.features &&
           a.labels == b.labels;
  }
};

// Throws ValidationError unless n >= 1, buffers match n*d / n, every
// feature is finite and every label is in [0, k).
void validate_dataset(const FeatureDataset& dataset);

// Binary feature cache, fixed-width little-endian:
//   magic "DPHT" | version u32 = 1 | n u64 | d u32 | k u32
//   | n*d float32 row-major | n u16 labels.
// Read errors carry the byte offset of the problem.
void write_cache(const FeatureDataset& dataset, const std::string& path);
FeatureDataset read_cache(const std::string& path);

// Rectangular numeric CSV, one example per row, features plus one label
// column. label_column < 0 selects the last column. declared_k == 0 infers
// the class count as max(label) + 1. Parse failures name the 1-based line.
FeatureDataset import_csv(const std::string& path, int label_column = -1,
                          bool has_header = false, std::size_t declared_k = 0);

// Inverse of import_csv (features in order, label last, no header).
// Features are printed with enough digits to round-trip 32-bit exactly.
void export_csv(const FeatureDataset& dataset, const std::string& path);

// Gaussian blobs around orthonormal class directions: class c has mean
// separation * q_c with {q_c} obtained from seeded Gram-Schmidt (random
// unit vectors for classes beyond d, where orthogonality is impossible),
// features = mean + N(0, noise_std^2) i.i.d., labels assigned round-robin.
FeatureDataset gen_synthetic(std::size_t n, std::size_t d, std::size_t k,
                             double separation, double noise_std,
                             std::uint64_t seed);

enum class BatchMode { kPoisson, kShuffle, kFull };

BatchMode batch_mode_from_name(const std::string& name);
std::string batch_mode_name(BatchMode mode);

// Stateful batch index source; one owner per training loop.
//   poisson(q): each index enters independently with probability q.
//   shuffled(B): disjoint blocks of a fresh per-epoch permutation; the last
//                block of an epoch may be short so each index appears
//                exactly once per epoch.
//   full: all indices every call.
class BatchSelector {
 public:
  static BatchSelector poisson(double q, std::uint64_t seed);
  static BatchSelector shuffled(std::size_t batch_size, std::uint64_t seed);
  static BatchSelector full();

  std::vector<std::size_t> next(std::size_t n);

  BatchMode mode() const { return mode_; }
  // Rate fed to the accountant: q for poisson, B/n for shuffle, 1 for full.
  double sampling_rate(std::size_t n) const;
  std::int64_t steps_per_epoch(std::size_t n) const;
  std::size_t batch_size() const { return batch_size_; }

 private:
  BatchSelector() = default;
  std::uint64_t bounded(std::uint64_t range);

  BatchMode mode_ = BatchMode::kFull;
  double q_ = 1.0;
  std::size_t batch_size_ = 0;
  std::mt19937_64 engine_;
  std::vector<std::size_t> perm_;
  std::size_t cursor_ = 0;
};

}  // namespace dpht::data

#endif  // DPHT_DATA_IO_HPP
