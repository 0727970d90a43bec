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

#include "dpht/data_io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "dpht/rng.hpp"

namespace dpht::data {

namespace {

constexpr char kMagic[4] = {'D', 'P', 'H', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::ostream& out, const unsigned char* bytes, std::size_t len) {
  out.write(reinterpret_cast<const char*>(bytes), static_cast<std::streamsize>(len));
}

void write_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(out, b, 4);
}

void write_u64le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(out, b, 8);
}

void write_u16le(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8)};
  put_bytes(out, b, 2);
}

void write_f32le(std::ostream& out, float v) {
  write_u32le(out, std::bit_cast<std::uint32_t>(v));
}

// Reader that tracks its byte offset for error reporting.
class CacheReader {
 public:
  explicit CacheReader(std::istream& in) : in_(in) {}

  std::size_t offset() const { return offset_; }

  void read_exact(unsigned char* dst, std::size_t len, const char* what) {
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(len));
    if (static_cast<std::size_t>(in_.gcount()) != len) {
      throw FormatError(std::string("truncated cache file while reading ") + what,
                        offset_ + static_cast<std::size_t>(in_.gcount()));
    }
    offset_ += len;
  }

  std::uint16_t read_u16le(const char* what) {
    unsigned char b[2];
    read_exact(b, 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }

  std::uint32_t read_u32le(const char* what) {
    unsigned char b[4];
    read_exact(b, 4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  std::uint64_t read_u64le(const char* what) {
    unsigned char b[8];
    read_exact(b, 8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  float read_f32le(const char* what) {
    return std::bit_cast<float>(read_u32le(what));
  }

 private:
  std::istream& in_;
  std::size_t offset_ = 0;
};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

void validate_dataset(const FeatureDataset& dataset) {
  if (dataset.n < 1) throw ValidationError("dataset must contain at least one example");
  if (dataset.d < 1 || dataset.k < 1) {
    throw ValidationError("dataset dimensions must be positive");
  }
  if (dataset.features.size() != dataset.n * dataset.d) {
    throw ValidationError("feature buffer size does not match n x d");
  }
  if (dataset.labels.size() != dataset.n) {
    throw ValidationError("label count does not match n");
  }
  for (std::size_t i = 0; i < dataset.features.size(); ++i) {
    if (!std::isfinite(dataset.features[i])) {
      throw ValidationError("non-finite feature at flat index " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < dataset.n; ++i) {
    if (dataset.labels[i] < 0 ||
        static_cast<std::size_t>(dataset.labels[i]) >= dataset.k) {
      throw ValidationError("label out of range at row " + std::to_string(i));
    }
  }
}

void write_cache(const FeatureDataset& dataset, const std::string& path) {
  validate_dataset(dataset);
  if (dataset.k > 65536) {
    throw ValidationError("cache labels are u16: class count must be <= 65536");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open cache file for writing: " + path);

  put_bytes(out, reinterpret_cast<const unsigned char*>(kMagic), 4);
  write_u32le(out, kVersion);
  write_u64le(out, static_cast<std::uint64_t>(dataset.n));
  write_u32le(out, static_cast<std::uint32_t>(dataset.d));
  write_u32le(out, static_cast<std::uint32_t>(dataset.k));
  for (float f : dataset.features) write_f32le(out, f);
  for (std::int32_t label : dataset.labels) {
    write_u16le(out, static_cast<std::uint16_t>(label));
  }
  out.flush();
  if (!out) throw std::runtime_error("failed writing cache file: " + path);
}

FeatureDataset read_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open cache file: " + path);
  CacheReader reader(in);

  unsigned char magic[4];
  reader.read_exact(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad magic, not a DPHT feature cache", 0);
  }
  const std::uint32_t version = reader.read_u32le("version");
  if (version != kVersion) {
    throw FormatError("unsupported cache version " + std::to_string(version), 4);
  }
  const std::uint64_t n = reader.read_u64le("example count");
  const std::uint32_t d = reader.read_u32le("feature dimension");
  const std::uint32_t k = reader.read_u32le("class count");
  if (n == 0 || d == 0 || k == 0) {
    throw FormatError("header declares an empty dataset", 8);
  }
  if (n > std::numeric_limits<std::size_t>::max() / d / sizeof(float)) {
    throw FormatError("header declares an implausibly large payload", 8);
  }

  FeatureDataset dataset;
  dataset.n = static_cast<std::size_t>(n);
  dataset.d = d;
  dataset.k = k;
  dataset.features.resize(dataset.n * dataset.d);
  for (std::size_t i = 0; i < dataset.features.size(); ++i) {
    dataset.features[i] = reader.read_f32le("feature payload");
  }
  dataset.labels.resize(dataset.n);
  for (std::size_t i = 0; i < dataset.n; ++i) {
    dataset.labels[i] = reader.read_u16le("label payload");
  }
  validate_dataset(dataset);
  return dataset;
}

FeatureDataset import_csv(const std::string& path, int label_column,
                          bool has_header, std::size_t declared_k) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open CSV file: " + path);

  FeatureDataset dataset;
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  std::size_t label_idx = 0;
  std::int32_t max_label = -1;

  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && has_header) continue;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);

    if (columns == 0) {
      columns = cells.size();
      if (columns < 2) {
        throw ValidationError("line " + std::to_string(line_no) +
                              ": need at least one feature and a label column");
      }
      label_idx = label_column < 0 ? columns - 1
                                   : static_cast<std::size_t>(label_column);
      if (label_idx >= columns) {
        throw ValidationError("label column " + std::to_string(label_column) +
                              " out of range for " + std::to_string(columns) +
                              " columns");
      }
      dataset.d = columns - 1;
    } else if (cells.size() != columns) {
      throw ValidationError("line " + std::to_string(line_no) + ": ragged row, got " +
                            std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(columns));
    }

    for (std::size_t c = 0; c < columns; ++c) {
      const std::string& cell = cells[c];
      if (c == label_idx) {
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
        if (ec != std::errc{} || ptr != cell.data() + cell.size() ||
            value != std::floor(value) || value < 0.0 || value > 65535.0) {
          throw ValidationError("line " + std::to_string(line_no) +
                                ": invalid label cell '" + cell + "'");
        }
        const auto label = static_cast<std::int32_t>(value);
        if (declared_k > 0 && static_cast<std::size_t>(label) >= declared_k) {
          throw ValidationError("line " + std::to_string(line_no) + ": label " +
                                std::to_string(label) + " out of range for declared " +
                                std::to_string(declared_k) + " classes");
        }
        max_label = std::max(max_label, label);
        dataset.labels.push_back(label);
      } else {
        float value = 0.0f;
        auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
        if (ec != std::errc{} || ptr != cell.data() + cell.size() ||
            !std::isfinite(value)) {
          throw ValidationError("line " + std::to_string(line_no) +
                                ": non-numeric feature cell '" + cell + "'");
        }
        dataset.features.push_back(value);
      }
    }
  }

  dataset.n = dataset.labels.size();
  dataset.k = declared_k > 0 ? declared_k
                             : static_cast<std::size_t>(max_label + 1);
  validate_dataset(dataset);
  return dataset;
}

void export_csv(const FeatureDataset& dataset, const std::string& path) {
  validate_dataset(dataset);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open CSV file for writing: " + path);
  char buf[64];
  for (std::size_t i = 0; i < dataset.n; ++i) {
    const float* row = dataset.row(i);
    for (std::size_t j = 0; j < dataset.d; ++j) {
      // max_digits10 for float: lossless reparse.
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(row[j]));
      out << buf << ',';
    }
    out << dataset.labels[i] << '\n';
  }
  if (!out) throw std::runtime_error("failed writing CSV file: " + path);
}

FeatureDataset gen_synthetic(std::size_t n, std::size_t d, std::size_t k,
                             double separation, double noise_std,
                             std::uint64_t seed) {
  if (n < 1 || d < 1 || k < 1) {
    throw std::domain_error("gen_synthetic: n, d, k must be positive");
  }
  if (separation < 0.0 || noise_std < 0.0) {
    throw std::domain_error("gen_synthetic: separation and noise_std must be >= 0");
  }

  GaussianSampler rng(mix_seed(seed, kStreamData));

  // Orthonormal class directions by Gram-Schmidt over seeded Gaussian
  // vectors. Beyond d classes orthogonality is impossible; those get plain
  // random unit directions.
  std::vector<std::vector<double>> dirs(k, std::vector<double>(d));
  for (std::size_t c = 0; c < k; ++c) {
    for (;;) {
      for (std::size_t j = 0; j < d; ++j) dirs[c][j] = rng.standard_normal();
      if (c < d) {
        for (std::size_t p = 0; p < c; ++p) {
          double dot = 0.0;
          for (std::size_t j = 0; j < d; ++j) dot += dirs[c][j] * dirs[p][j];
          for (std::size_t j = 0; j < d; ++j) dirs[c][j] -= dot * dirs[p][j];
        }
      }
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) sq += dirs[c][j] * dirs[c][j];
      if (sq > 1e-12) {
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t j = 0; j < d; ++j) dirs[c][j] *= inv;
        break;
      }
    }
  }

  FeatureDataset dataset;
  dataset.n = n;
  dataset.d = d;
  dataset.k = k;
  dataset.features.resize(n * d);
  dataset.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % k;
    dataset.labels[i] = static_cast<std::int32_t>(c);
    float* row = dataset.features.data() + i * d;
    if (noise_std == 0.0) {
      for (std::size_t j = 0; j < d; ++j) {
        row[j] = static_cast<float>(separation * dirs[c][j]);
      }
    } else {
      for (std::size_t j = 0; j < d; ++j) {
        row[j] = static_cast<float>(separation * dirs[c][j] +
                                    noise_std * rng.standard_normal());
      }
    }
  }
  return dataset;
}

BatchMode batch_mode_from_name(const std::string& name) {
  if (name == "poisson") return BatchMode::kPoisson;
  if (name == "shuffle") return BatchMode::kShuffle;
  if (name == "full") return BatchMode::kFull;
  throw ConfigError("unknown batch mode: " + name);
}

std::string batch_mode_name(BatchMode mode) {
  switch (mode) {
    case BatchMode::kPoisson: return "poisson";
    case BatchMode::kShuffle: return "shuffle";
    case BatchMode::kFull: return "full";
  }
  return "full";
}

BatchSelector BatchSelector::poisson(double q, std::uint64_t seed) {
  if (!(q > 0.0) || q > 1.0) throw ConfigError("poisson rate must be in (0, 1]");
  BatchSelector s;
  s.mode_ = BatchMode::kPoisson;
  s.q_ = q;
  s.engine_.seed(seed);
  return s;
}

BatchSelector BatchSelector::shuffled(std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw ConfigError("shuffle batch size must be >= 1");
  BatchSelector s;
  s.mode_ = BatchMode::kShuffle;
  s.batch_size_ = batch_size;
  s.engine_.seed(seed);
  return s;
}

BatchSelector BatchSelector::full() {
  BatchSelector s;
  s.mode_ = BatchMode::kFull;
  return s;
}

// Unbiased uniform integer in [0, range); rejection on raw engine output.
std::uint64_t BatchSelector::bounded(std::uint64_t range) {
  const std::uint64_t threshold = (0 - range) % range;
  for (;;) {
    const std::uint64_t x = engine_();
    if (x >= threshold) return x % range;
  }
}

std::vector<std::size_t> BatchSelector::next(std::size_t n) {
  if (n == 0) throw std::domain_error("cannot select batches from an empty dataset");
  std::vector<std::size_t> indices;
  switch (mode_) {
    case BatchMode::kFull: {
      indices.resize(n);
      for (std::size_t i = 0; i < n; ++i) indices[i] = i;
      return indices;
    }
    case BatchMode::kPoisson: {
      const std::uint64_t threshold =
          q_ >= 1.0 ? std::numeric_limits<std::uint64_t>::max()
                    : static_cast<std::uint64_t>(
                          q_ * 0x1p64 /* 2^64 as double */);
      for (std::size_t i = 0; i < n; ++i) {
        // engine_() < q * 2^64 <=> uniform [0,1) draw < q.
        const std::uint64_t x = engine_();
        if (q_ >= 1.0 || x < threshold) indices.push_back(i);
      }
      return indices;
    }
    case BatchMode::kShuffle: {
      if (batch_size_ > n) {
        throw ConfigError("shuffle batch size exceeds dataset size");
      }
      if (perm_.size() != n || cursor_ >= n) {
        perm_.resize(n);
        for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
        for (std::size_t i = n - 1; i > 0; --i) {
          const std::size_t j = static_cast<std::size_t>(bounded(i + 1));
          std::swap(perm_[i], perm_[j]);
        }
        cursor_ = 0;
      }
      const std::size_t end = std::min(cursor_ + batch_size_, n);
      indices.assign(perm_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                     perm_.begin() + static_cast<std::ptrdiff_t>(end));
      cursor_ = end;
      return indices;
    }
  }
  throw std::logic_error("unreachable batch mode");
}

double BatchSelector::sampling_rate(std::size_t n) const {
  switch (mode_) {
    case BatchMode::kPoisson: return q_;
    case BatchMode::kShuffle:
      return static_cast<double>(batch_size_) / static_cast<double>(n);
    case BatchMode::kFull: return 1.0;
  }
  return 1.0;
}

std::int64_t BatchSelector::steps_per_epoch(std::size_t n) const {
  switch (mode_) {
    case BatchMode::kPoisson:
      return std::max<std::int64_t>(1, std::llround(1.0 / q_));
    case BatchMode::kShuffle:
      return static_cast<std::int64_t>((n + batch_size_ - 1) / batch_size_);
    case BatchMode::kFull: return 1;
  }
  return 1;
}

}  // namespace dpht::data
