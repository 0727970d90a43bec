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

#ifndef DPHT_COMMON_HPP
#define DPHT_COMMON_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dpht {

// Thrown when two containers that must agree in shape do not.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown on malformed input data (labels, one-hot rows, CSV cells).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when an on-disk artifact does not match the expected layout.
// `offset` is the byte position at which the problem was detected.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Thrown when a root-finding bracket cannot enclose the target.
class BracketError : public std::runtime_error {
 public:
  BracketError(const std::string& what, double endpoint)
      : std::runtime_error(what), endpoint_(endpoint) {}
  double endpoint() const { return endpoint_; }

 private:
  double endpoint_;
};

// Thrown on invalid run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown when a computation produced a non-finite value and had to stop.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. All head parameters and gradient
// accumulators use this type; feature storage is 32-bit and lives in
// FeatureDataset instead.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Linear classification head: class weights W (k x d) and biases b (k).
struct LinearHead {
  Matrix W;
  std::vector<double> b;

  LinearHead() = default;
  LinearHead(std::size_t k, std::size_t d) : W(k, d), b(k, 0.0) {}

  std::size_t classes() const { return W.rows(); }
  std::size_t dim() const { return W.cols(); }

  friend bool operator==(const LinearHead& a, const LinearHead& b) {
    return a.W == b.W && a.b == b.b;
  }
};

// Summed (or averaged, after noising) gradient of a head over a batch.
// `count` is the number of examples that contributed.
struct GradientPacket {
  Matrix gW;
  std::vector<double> gb;
  std::size_t count = 0;

  GradientPacket() = default;
  GradientPacket(std::size_t k, std::size_t d) : gW(k, d), gb(k, 0.0) {}
};

// Euclidean norm of the packet viewed as one flattened vector (W and b
// jointly, matching the joint clipping convention).
double packet_norm(const GradientPacket& packet);

}  // namespace dpht

#endif  // DPHT_COMMON_HPP
