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

#include "dpht/grad_engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace dpht {

double packet_norm(const GradientPacket& packet) {
  double sq = 0.0;
  for (double v : packet.gW.data()) sq += v * v;
  for (double v : packet.gb) sq += v * v;
  return std::sqrt(sq);
}

}  // namespace dpht

namespace dpht::grad {

namespace {

// Chunk width of the deterministic batch reduction. Fixed so that results
// do not depend on the worker count.
constexpr std::size_t kChunk = 1024;

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

void check_batch(const LinearHead& head, std::span<const float> features,
                 std::size_t n) {
  if (features.size() != n * head.dim()) {
    throw ShapeError("feature buffer size does not match n x d");
  }
}

void check_labels(const LinearHead& head, std::size_t n,
                  std::span<const std::int32_t> labels) {
  if (labels.size() != n) throw ShapeError("label count does not match batch size");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= head.classes()) {
      throw ValidationError("label out of range at batch row " + std::to_string(i));
    }
  }
}

// u = sigmoid(W f + b) - onehot(label) for one example.
void example_residual(const LinearHead& head, const float* f, std::int32_t label,
                      std::vector<double>& u) {
  const std::size_t k = head.classes();
  const std::size_t d = head.dim();
  for (std::size_t c = 0; c < k; ++c) {
    const double* w = head.W.row(c);
    double z = head.b[c];
    for (std::size_t j = 0; j < d; ++j) z += w[j] * static_cast<double>(f[j]);
    u[c] = sigmoid(z) - (static_cast<std::size_t>(label) == c ? 1.0 : 0.0);
  }
}

double squared_feature_norm(const float* f, std::size_t d) {
  double sq = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double v = static_cast<double>(f[j]);
    sq += v * v;
  }
  return sq;
}

// Clipped contribution of rows [begin, end) accumulated example-major.
void accumulate_chunk(const LinearHead& head, std::span<const float> features,
                      std::span<const std::int32_t> labels, double clip_norm,
                      std::size_t begin, std::size_t end, GradientPacket& out) {
  const std::size_t k = head.classes();
  const std::size_t d = head.dim();
  std::vector<double> u(k);
  for (std::size_t i = begin; i < end; ++i) {
    const float* f = features.data() + i * d;
    example_residual(head, f, labels[i], u);
    double usq = 0.0;
    for (double v : u) usq += v * v;
    const double norm = std::sqrt(usq * (squared_feature_norm(f, d) + 1.0));
    const double scale = norm == 0.0 ? 1.0 : std::min(1.0, clip_norm / norm);
    for (std::size_t c = 0; c < k; ++c) {
      const double su = scale * u[c];
      double* g = out.gW.row(c);
      for (std::size_t j = 0; j < d; ++j) g[j] += su * static_cast<double>(f[j]);
      out.gb[c] += su;
    }
  }
  out.count += end - begin;
}

}  // namespace

Matrix forward_logits(const LinearHead& head, std::span<const float> features,
                      std::size_t n) {
  check_batch(head, features, n);
  const std::size_t k = head.classes();
  const std::size_t d = head.dim();
  Matrix logits(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const float* f = features.data() + i * d;
    for (std::size_t c = 0; c < k; ++c) {
      const double* w = head.W.row(c);
      double z = head.b[c];
      for (std::size_t j = 0; j < d; ++j) z += w[j] * static_cast<double>(f[j]);
      logits(i, c) = z;
    }
  }
  return logits;
}

double sigmoid_ce_loss(const Matrix& logits, std::span<const std::int32_t> labels) {
  const std::size_t n = logits.rows();
  const std::size_t k = logits.cols();
  if (labels.size() != n) throw ShapeError("label count does not match logit rows");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw ValidationError("label out of range at batch row " + std::to_string(i));
    }
    double row = 0.0;
    for (std::size_t c = 0; c < k; ++c) row += softplus(logits(i, c));
    total += row - logits(i, static_cast<std::size_t>(labels[i]));
  }
  return total / static_cast<double>(n);
}

double sigmoid_ce_loss(const Matrix& logits, const Matrix& onehot_labels) {
  if (!logits.same_shape(onehot_labels)) {
    throw ShapeError("one-hot label matrix shape does not match logits");
  }
  std::vector<std::int32_t> labels(onehot_labels.rows());
  for (std::size_t i = 0; i < onehot_labels.rows(); ++i) {
    int hot = -1;
    for (std::size_t c = 0; c < onehot_labels.cols(); ++c) {
      const double v = onehot_labels(i, c);
      if (v == 1.0) {
        if (hot >= 0) throw ValidationError("label row " + std::to_string(i) +
                                            " has more than one hot entry");
        hot = static_cast<int>(c);
      } else if (v != 0.0) {
        throw ValidationError("label row " + std::to_string(i) + " is not one-hot");
      }
    }
    if (hot < 0) throw ValidationError("label row " + std::to_string(i) +
                                       " has no hot entry");
    labels[i] = hot;
  }
  return sigmoid_ce_loss(logits, labels);
}

std::vector<double> per_example_grad_norms(const LinearHead& head,
                                           std::span<const float> features,
                                           std::size_t n,
                                           std::span<const std::int32_t> labels) {
  check_batch(head, features, n);
  check_labels(head, n, labels);
  const std::size_t d = head.dim();
  std::vector<double> norms(n);
  std::vector<double> u(head.classes());
  for (std::size_t i = 0; i < n; ++i) {
    const float* f = features.data() + i * d;
    example_residual(head, f, labels[i], u);
    double usq = 0.0;
    for (double v : u) usq += v * v;
    norms[i] = std::sqrt(usq * (squared_feature_norm(f, d) + 1.0));
  }
  return norms;
}

GradientPacket clipped_gradient_sum(const LinearHead& head,
                                    std::span<const float> features, std::size_t n,
                                    std::span<const std::int32_t> labels,
                                    double clip_norm, unsigned workers) {
  if (!(clip_norm > 0.0)) throw std::domain_error("clip norm must be positive");
  check_batch(head, features, n);
  check_labels(head, n, labels);

  const std::size_t num_chunks = (n + kChunk - 1) / kChunk;
  std::vector<GradientPacket> partials(num_chunks,
                                       GradientPacket(head.classes(), head.dim()));
  const auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(begin + kChunk, n);
    accumulate_chunk(head, features, labels, clip_norm, begin, end, partials[c]);
  };

  if (workers <= 1 || num_chunks <= 1) {
    for (std::size_t c = 0; c < num_chunks; ++c) run_chunk(c);
  } else {
    const unsigned team = std::min<unsigned>(workers, num_chunks);
    std::vector<std::thread> threads;
    threads.reserve(team);
    for (unsigned w = 0; w < team; ++w) {
      threads.emplace_back([&, w] {
        for (std::size_t c = w; c < num_chunks; c += team) run_chunk(c);
      });
    }
    for (auto& t : threads) t.join();
  }

  // Combine partials in chunk index order.
  GradientPacket total(head.classes(), head.dim());
  for (const GradientPacket& p : partials) {
    for (std::size_t idx = 0; idx < total.gW.size(); ++idx) {
      total.gW.data()[idx] += p.gW.data()[idx];
    }
    for (std::size_t c = 0; c < total.gb.size(); ++c) total.gb[c] += p.gb[c];
    total.count += p.count;
  }
  return total;
}

GradientPacket noisy_gradient(const GradientPacket& packet, double sigma,
                              double clip_norm, GaussianSampler& rng) {
  if (packet.count == 0) throw std::domain_error("noisy_gradient: empty packet");
  if (sigma < 0.0) throw std::domain_error("noise multiplier must be nonnegative");
  GradientPacket out = packet;
  if (sigma > 0.0) {
    const double stddev = sigma * clip_norm;
    for (double& v : out.gW.data()) v += stddev * rng.standard_normal();
    for (double& v : out.gb) v += stddev * rng.standard_normal();
  }
  const double count = static_cast<double>(packet.count);
  for (double& v : out.gW.data()) v /= count;
  for (double& v : out.gb) v /= count;
  return out;
}

std::vector<GradientPacket> materialized_per_example_grads(
    const LinearHead& head, std::span<const float> features, std::size_t n,
    std::span<const std::int32_t> labels) {
  check_batch(head, features, n);
  check_labels(head, n, labels);
  const std::size_t k = head.classes();
  const std::size_t d = head.dim();
  std::vector<GradientPacket> grads;
  grads.reserve(n);
  std::vector<double> u(k);
  for (std::size_t i = 0; i < n; ++i) {
    const float* f = features.data() + i * d;
    example_residual(head, f, labels[i], u);
    GradientPacket g(k, d);
    for (std::size_t c = 0; c < k; ++c) {
      double* row = g.gW.row(c);
      for (std::size_t j = 0; j < d; ++j) row[j] = u[c] * static_cast<double>(f[j]);
      g.gb[c] = u[c];
    }
    g.count = 1;
    grads.push_back(std::move(g));
  }
  return grads;
}

}  // namespace dpht::grad
