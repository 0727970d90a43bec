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

#ifndef DPHT_GRAD_ENGINE_HPP
#define DPHT_GRAD_ENGINE_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "dpht/common.hpp"
#include "dpht/rng.hpp"

namespace dpht::grad {

// All operations take a batch as row-major 32-bit features (n x d, matching
// the cache storage format) plus integer class labels, and accumulate in
// 64-bit: 32-bit sums over large batches lose digits.
//
// Per-example gradients of the sigmoid cross-entropy linear head factor as
// rank-1 outer products (u_i f_i^T, u_i) with u_i = sigmoid(z_i) - y_i, so
// per-example norms and the clipped sum never materialize k x d matrices
// per example.

// Logits z_i = W f_i + b for every row of the batch; returns n x k.
Matrix forward_logits(const LinearHead& head, std::span<const float> features,
                      std::size_t n);

// Mean sigmoid cross-entropy over the batch:
//   loss_i = sum_j softplus(z_ij) - z_{i,y_i},
// with softplus(z) = max(z, 0) + log1p(exp(-|z|)).
double sigmoid_ce_loss(const Matrix& logits, std::span<const std::int32_t> labels);

// One-hot variant. Every row must contain exactly one 1.0 and zeros
// elsewhere; anything else raises ValidationError.
double sigmoid_ce_loss(const Matrix& logits, const Matrix& onehot_labels);

// ||g_i||_2 = ||u_i||_2 * sqrt(||f_i||_2^2 + 1) per example.
std::vector<double> per_example_grad_norms(const LinearHead& head,
                                           std::span<const float> features,
                                           std::size_t n,
                                           std::span<const std::int32_t> labels);

// Sum of per-example gradients clipped to norm C:
//   sum_i s_i (u_i f_i^T, u_i),  s_i = min(1, C / ||g_i||),  s_i = 1 if ||g_i|| = 0.
//
// The batch is processed in fixed chunks whose partial packets are combined
// in chunk index order, so the result is bit-identical for any `workers`
// count. Throws std::domain_error when C <= 0.
GradientPacket clipped_gradient_sum(const LinearHead& head,
                                    std::span<const float> features, std::size_t n,
                                    std::span<const std::int32_t> labels,
                                    double clip_norm, unsigned workers = 1);

// (packet + N(0, (sigma*C)^2) per coordinate) / count. Noise is drawn from
// `rng` in a fixed order (gW row-major, then gb), so a fixed seed gives
// bit-identical output. sigma == 0 adds nothing and draws nothing.
// Throws std::domain_error when count == 0 or sigma < 0.
GradientPacket noisy_gradient(const GradientPacket& packet, double sigma,
                              double clip_norm, GaussianSampler& rng);

// Brute-force per-example gradients by explicit outer products. This is the
// reference oracle the test suite checks the factorized path against; it is
// exported so external audits can reuse it. Each returned packet has
// count == 1.
std::vector<GradientPacket> materialized_per_example_grads(
    const LinearHead& head, std::span<const float> features, std::size_t n,
    std::span<const std::int32_t> labels);

}  // namespace dpht::grad

#endif  // DPHT_GRAD_ENGINE_HPP
