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

#ifndef DPHT_ACCOUNTANT_HPP
#define DPHT_ACCOUNTANT_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace dpht::privacy {

// Target budget and mechanism parameters for one training run.
// `sigma` is the noise multiplier in units of the clip norm; it starts
// unresolved (<= 0) and is filled in by calibrate_sigma.
struct PrivacySpec {
  double epsilon = 0.0;
  double delta = 0.0;
  double clip_norm = 1.0;
  double sampling_rate = 1.0;
  std::int64_t steps = 1;
  double sigma = 0.0;

  bool sigma_resolved() const { return sigma > 0.0; }
};

// Accumulated Renyi-DP curve: epsilon_RDP(alpha) at each integer order.
//
// The profile is stored in factored form, as the per-step RDP values of the
// underlying mechanism together with the number of composed steps. The
// materialized value at order i is step_value[i] * steps, computed with a
// single rounding, which keeps T-fold composition exactly additive:
// compose(p, a + b) and compose(p, a) + compose(p, b) produce bit-identical
// values whenever both sides come from the same profile.
class RdpProfile {
 public:
  RdpProfile() = default;
  RdpProfile(std::vector<int> orders, std::vector<double> step_values,
             std::int64_t steps = 1);

  const std::vector<int>& orders() const { return orders_; }
  std::int64_t steps() const { return steps_; }
  std::size_t size() const { return orders_.size(); }
  bool empty() const { return orders_.empty(); }

  // Accumulated RDP value at order index i.
  double value(std::size_t i) const {
    return step_values_[i] * static_cast<double>(steps_);
  }
  std::vector<double> values() const;
  const std::vector<double>& step_values() const { return step_values_; }

  friend RdpProfile compose(const RdpProfile& profile, std::int64_t steps);
  friend RdpProfile operator+(const RdpProfile& a, const RdpProfile& b);

 private:
  std::vector<int> orders_;
  std::vector<double> step_values_;
  std::int64_t steps_ = 1;
};

// Default order grid: {2, ..., 64} plus {128, 256, 512}.
std::vector<int> default_orders();

// One step of the Poisson-subsampled Gaussian mechanism at integer orders.
//
// For q < 1 each order alpha is evaluated as
//   (1/(alpha-1)) * log sum_{k=0..alpha} C(alpha,k) (1-q)^(alpha-k) q^k
//                                        * exp(k(k-1)/(2 sigma^2)),
// entirely in log space (log-binomials from lgamma, log-sum-exp over the
// terms, with the excess over the k <= 1 unit mass folded through log1p so
// small-q values keep full relative accuracy). q == 1 reduces to the plain
// Gaussian mechanism, alpha/(2 sigma^2).
//
// Preconditions: 0 < q <= 1, sigma > 0, all orders integers >= 2.
// Throws std::domain_error on violated parameter ranges.
RdpProfile rdp_sampled_gaussian(double q, double sigma,
                                const std::vector<int>& orders);

// T-fold self-composition: every value multiplied by `steps`.
RdpProfile compose(const RdpProfile& profile, std::int64_t steps);

// Elementwise sum of two profiles over identical order grids.
RdpProfile operator+(const RdpProfile& a, const RdpProfile& b);

struct EpsilonResult {
  double epsilon = 0.0;
  int best_order = 0;
};

// Converts an RDP curve to (epsilon, delta):
//   epsilon = min_alpha [ eps_RDP(alpha) + log(1/delta) / (alpha - 1) ].
// Ties break toward the smallest order. Throws std::domain_error on an
// empty profile or delta outside (0, 1).
EpsilonResult rdp_to_eps(const RdpProfile& profile, double delta);

// Smallest noise multiplier (up to 1e-4 relative) whose achieved epsilon at
// the given delta does not exceed eps_target, found by bisection on log
// sigma over [1e-2, 1e2]. Returns the conservative (larger-sigma) bracket
// endpoint. Throws BracketError naming the violated endpoint when the
// target cannot be bracketed.
double calibrate_sigma(double eps_target, double delta, double q,
                       std::int64_t steps, const std::vector<int>& orders);

// Achieved guarantee of a resolved spec plus the per-order table behind it.
struct PrivacyReport {
  double epsilon = 0.0;
  double delta = 0.0;
  double sigma = 0.0;
  double clip_norm = 0.0;
  double sampling_rate = 0.0;
  std::int64_t steps = 0;
  int best_order = 0;
  std::vector<int> orders;
  std::vector<double> rdp_values;
  std::string note;
};

// Evaluates the achieved epsilon of `spec` at its delta over the default
// order grid. Throws std::logic_error if sigma is still unresolved.
PrivacyReport privacy_report(const PrivacySpec& spec);
PrivacyReport privacy_report(const PrivacySpec& spec,
                             const std::vector<int>& orders);

// Report serialization:
// {epsilon, delta, sigma, clip_norm, sampling_rate, steps, best_order,
//  rdp: [[alpha, value]...], note}. Non-finite epsilon serializes as null.
std::string report_to_json(const PrivacyReport& report);

}  // namespace dpht::privacy

#endif  // DPHT_ACCOUNTANT_HPP
