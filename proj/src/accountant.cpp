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

#include "dpht/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "dpht/common.hpp"

namespace dpht::privacy {

namespace {

// log C(n, k) via the log-gamma function. Raw binomials overflow well
// before alpha = 512, so all series terms stay in log space.
double log_binom(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double log_sum_exp(const std::vector<double>& log_terms) {
  const double max_term = *std::max_element(log_terms.begin(), log_terms.end());
  if (!std::isfinite(max_term)) return max_term;
  double sum = 0.0;
  for (double t : log_terms) sum += std::exp(t - max_term);
  return max_term + std::log(sum);
}

// log(exp(x) - 1) without overflow or low-x cancellation.
double log_expm1(double x) {
  if (x > 30.0) return x + std::log1p(-std::exp(-x));
  return std::log(std::expm1(x));
}

// Per-step RDP of the subsampled Gaussian at one integer order.
//
// The k = 0 and k = 1 series terms carry exp(0) = 1 and the binomial
// weights sum to 1, so the series equals
//   1 + sum_{k>=2} C(alpha,k)(1-q)^(alpha-k) q^k expm1(k(k-1)/(2 sigma^2)).
// Evaluating the excess over 1 in log space and finishing with log1p keeps
// tiny RDP values (small q) relatively accurate, where log(sum) alone
// would lose all significant digits.
double rdp_order(double q, double sigma, int alpha) {
  if (q == 1.0) {
    return alpha / (2.0 * sigma * sigma);
  }
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double inv_2s2 = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> log_terms(alpha - 1);
  for (int k = 2; k <= alpha; ++k) {
    log_terms[k - 2] = log_binom(alpha, k) + (alpha - k) * log_1mq + k * log_q +
                       log_expm1(k * (k - 1.0) * inv_2s2);
  }
  const double log_excess = log_sum_exp(log_terms);
  const double log_sum = log_excess > 30.0
                             ? log_excess + std::log1p(std::exp(-log_excess))
                             : std::log1p(std::exp(log_excess));
  return log_sum / (alpha - 1.0);
}

}  // namespace

RdpProfile::RdpProfile(std::vector<int> orders, std::vector<double> step_values,
                       std::int64_t steps)
    : orders_(std::move(orders)), step_values_(std::move(step_values)), steps_(steps) {
  if (orders_.size() != step_values_.size()) {
    throw std::invalid_argument("RdpProfile: orders/values length mismatch");
  }
  if (steps_ < 1) throw std::domain_error("RdpProfile: steps must be >= 1");
}

std::vector<double> RdpProfile::values() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = value(i);
  return out;
}

std::vector<int> default_orders() {
  std::vector<int> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  orders.push_back(128);
  orders.push_back(256);
  orders.push_back(512);
  return orders;
}

RdpProfile rdp_sampled_gaussian(double q, double sigma,
                                const std::vector<int>& orders) {
  if (!(q > 0.0) || q > 1.0) {
    throw std::domain_error("sampling rate q must be in (0, 1]");
  }
  if (!(sigma > 0.0)) {
    throw std::domain_error("noise multiplier sigma must be positive");
  }
  if (orders.empty()) {
    throw std::domain_error("order list must be nonempty");
  }
  std::vector<double> values(orders.size());
  for (std::size_t i = 0; i < orders.size(); ++i) {
    if (orders[i] < 2) throw std::domain_error("Renyi orders must be integers >= 2");
    values[i] = rdp_order(q, sigma, orders[i]);
  }
  return RdpProfile(orders, std::move(values), 1);
}

RdpProfile compose(const RdpProfile& profile, std::int64_t steps) {
  if (steps < 1) throw std::domain_error("composition steps must be >= 1");
  RdpProfile out = profile;
  out.steps_ *= steps;
  return out;
}

RdpProfile operator+(const RdpProfile& a, const RdpProfile& b) {
  if (a.orders_ != b.orders_) {
    throw std::invalid_argument("profile sum requires identical order grids");
  }
  // Same per-step curve: adding compositions of one mechanism. Folding the
  // step counts keeps compose(p, x + y) == compose(p, x) + compose(p, y)
  // exact, not just up to rounding.
  if (a.step_values_ == b.step_values_) {
    RdpProfile out = a;
    out.steps_ += b.steps_;
    return out;
  }
  std::vector<double> summed(a.size());
  for (std::size_t i = 0; i < summed.size(); ++i) summed[i] = a.value(i) + b.value(i);
  return RdpProfile(a.orders_, std::move(summed), 1);
}

EpsilonResult rdp_to_eps(const RdpProfile& profile, double delta) {
  if (profile.empty()) throw std::domain_error("rdp_to_eps: empty profile");
  if (!(delta > 0.0) || delta >= 1.0) {
    throw std::domain_error("delta must be in (0, 1)");
  }
  const double log_inv_delta = -std::log(delta);
  EpsilonResult best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i < profile.size(); ++i) {
    const int alpha = profile.orders()[i];
    const double eps = profile.value(i) + log_inv_delta / (alpha - 1.0);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.best_order = alpha;
    }
  }
  return best;
}

double calibrate_sigma(double eps_target, double delta, double q,
                       std::int64_t steps, const std::vector<int>& orders) {
  if (!(eps_target > 0.0)) throw std::domain_error("epsilon target must be positive");
  if (!(delta > 0.0) || delta >= 1.0) throw std::domain_error("delta must be in (0, 1)");

  constexpr double kSigmaLo = 1e-2;
  constexpr double kSigmaHi = 1e2;
  constexpr double kRelTol = 1e-4;

  const auto achieved = [&](double sigma) {
    return rdp_to_eps(compose(rdp_sampled_gaussian(q, sigma, orders), steps), delta)
        .epsilon;
  };

  if (achieved(kSigmaHi) > eps_target) {
    throw BracketError(
        "epsilon target unattainable: achieved epsilon still exceeds the target "
        "at the upper bracket endpoint sigma = 100",
        kSigmaHi);
  }
  if (achieved(kSigmaLo) <= eps_target) {
    throw BracketError(
        "epsilon target already met at the lower bracket endpoint sigma = 0.01; "
        "a near-tight sigma lies outside the bracket",
        kSigmaLo);
  }

  // Invariant: achieved(lo) > target >= achieved(hi). Bisect on log sigma.
  double log_lo = std::log(kSigmaLo);
  double log_hi = std::log(kSigmaHi);
  while (log_hi - log_lo > kRelTol) {
    const double log_mid = 0.5 * (log_lo + log_hi);
    if (achieved(std::exp(log_mid)) > eps_target) {
      log_lo = log_mid;
    } else {
      log_hi = log_mid;
    }
  }
  return std::exp(log_hi);
}

PrivacyReport privacy_report(const PrivacySpec& spec) {
  return privacy_report(spec, default_orders());
}

PrivacyReport privacy_report(const PrivacySpec& spec,
                             const std::vector<int>& orders) {
  if (!spec.sigma_resolved()) {
    throw std::logic_error("privacy_report: noise multiplier is unresolved");
  }
  const RdpProfile profile =
      compose(rdp_sampled_gaussian(spec.sampling_rate, spec.sigma, orders), spec.steps);
  const EpsilonResult eps = rdp_to_eps(profile, spec.delta);

  PrivacyReport report;
  report.epsilon = eps.epsilon;
  report.delta = spec.delta;
  report.sigma = spec.sigma;
  report.clip_norm = spec.clip_norm;
  report.sampling_rate = spec.sampling_rate;
  report.steps = spec.steps;
  report.best_order = eps.best_order;
  report.orders = profile.orders();
  report.rdp_values = profile.values();
  report.note =
      "accounting assumes Poisson subsampling at rate q; fixed-size batches "
      "drawn without replacement are accounted as Poisson with q = B/n";
  return report;
}

std::string report_to_json(const PrivacyReport& report) {
  nlohmann::ordered_json doc;
  if (std::isfinite(report.epsilon)) {
    doc["epsilon"] = report.epsilon;
  } else {
    doc["epsilon"] = nullptr;
  }
  doc["delta"] = report.delta;
  doc["sigma"] = report.sigma;
  doc["clip_norm"] = report.clip_norm;
  doc["sampling_rate"] = report.sampling_rate;
  doc["steps"] = report.steps;
  doc["best_order"] = report.best_order;
  auto rdp = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < report.orders.size(); ++i) {
    rdp.push_back({report.orders[i], report.rdp_values[i]});
  }
  doc["rdp"] = std::move(rdp);
  doc["note"] = report.note;
  return doc.dump(2);
}

}  // namespace dpht::privacy
