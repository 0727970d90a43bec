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
// Acceptance suite: one line per criterion, nonzero exit iff any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dpht/accountant.hpp"
#include "dpht/data_io.hpp"
#include "dpht/grad_engine.hpp"
#include "dpht/optim.hpp"
#include "dpht/trainer.hpp"
#include "oracles.hpp"

namespace {

using namespace dpht;
namespace fs = std::filesystem;

int failures = 0;

void report(int index, const std::string& name, bool ok, const std::string& detail,
            double seconds) {
  std::printf("[%s] %2d. %-38s %s (%.2fs)\n", ok ? "PASS" : "FAIL", index,
              name.c_str(), detail.c_str(), seconds);
  std::fflush(stdout);
  if (!ok) ++failures;
}

void run(int index, const std::string& name,
         const std::function<std::pair<bool, std::string>()>& body) {
  const auto start = std::chrono::steady_clock::now();
  bool ok = false;
  std::string detail;
  try {
    std::tie(ok, detail) = body();
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(index, name, ok, detail, seconds);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// 1. Log-space accountant vs extended-precision direct summation.
std::pair<bool, std::string> criterion_accountant_oracle() {
  std::vector<int> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(a);
  double worst = 0.0;
  for (const double q : {1e-4, 1e-2, 0.5, 1.0}) {
    for (const double sigma : {0.5, 1.0, 4.0}) {
      const privacy::RdpProfile profile = privacy::rdp_sampled_gaussian(q, sigma, orders);
      for (std::size_t i = 0; i < profile.size(); ++i) {
        const long double want = oracle::rdp_direct_sum(q, sigma, orders[i]);
        const long double got = profile.value(i);
        const long double denom = std::max<long double>(std::abs(want), 1e-300L);
        worst = std::max(worst, static_cast<double>(std::abs(got - want) / denom));
      }
    }
  }
  return {worst < 1e-8, "max rel err " + fmt(worst)};
}

// 2. Gaussian-mechanism closed form and calibration bracket.
std::pair<bool, std::string> criterion_gaussian_closed_form() {
  const auto orders = privacy::default_orders();
  const auto eps = privacy::rdp_to_eps(
      privacy::compose(privacy::rdp_sampled_gaussian(1.0, 1.0, orders), 1), 1e-6);
  const bool eps_ok = std::abs(eps.epsilon - 5.763) <= 1e-3;
  const double sigma = privacy::calibrate_sigma(10.0, 1e-6, 1.0, 1, orders);
  const bool sigma_ok = sigma >= 0.59 && sigma <= 0.63;
  return {eps_ok && sigma_ok,
          "epsilon " + fmt(eps.epsilon) + " (alpha=" + std::to_string(eps.best_order) +
              "), sigma " + fmt(sigma)};
}

// 3. Clip bound plus factorization equivalence on 10^4 random instances.
std::pair<bool, std::string> criterion_clipping_suite() {
  std::mt19937_64 engine(271828);
  double worst_rel = 0.0;
  double worst_bound = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto inst = oracle::random_instance(engine());
    const double clip =
        std::exp(std::log(0.05) +
                 (std::log(20.0) - std::log(0.05)) * (engine() % 10000) / 10000.0);
    const auto norms =
        grad::per_example_grad_norms(inst.head, inst.features, inst.n, inst.labels);
    for (double norm : norms) {
      const double scale = norm == 0.0 ? 1.0 : std::min(1.0, clip / norm);
      worst_bound = std::max(worst_bound, scale * norm - clip);
    }
    const auto fast = grad::clipped_gradient_sum(inst.head, inst.features, inst.n,
                                                 inst.labels, clip);
    const auto brute = oracle::brute_force_clipped_sum(inst.head, inst.features,
                                                       inst.n, inst.labels, clip);
    const auto rel = [&](double a, double b) {
      return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
    };
    for (std::size_t i = 0; i < fast.gW.size(); ++i) {
      worst_rel = std::max(worst_rel, rel(fast.gW.data()[i], brute.gW.data()[i]));
    }
    for (std::size_t c = 0; c < fast.gb.size(); ++c) {
      worst_rel = std::max(worst_rel, rel(fast.gb[c], brute.gb[c]));
    }
  }
  const bool ok = worst_bound <= 1e-9 && worst_rel < 1e-10;
  return {ok, "max bound excess " + fmt(worst_bound) + ", max rel diff " +
                  fmt(worst_rel)};
}

// 4. Analytic gradients vs central finite differences.
std::pair<bool, std::string> criterion_gradient_check() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto inst = oracle::random_instance(seed, 16, 8, 5);
    const auto analytic = grad::clipped_gradient_sum(inst.head, inst.features, inst.n,
                                                     inst.labels, 1e12);
    const auto fd = oracle::finite_diff_grad(inst.head, inst.features, inst.n,
                                             inst.labels, 1e-4);
    const auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
    };
    for (std::size_t i = 0; i < analytic.gW.size(); ++i) {
      worst = std::max(worst, rel(analytic.gW.data()[i], fd.gW.data()[i]));
    }
    for (std::size_t c = 0; c < analytic.gb.size(); ++c) {
      worst = std::max(worst, rel(analytic.gb[c], fd.gb[c]));
    }
  }
  return {worst <= 1e-5, "max rel err " + fmt(worst)};
}

// 5. LAMB equals Adam on the first step from zero weights.
std::pair<bool, std::string> criterion_lamb_adam() {
  GaussianSampler gauss(31337);
  const std::size_t k = 10, d = 64;
  LinearHead head(k, d);
  for (double& b : head.b) b = -10.0;
  GradientPacket g(k, d);
  g.count = 1;
  for (double& v : g.gW.data()) v = gauss.standard_normal();
  for (double& v : g.gb) v = gauss.standard_normal();

  const auto lamb = optim::dp_step(
      head, optim::OptimizerState::init(optim::OptimizerKind::kLamb, k, d), g, 0.01);
  const auto adam = optim::dp_step(
      head, optim::OptimizerState::init(optim::OptimizerKind::kAdam, k, d), g, 0.01);
  std::size_t ulp_mismatches = 0;
  for (std::size_t i = 0; i < lamb.head.W.size(); ++i) {
    if (std::memcmp(&lamb.head.W.data()[i], &adam.head.W.data()[i], sizeof(double)) !=
        0) {
      ++ulp_mismatches;
    }
  }
  return {ulp_mismatches == 0,
          std::to_string(ulp_mismatches) + " mismatched W entries of " +
              std::to_string(lamb.head.W.size())};
}

// 6. sigma = 0, C = 1e12 pipeline is bit-identical to the non-private run.
std::pair<bool, std::string> criterion_sigma_zero_degeneracy() {
  const auto dataset = data::gen_synthetic(2000, 16, 4, 4.0, 1.0, 1234);
  training::TrainConfig config;
  config.optimizer = optim::OptimizerKind::kMomentum;
  config.learning_rate = 0.2;
  config.batch_mode = data::BatchMode::kShuffle;
  config.batch_size = 200;
  config.steps = 100;
  config.clip_norm = 1e12;
  config.seed = 5150;

  training::TrainConfig dp = config;
  dp.privacy.enabled = true;
  dp.privacy.sigma_override = 0.0;

  const auto plain = training::train(config, dataset);
  const auto forced = training::train(dp, dataset);
  const bool heads_equal = plain.head == forced.head;
  const bool metrics_equal = training::metrics_to_jsonl(plain.metrics) ==
                             training::metrics_to_jsonl(forced.metrics);
  return {heads_equal && metrics_equal,
          std::string("heads ") + (heads_equal ? "equal" : "differ") + ", metrics " +
              (metrics_equal ? "equal" : "differ") + " over 100 steps"};
}

// 7. Zero-init argmax accuracy is learning-rate invariant in a single step.
std::pair<bool, std::string> criterion_lr_invariance() {
  const auto dataset = data::gen_synthetic(5000, 32, 10, 3.0, 1.0, 777);
  std::vector<double> accuracies;
  for (const double lr : {1e-4, 1e-3, 1e-2, 1e-1}) {
    training::TrainConfig config;
    config.optimizer = optim::OptimizerKind::kSgd;
    config.learning_rate = lr;
    config.single_step = true;
    config.clip_norm = 1.0;
    config.init = training::InitKind::kZero;
    config.seed = 88;
    accuracies.push_back(training::train(config, dataset).final_accuracy);
  }
  bool identical = true;
  for (double a : accuracies) identical &= a == accuracies.front();
  return {identical, "accuracy " + fmt(accuracies.front()) + " at all four rates"};
}

// 8. Initialization-scale ablation reproduces the qualitative trend.
std::pair<bool, std::string> criterion_init_trend() {
  const auto dataset = data::gen_synthetic(50000, 64, 10, 4.0, 1.0, 2026);
  training::TrainConfig base;
  base.optimizer = optim::OptimizerKind::kAdam;
  base.learning_rate = 5e-4;
  base.single_step = true;
  base.clip_norm = 1.0;
  base.privacy.enabled = true;
  base.privacy.epsilon = 1.0;
  base.privacy.delta = 1e-5;
  base.seed = 31;

  training::SweepGrid grid;
  grid.axes.push_back({"init_stddev", {"0", "1", "10"}});
  grid.repeats = 5;
  const auto results = training::run_sweep(grid, base, dataset, 2);
  for (const auto& row : results.rows) {
    if (!row.ok) return {false, row.run_id + " failed: " + row.error};
  }
  const double zero = results.cells[0].mean_accuracy;
  const double one = results.cells[1].mean_accuracy;
  const double ten = results.cells[2].mean_accuracy;
  const bool gap_ok = zero >= one + 0.20;
  const bool chance_ok = std::abs(ten - 0.1) <= 0.03;
  return {gap_ok && chance_ok, "mean accuracy zero-init " + fmt(zero) +
                                   ", stddev-1 " + fmt(one) + ", stddev-10 " +
                                   fmt(ten)};
}

// 9. Epsilon sweep: accuracy non-decreasing, calibrated sigma decreasing.
std::pair<bool, std::string> criterion_epsilon_sweep() {
  const auto dataset = data::gen_synthetic(2000, 32, 10, 3.0, 1.0, 4096);
  training::TrainConfig base;
  base.optimizer = optim::OptimizerKind::kAdam;
  base.learning_rate = 5e-4;
  base.single_step = true;
  base.clip_norm = 1.0;
  base.privacy.enabled = true;
  base.privacy.delta = 1e-5;
  base.seed = 64;

  training::SweepGrid grid;
  grid.axes.push_back({"epsilon", {"0.25", "0.5", "1", "2", "4", "8", "10"}});
  grid.repeats = 5;
  const auto results = training::run_sweep(grid, base, dataset, 2);
  for (const auto& row : results.rows) {
    if (!row.ok) return {false, row.run_id + " failed: " + row.error};
  }

  bool sigma_decreasing = true;
  std::vector<double> sigmas;
  std::vector<double> means;
  std::vector<double> stds;
  for (std::size_t cell = 0; cell < results.cells.size(); ++cell) {
    sigmas.push_back(results.rows[cell * grid.repeats].sigma);
    means.push_back(results.cells[cell].mean_accuracy);
    stds.push_back(results.cells[cell].stddev_accuracy);
  }
  for (std::size_t i = 1; i < sigmas.size(); ++i) {
    sigma_decreasing &= sigmas[i] < sigmas[i - 1];
  }

  int inversions = 0;
  bool inversion_within_band = true;
  for (std::size_t i = 1; i < means.size(); ++i) {
    if (means[i] < means[i - 1]) {
      ++inversions;
      const double band = std::max(stds[i], stds[i - 1]);
      inversion_within_band &= (means[i - 1] - means[i]) <= band;
    }
  }
  const bool trend_ok = inversions == 0 || (inversions == 1 && inversion_within_band);

  std::ostringstream detail;
  detail << "mean accuracy";
  for (double m : means) detail << ' ' << fmt(m);
  detail << "; sigma " << fmt(sigmas.front()) << " .. " << fmt(sigmas.back());
  detail << "; inversions " << inversions;
  return {sigma_decreasing && trend_ok, detail.str()};
}

// 10. Byte-identical CLI rerun.
std::pair<bool, std::string> criterion_cli_determinism() {
  const fs::path dir = fs::temp_directory_path() / "dpht_acceptance";
  fs::create_directories(dir);
  const fs::path cache = dir / "det.dpht";
  data::write_cache(data::gen_synthetic(1500, 12, 4, 4.0, 1.0, 99), cache.string());

  const auto run_once = [&](const fs::path& out) {
    const std::string cmd = std::string(DPHT_CLI_PATH) + " train --data " +
                            cache.string() + " --out-dir " + out.string() +
                            " --steps 20 --optimizer adam --learning-rate 0.01" +
                            " --batch-mode poisson --sampling-rate 0.2" +
                            " --epsilon 6 --delta 1e-6 --seed 12321" +
                            " > /dev/null 2>&1";
    return std::system(cmd.c_str());
  };
  const fs::path out_a = dir / "a";
  const fs::path out_b = dir / "b";
  if (run_once(out_a) != 0 || run_once(out_b) != 0) {
    return {false, "train command failed"};
  }
  const auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
  };
  const bool metrics_equal =
      slurp(out_a / "metrics.jsonl") == slurp(out_b / "metrics.jsonl");
  const bool heads_equal = slurp(out_a / "head.json") == slurp(out_b / "head.json");
  const bool summary_equal =
      slurp(out_a / "summary.csv") == slurp(out_b / "summary.csv");
  return {metrics_equal && heads_equal && summary_equal,
          std::string("metrics ") + (metrics_equal ? "identical" : "differ") +
              ", head " + (heads_equal ? "identical" : "differ") + ", summary " +
              (summary_equal ? "identical" : "differ")};
}

}  // namespace

int main() {
  run(1, "accountant vs extended-precision oracle", criterion_accountant_oracle);
  run(2, "Gaussian-mechanism closed form", criterion_gaussian_closed_form);
  run(3, "clipping invariant suite (10^4 runs)", criterion_clipping_suite);
  run(4, "finite-difference gradient check", criterion_gradient_check);
  run(5, "LAMB = Adam at step one from zero W", criterion_lamb_adam);
  run(6, "sigma=0 pipeline degeneracy", criterion_sigma_zero_degeneracy);
  run(7, "zero-init learning-rate invariance", criterion_lr_invariance);
  run(8, "init-scale ablation trend", criterion_init_trend);
  run(9, "epsilon sweep shape", criterion_epsilon_sweep);
  run(10, "byte-identical CLI rerun", criterion_cli_determinism);

  if (failures == 0) {
    std::printf("all acceptance criteria passed\n");
  } else {
    std::printf("%d acceptance criteria FAILED\n", failures);
  }
  return failures == 0 ? 0 : 1;
}
