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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dpht/data_io.hpp"
#include "dpht/trainer.hpp"

using namespace dpht;
using namespace dpht::training;

namespace {

data::FeatureDataset separable_set(std::uint64_t seed, std::size_t n = 2000) {
  // Wide margins: linear training crosses 99% quickly.
  return data::gen_synthetic(n, 16, 4, 6.0, 0.5, seed);
}

TrainConfig base_config() {
  TrainConfig config;
  config.optimizer = optim::OptimizerKind::kSgd;
  config.learning_rate = 0.5;
  config.batch_mode = data::BatchMode::kFull;
  config.steps = 100;
  config.clip_norm = 1e12;
  config.seed = 7;
  return config;
}

}  // namespace

TEST_CASE("zero init is exact") {
  const LinearHead head = init_head(8, 3, InitKind::kZero, 0.0, -10.0, 42);
  for (double w : head.W.data()) CHECK(w == 0.0);
  for (double b : head.b) CHECK(b == -10.0);
}

TEST_CASE("gaussian init with stddev 0 equals zero init") {
  const LinearHead zero = init_head(8, 3, InitKind::kZero, 0.0, -10.0, 42);
  const LinearHead gauss = init_head(8, 3, InitKind::kGaussian, 0.0, -10.0, 42);
  CHECK(zero == gauss);
}

TEST_CASE("gaussian init matches its target stddev") {
  const LinearHead head = init_head(100, 100, InitKind::kGaussian, 0.05, 0.0, 9);
  double sum = 0.0, sq = 0.0;
  for (double w : head.W.data()) {
    sum += w;
    sq += w * w;
  }
  const double n = static_cast<double>(head.W.size());
  const double stddev = std::sqrt(sq / n - (sum / n) * (sum / n));
  CHECK(std::abs(stddev - 0.05) < 0.05 * 0.05);
}

TEST_CASE("all-tied logits evaluate to the class-0 frequency") {
  const data::FeatureDataset dataset = separable_set(1, 403);
  LinearHead head(dataset.k, dataset.d);
  for (double& b : head.b) b = -10.0;
  std::size_t zeros = 0;
  for (auto label : dataset.labels) zeros += label == 0;
  CHECK(evaluate(head, dataset) ==
        doctest::Approx(static_cast<double>(zeros) / dataset.n));
}

TEST_CASE("centroid head is perfect on noise-free data") {
  const data::FeatureDataset dataset = data::gen_synthetic(60, 12, 4, 3.0, 0.0, 3);
  LinearHead head(dataset.k, dataset.d);
  for (std::size_t c = 0; c < dataset.k; ++c) {
    const float* mean = dataset.row(c);  // labels are round-robin
    for (std::size_t j = 0; j < dataset.d; ++j) head.W(c, j) = mean[j];
  }
  CHECK(evaluate(head, dataset) == 1.0);
}

TEST_CASE("hand-built three-example evaluation") {
  data::FeatureDataset dataset;
  dataset.n = 3;
  dataset.d = 2;
  dataset.k = 2;
  dataset.features = {1.0f, 0.0f, 0.0f, 1.0f, 1.0f, 1.0f};
  dataset.labels = {0, 1, 1};
  LinearHead head(2, 2);
  head.W(0, 0) = 1.0;  // logit_0 = x_0
  head.W(1, 1) = 1.0;  // logit_1 = x_1
  // Example 1: (1,0) -> argmax 0, correct. Example 2: (0,1) -> argmax 1,
  // correct. Example 3: (1,1) -> tie, breaks to class 0, incorrect.
  CHECK(evaluate(head, dataset) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("non-private full-batch training separates the blobs") {
  const data::FeatureDataset dataset = separable_set(5);
  TrainConfig config = base_config();
  const TrainResult result = train(config, dataset);
  CHECK(result.executed_steps == 100);
  CHECK(result.metrics.size() == 100);
  CHECK(result.final_accuracy >= 0.99);
  CHECK_FALSE(result.aborted);
  CHECK(std::isinf(result.report.epsilon));
}

TEST_CASE("sigma forced to zero reproduces the non-private trajectory bit-exactly") {
  const data::FeatureDataset dataset = separable_set(6);

  TrainConfig off = base_config();
  off.clip_norm = 1.0;  // clipping active in both runs
  TrainConfig forced = off;
  forced.privacy.enabled = true;
  forced.privacy.sigma_override = 0.0;

  const TrainResult a = train(off, dataset);
  const TrainResult b = train(forced, dataset);
  CHECK(a.head == b.head);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].train_loss == b.metrics[i].train_loss);
    CHECK(a.metrics[i].grad_norm == b.metrics[i].grad_norm);
  }
}

TEST_CASE("single-step mode coerces to one full-batch update") {
  const data::FeatureDataset dataset = separable_set(8, 300);
  TrainConfig config = base_config();
  config.single_step = true;
  config.steps = 50;                             // overridden by single_step
  config.batch_mode = data::BatchMode::kShuffle; // also overridden
  config.batch_size = 32;
  config.privacy.enabled = true;
  config.privacy.epsilon = 10.0;
  config.privacy.delta = 1e-6;

  const TrainResult result = train(config, dataset);
  CHECK(result.executed_steps == 1);
  CHECK(result.metrics.size() == 1);
  CHECK(result.resolved.batch_mode == data::BatchMode::kFull);
  CHECK(result.report.steps == 1);
  CHECK(result.report.sampling_rate == 1.0);
  CHECK(result.report.epsilon <= 10.0);
  // Warn: delta 1e-6 is not below 1/n for n = 300.
  bool warned = false;
  for (const auto& w : result.warnings) warned |= w.find("1/n") != std::string::npos;
  CHECK_FALSE(warned);  // 1e-6 < 1/300
}

TEST_CASE("privacy report mirrors the executed run") {
  const data::FeatureDataset dataset = separable_set(9, 512);
  TrainConfig config = base_config();
  config.steps = 0;
  config.epochs = 3;
  config.batch_mode = data::BatchMode::kShuffle;
  config.batch_size = 128;
  config.clip_norm = 1.0;
  config.privacy.enabled = true;
  config.privacy.epsilon = 8.0;
  config.privacy.delta = 1e-5;

  const TrainResult result = train(config, dataset);
  CHECK(result.executed_steps == 3 * 4);  // ceil(512/128) = 4 steps per epoch
  CHECK(result.report.steps == result.executed_steps);
  CHECK(result.report.sampling_rate == doctest::Approx(128.0 / 512.0));
  CHECK(result.report.epsilon <= 8.0);
  CHECK(result.report.sigma > 0.0);

  bool poisson_warning = false;
  for (const auto& w : result.warnings) {
    poisson_warning |= w.find("Poisson") != std::string::npos;
  }
  CHECK(poisson_warning);

  // delta above 1/n draws a warning.
  TrainConfig loose = config;
  loose.privacy.delta = 0.5;
  const TrainResult loose_run = train(loose, dataset);
  bool delta_warning = false;
  for (const auto& w : loose_run.warnings) {
    delta_warning |= w.find("1/n") != std::string::npos;
  }
  CHECK(delta_warning);
}

TEST_CASE("metrics serialization is deterministic and excludes wall time") {
  const data::FeatureDataset dataset = separable_set(10, 400);
  TrainConfig config = base_config();
  config.batch_mode = data::BatchMode::kShuffle;
  config.batch_size = 100;  // 4 steps per epoch: most rows carry no accuracy
  config.steps = 5;
  const TrainResult a = train(config, dataset);
  const TrainResult b = train(config, dataset);
  const std::string ja = metrics_to_jsonl(a.metrics);
  const std::string jb = metrics_to_jsonl(b.metrics);
  CHECK(ja == jb);
  CHECK(ja.find("wall") == std::string::npos);
  CHECK(ja.find("\"step\":0") != std::string::npos);
  CHECK(ja.find("\"accuracy\":null") != std::string::npos);
}

TEST_CASE("worker count does not change the trajectory") {
  const data::FeatureDataset dataset =
      data::gen_synthetic(3000, 8, 3, 4.0, 1.0, 11);
  TrainConfig config = base_config();
  config.steps = 10;
  config.workers = 1;
  const TrainResult one = train(config, dataset);
  config.workers = 4;
  const TrainResult four = train(config, dataset);
  CHECK(one.head == four.head);
  CHECK(metrics_to_jsonl(one.metrics) == metrics_to_jsonl(four.metrics));
}

TEST_CASE("poisson epochs derive the planned step count") {
  const data::FeatureDataset dataset = separable_set(12, 1000);
  TrainConfig config = base_config();
  config.steps = 0;
  config.epochs = 2;
  config.batch_mode = data::BatchMode::kPoisson;
  config.sampling_rate = 0.25;
  const TrainResult result = train(config, dataset);
  CHECK(result.executed_steps == 8);  // 2 epochs x round(1/0.25)
}

TEST_CASE("divergence aborts with a diagnostic row instead of clamping") {
  const data::FeatureDataset dataset = separable_set(13, 300);
  TrainConfig config = base_config();
  config.learning_rate = 1e308;  // guarantees overflow after one update
  config.steps = 5;
  const TrainResult result = train(config, dataset);
  CHECK(result.aborted);
  CHECK(result.executed_steps < 5);
  REQUIRE(!result.metrics.empty());
  CHECK(result.metrics.back().event == "nan_abort");
  CHECK(result.abort_reason.find("non-finite") != std::string::npos);
}

TEST_CASE("zero-init argmax accuracy ignores the learning-rate scale") {
  const data::FeatureDataset dataset =
      data::gen_synthetic(2000, 16, 4, 3.0, 1.0, 14);
  double reference = -1.0;
  for (const double lr : {1e-4, 1e-3, 1e-2, 1e-1}) {
    TrainConfig config = base_config();
    config.single_step = true;
    config.learning_rate = lr;
    config.clip_norm = 1.0;
    config.init = InitKind::kZero;
    const TrainResult result = train(config, dataset);
    if (reference < 0.0) {
      reference = result.final_accuracy;
    } else {
      CHECK(result.final_accuracy == reference);
    }
  }
}

TEST_CASE("calibration failures propagate out of train") {
  const data::FeatureDataset dataset = separable_set(22, 300);
  TrainConfig config = base_config();
  config.steps = 10000;
  config.clip_norm = 1.0;
  config.privacy.enabled = true;
  config.privacy.epsilon = 1e-6;  // unattainable even at sigma = 100
  config.privacy.delta = 1e-6;
  CHECK_THROWS_AS(train(config, dataset), BracketError);
}

TEST_CASE("sweep produces one row per cell and repeat") {
  const data::FeatureDataset dataset = separable_set(15, 400);
  TrainConfig config = base_config();
  config.steps = 3;

  SweepGrid grid;
  grid.axes.push_back({"learning_rate", {"0.01", "0.1", "1"}});
  grid.repeats = 1;
  const SweepResults results = run_sweep(grid, config, dataset);
  CHECK(results.rows.size() == 3);
  CHECK(results.cells.size() == 3);
  for (const auto& row : results.rows) CHECK(row.ok);

  // Deterministic ordering and ids.
  CHECK(results.rows[0].run_id == "run_00000");
  CHECK(results.rows[0].axis_values[0] == "0.01");
  CHECK(results.rows[2].axis_values[0] == "1");
}

TEST_CASE("epsilon axis calibrates strictly decreasing sigmas") {
  const data::FeatureDataset dataset = separable_set(16, 600);
  TrainConfig config = base_config();
  config.single_step = true;
  config.clip_norm = 1.0;
  config.privacy.enabled = true;
  config.privacy.delta = 1e-6;

  SweepGrid grid;
  grid.axes.push_back({"epsilon", {"0.25", "0.5", "1", "2", "4", "8", "10"}});
  grid.repeats = 1;
  const SweepResults results = run_sweep(grid, config, dataset);
  REQUIRE(results.rows.size() == 7);
  for (std::size_t i = 1; i < results.rows.size(); ++i) {
    CHECK(results.rows[i].ok);
    CHECK(results.rows[i].sigma < results.rows[i - 1].sigma);
    CHECK(results.rows[i].epsilon_achieved <=
          std::stod(results.rows[i].axis_values[0]));
  }
}

TEST_CASE("failed cells are recorded and the sweep continues") {
  const data::FeatureDataset dataset = separable_set(17, 300);
  TrainConfig config = base_config();
  config.steps = 2;

  SweepGrid grid;
  grid.axes.push_back({"clip_norm", {"-1", "1"}});
  grid.repeats = 1;
  const SweepResults results = run_sweep(grid, config, dataset);
  REQUIRE(results.rows.size() == 2);
  CHECK_FALSE(results.rows[0].ok);
  CHECK(!results.rows[0].error.empty());
  CHECK(results.rows[1].ok);
  CHECK(results.cells[0].runs_ok == 0);
  CHECK(results.cells[1].runs_ok == 1);
}

TEST_CASE("parallel sweep equals the sequential sweep") {
  const data::FeatureDataset dataset = separable_set(18, 400);
  TrainConfig config = base_config();
  config.steps = 3;

  SweepGrid grid;
  grid.axes.push_back({"learning_rate", {"0.01", "0.1"}});
  grid.axes.push_back({"clip_norm", {"0.5", "5", "50"}});
  grid.repeats = 2;
  const SweepResults seq = run_sweep(grid, config, dataset, 1);
  const SweepResults par = run_sweep(grid, config, dataset, 4);
  REQUIRE(seq.rows.size() == 12);
  REQUIRE(par.rows.size() == 12);
  for (std::size_t i = 0; i < seq.rows.size(); ++i) {
    CHECK(seq.rows[i].run_id == par.rows[i].run_id);
    CHECK(seq.rows[i].final_accuracy == par.rows[i].final_accuracy);
    CHECK(seq.rows[i].seed == par.rows[i].seed);
  }
  CHECK(sweep_rows_csv(seq) == sweep_rows_csv(par));
  CHECK(sweep_cells_csv(seq) == sweep_cells_csv(par));
}

TEST_CASE("sweep rejects empty grids") {
  const data::FeatureDataset dataset = separable_set(19, 300);
  SweepGrid empty;
  CHECK_THROWS_AS(run_sweep(empty, base_config(), dataset), ConfigError);
}

TEST_CASE("repeat seeds differ within a cell") {
  const data::FeatureDataset dataset = separable_set(20, 300);
  TrainConfig config = base_config();
  config.steps = 1;
  SweepGrid grid;
  grid.axes.push_back({"learning_rate", {"0.1"}});
  grid.repeats = 3;
  const SweepResults results = run_sweep(grid, config, dataset);
  REQUIRE(results.rows.size() == 3);
  CHECK(results.rows[0].seed != results.rows[1].seed);
  CHECK(results.rows[1].seed != results.rows[2].seed);
}
