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

#ifndef DPHT_TRAINER_HPP
#define DPHT_TRAINER_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dpht/accountant.hpp"
#include "dpht/common.hpp"
#include "dpht/data_io.hpp"
#include "dpht/grad_engine.hpp"
#include "dpht/optim.hpp"

namespace dpht::training {

enum class InitKind { kZero, kGaussian };

InitKind init_from_name(const std::string& name);
std::string init_name(InitKind kind);

struct PrivacyConfig {
  bool enabled = false;
  double epsilon = 10.0;
  double delta = 1e-6;
  // When set, skips calibration and uses this noise multiplier directly
  // (0 means clip-only, no noise, no guarantee).
  std::optional<double> sigma_override;
};

struct TrainConfig {
  optim::OptimizerKind optimizer = optim::OptimizerKind::kSgd;
  double learning_rate = 0.1;
  optim::Hyperparams hyper;
  optim::ScheduleKind schedule = optim::ScheduleKind::kConstant;
  std::int64_t warmup_steps = 0;
  std::int64_t epochs = 1;
  std::int64_t steps = 0;  // 0: derive from epochs and the batch selector
  bool single_step = false;
  data::BatchMode batch_mode = data::BatchMode::kFull;
  double sampling_rate = 0.1;   // poisson mode
  std::size_t batch_size = 0;   // shuffle mode
  PrivacyConfig privacy;
  InitKind init = InitKind::kZero;
  double init_stddev = 0.0;
  double bias_init = -10.0;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
  unsigned workers = 1;  // gradient-chunk workers; does not affect results
};

struct MetricsRow {
  std::int64_t step = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double grad_norm = 0.0;          // pre-noise norm of the clipped sum
  double clipped_fraction = 0.0;   // examples with ||g_i|| > C
  std::optional<double> accuracy;  // top-1, present on eval steps
  double wall_time_ms = 0.0;
  std::string event;  // "", "empty_batch" or "nan_abort"
};

struct TrainResult {
  LinearHead head;
  std::vector<MetricsRow> metrics;
  privacy::PrivacyReport report;
  std::int64_t executed_steps = 0;
  double final_accuracy = 0.0;
  std::vector<std::string> warnings;
  TrainConfig resolved;  // config after coercions (single_step etc.)
  // Non-finite loss aborts the run instead of clamping: the diagnostic row
  // is the last metrics entry and `aborted` is set, so callers can still
  // persist the partial metrics before failing.
  bool aborted = false;
  std::string abort_reason;
};

// Head initialization: zero mode sets W = 0 exactly; gaussian mode draws
// W ~ N(0, stddev^2) i.i.d. (stddev 0 degenerates to zero mode). Biases are
// bias_init everywhere.
LinearHead init_head(std::size_t d, std::size_t k, InitKind init,
                     double init_stddev, double bias_init, std::uint64_t seed);

// Fraction of examples whose argmax logit matches the label; argmax ties
// break toward the smallest class index.
double evaluate(const LinearHead& head, const data::FeatureDataset& dataset);

// Full DP finetuning loop: resolve sigma against the planned step count,
// initialize the head, then per step select batch -> clip -> noise ->
// optimizer update, with one metrics row per step. Evaluation runs once per
// epoch and at the final step, against eval_data when given, else the
// training set.
TrainResult train(const TrainConfig& config, const data::FeatureDataset& dataset,
                  const data::FeatureDataset* eval_data = nullptr);

// Metrics rows as JSON lines. Wall-clock time is deliberately not
// serialized: rerunning a seeded command must produce byte-identical
// metrics output.
std::string metrics_to_jsonl(const std::vector<MetricsRow>& rows);

// --- hyperparameter sweeps ---

struct SweepAxis {
  std::string name;  // learning_rate | init_stddev | epsilon | clip_norm |
                     // epochs | steps | optimizer
  std::vector<std::string> values;
};

struct SweepGrid {
  std::vector<SweepAxis> axes;
  int repeats = 1;
};

struct SweepRow {
  std::size_t run_index = 0;
  std::string run_id;
  std::vector<std::string> axis_values;
  int repeat = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double final_accuracy = 0.0;
  double epsilon_achieved = 0.0;
  double sigma = 0.0;
  std::int64_t steps = 0;
};

struct SweepCell {
  std::vector<std::string> axis_values;
  int runs_ok = 0;
  double mean_accuracy = 0.0;
  double stddev_accuracy = 0.0;
};

struct SweepResults {
  std::vector<std::string> axis_names;
  std::vector<SweepRow> rows;    // cell-major, then repeat; deterministic
  std::vector<SweepCell> cells;  // per-cell mean/stddev over ok repeats
};

// Applies one axis value to a config copy. Exposed for the CLI config
// plumbing; throws ConfigError on unknown axis names.
void apply_axis(TrainConfig& config, const std::string& axis,
                const std::string& value);

// Cross product of all axes x repeats. Each run gets a seed derived from
// (base seed, cell index, repeat). Individual run failures are recorded as
// failed rows and the sweep continues.
SweepResults run_sweep(const SweepGrid& grid, const TrainConfig& base,
                       const data::FeatureDataset& dataset, unsigned workers = 1,
                       const data::FeatureDataset* eval_data = nullptr);

std::string sweep_rows_csv(const SweepResults& results);
std::string sweep_cells_csv(const SweepResults& results);

}  // namespace dpht::training

#endif  // DPHT_TRAINER_HPP
