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

#include "dpht/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dpht/rng.hpp"

namespace dpht::training {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct ResolvedRun {
  TrainConfig config;        // after coercions
  std::int64_t total_steps;
  std::int64_t steps_per_epoch;
  double accounting_q;
  double sigma;
  std::vector<std::string> warnings;
};

data::BatchSelector make_selector(const TrainConfig& config, std::uint64_t seed) {
  switch (config.batch_mode) {
    case data::BatchMode::kPoisson:
      return data::BatchSelector::poisson(config.sampling_rate, seed);
    case data::BatchMode::kShuffle:
      return data::BatchSelector::shuffled(config.batch_size, seed);
    case data::BatchMode::kFull:
      return data::BatchSelector::full();
  }
  throw std::logic_error("unreachable batch mode");
}

ResolvedRun resolve_run(const TrainConfig& input, const data::FeatureDataset& dataset) {
  ResolvedRun run{input, 0, 0, 1.0, 0.0, {}};
  TrainConfig& config = run.config;

  if (config.single_step) {
    config.batch_mode = data::BatchMode::kFull;
    config.steps = 1;
  }
  if (config.steps == 0 && config.epochs < 1) {
    throw ConfigError("epochs must be >= 1 when steps are not given");
  }
  if (!(config.clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
  if (config.batch_mode == data::BatchMode::kShuffle &&
      config.batch_size > dataset.n) {
    throw ConfigError("shuffle batch size exceeds dataset size");
  }

  data::BatchSelector probe = make_selector(config, 0);
  run.steps_per_epoch = probe.steps_per_epoch(dataset.n);
  run.total_steps =
      config.steps > 0 ? config.steps : config.epochs * run.steps_per_epoch;
  if (run.total_steps < 1) throw ConfigError("planned step count must be >= 1");
  run.accounting_q = probe.sampling_rate(dataset.n);

  if (config.privacy.enabled) {
    if (!(config.privacy.delta > 0.0) || config.privacy.delta >= 1.0) {
      throw ConfigError("privacy delta must be in (0, 1)");
    }
    if (config.privacy.delta >= 1.0 / static_cast<double>(dataset.n)) {
      run.warnings.push_back("delta = " + format_double(config.privacy.delta) +
                             " is not smaller than 1/n; the guarantee is weak");
    }
    if (config.batch_mode == data::BatchMode::kShuffle) {
      run.warnings.push_back(
          "shuffle batches are drawn without replacement but accounted as "
          "Poisson with q = batch_size/n");
    }
    if (config.privacy.sigma_override.has_value()) {
      run.sigma = *config.privacy.sigma_override;
      if (run.sigma < 0.0) throw ConfigError("sigma override must be >= 0");
      if (run.sigma == 0.0) {
        run.warnings.push_back("sigma forced to 0: no privacy guarantee");
      }
    } else {
      if (!(config.privacy.epsilon > 0.0)) {
        throw ConfigError("privacy epsilon must be positive");
      }
      run.sigma = privacy::calibrate_sigma(config.privacy.epsilon,
                                           config.privacy.delta, run.accounting_q,
                                           run.total_steps,
                                           privacy::default_orders());
    }
  }
  return run;
}

privacy::PrivacyReport build_report(const ResolvedRun& run,
                                    std::int64_t executed_steps) {
  if (run.sigma > 0.0) {
    privacy::PrivacySpec spec;
    spec.epsilon = run.config.privacy.epsilon;
    spec.delta = run.config.privacy.delta;
    spec.clip_norm = run.config.clip_norm;
    spec.sampling_rate = run.accounting_q;
    spec.steps = executed_steps;
    spec.sigma = run.sigma;
    return privacy::privacy_report(spec);
  }
  privacy::PrivacyReport report;
  report.epsilon = std::numeric_limits<double>::infinity();
  report.delta = run.config.privacy.delta;
  report.sigma = 0.0;
  report.clip_norm = run.config.clip_norm;
  report.sampling_rate = run.accounting_q;
  report.steps = executed_steps;
  report.best_order = 0;
  report.note = "sigma = 0: no noise was added, this run carries no privacy "
                "guarantee";
  return report;
}

}  // namespace

InitKind init_from_name(const std::string& name) {
  if (name == "zero") return InitKind::kZero;
  if (name == "gaussian") return InitKind::kGaussian;
  throw ConfigError("unknown init kind: " + name);
}

std::string init_name(InitKind kind) {
  return kind == InitKind::kZero ? "zero" : "gaussian";
}

LinearHead init_head(std::size_t d, std::size_t k, InitKind init,
                     double init_stddev, double bias_init, std::uint64_t seed) {
  if (init_stddev < 0.0) throw std::domain_error("init stddev must be >= 0");
  LinearHead head(k, d);
  if (init == InitKind::kGaussian && init_stddev > 0.0) {
    GaussianSampler rng(mix_seed(seed, kStreamInit));
    for (double& w : head.W.data()) w = init_stddev * rng.standard_normal();
  }
  for (double& b : head.b) b = bias_init;
  return head;
}

double evaluate(const LinearHead& head, const data::FeatureDataset& dataset) {
  if (dataset.d != head.dim() || dataset.k != head.classes()) {
    throw ShapeError("dataset dimensions do not match head");
  }
  const Matrix logits =
      grad::forward_logits(head, dataset.features, dataset.n);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < dataset.k; ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    if (best == static_cast<std::size_t>(dataset.labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.n);
}

TrainResult train(const TrainConfig& config, const data::FeatureDataset& dataset,
                  const data::FeatureDataset* eval_data) {
  data::validate_dataset(dataset);
  ResolvedRun run = resolve_run(config, dataset);
  const TrainConfig& cfg = run.config;
  const data::FeatureDataset& eval_set = eval_data ? *eval_data : dataset;

  data::BatchSelector selector =
      make_selector(cfg, mix_seed(cfg.seed, kStreamBatch));
  GaussianSampler noise_rng(mix_seed(cfg.seed, kStreamNoise));

  LinearHead head =
      init_head(dataset.d, dataset.k, cfg.init, cfg.init_stddev, cfg.bias_init,
                cfg.seed);
  optim::OptimizerState state =
      optim::OptimizerState::init(cfg.optimizer, dataset.k, dataset.d, cfg.hyper);
  const optim::Schedule schedule{cfg.schedule, cfg.warmup_steps, run.total_steps,
                                 cfg.learning_rate};

  TrainResult result;
  result.warnings = run.warnings;
  result.resolved = cfg;
  result.metrics.reserve(static_cast<std::size_t>(run.total_steps));

  std::vector<float> batch_features;
  std::vector<std::int32_t> batch_labels;

  for (std::int64_t t = 0; t < run.total_steps; ++t) {
    const auto step_start = Clock::now();
    const double rate = optim::schedule_rate(schedule, t);
    MetricsRow row;
    row.step = t;
    row.learning_rate = rate;

    const std::vector<std::size_t> indices = selector.next(dataset.n);
    if (indices.empty()) {
      // Possible under Poisson sampling with tiny q*n. The step is still
      // spent for accounting; parameters stay put.
      row.event = "empty_batch";
    } else {
      std::span<const float> feats;
      std::span<const std::int32_t> labels;
      if (cfg.batch_mode == data::BatchMode::kFull) {
        feats = dataset.features;
        labels = dataset.labels;
      } else {
        batch_features.resize(indices.size() * dataset.d);
        batch_labels.resize(indices.size());
        for (std::size_t i = 0; i < indices.size(); ++i) {
          const float* src = dataset.row(indices[i]);
          std::copy(src, src + dataset.d, batch_features.data() + i * dataset.d);
          batch_labels[i] = dataset.labels[indices[i]];
        }
        feats = batch_features;
        labels = batch_labels;
      }
      const std::size_t batch_n = indices.size();

      const Matrix logits = grad::forward_logits(head, feats, batch_n);
      row.train_loss = grad::sigmoid_ce_loss(logits, labels);
      if (!std::isfinite(row.train_loss)) {
        row.event = "nan_abort";
        row.wall_time_ms = ms_since(step_start);
        result.metrics.push_back(row);
        result.executed_steps = t;
        result.report = build_report(run, std::max<std::int64_t>(t, 1));
        result.head = head;
        result.aborted = true;
        result.abort_reason =
            "non-finite loss at step " + std::to_string(t);
        return result;
      }

      const std::vector<double> norms =
          grad::per_example_grad_norms(head, feats, batch_n, labels);
      std::size_t clipped = 0;
      for (double norm : norms) {
        if (norm > cfg.clip_norm) ++clipped;
      }
      row.clipped_fraction =
          static_cast<double>(clipped) / static_cast<double>(batch_n);

      GradientPacket packet = grad::clipped_gradient_sum(
          head, feats, batch_n, labels, cfg.clip_norm, cfg.workers);
      row.grad_norm = packet_norm(packet);

      const GradientPacket averaged =
          grad::noisy_gradient(packet, run.sigma, cfg.clip_norm, noise_rng);
      optim::StepResult stepped = optim::dp_step(head, state, averaged, rate);
      head = std::move(stepped.head);
      state = std::move(stepped.state);
    }

    const bool epoch_end = (t + 1) % run.steps_per_epoch == 0;
    if (epoch_end || t + 1 == run.total_steps) {
      row.accuracy = evaluate(head, eval_set);
      result.final_accuracy = *row.accuracy;
    }
    row.wall_time_ms = ms_since(step_start);
    result.metrics.push_back(std::move(row));
  }

  result.head = std::move(head);
  result.executed_steps = run.total_steps;
  result.report = build_report(run, run.total_steps);
  return result;
}

std::string metrics_to_jsonl(const std::vector<MetricsRow>& rows) {
  std::string out;
  for (const MetricsRow& row : rows) {
    nlohmann::ordered_json line;
    line["step"] = row.step;
    line["lr"] = row.learning_rate;
    line["loss"] = row.train_loss;
    line["grad_norm"] = row.grad_norm;
    line["clipped_fraction"] = row.clipped_fraction;
    if (row.accuracy.has_value()) {
      line["accuracy"] = *row.accuracy;
    } else {
      line["accuracy"] = nullptr;
    }
    if (!row.event.empty()) line["event"] = row.event;
    out += line.dump();
    out += '\n';
  }
  return out;
}

void apply_axis(TrainConfig& config, const std::string& axis,
                const std::string& value) {
  const auto as_double = [&](const std::string& v) {
    try {
      std::size_t pos = 0;
      const double parsed = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return parsed;
    } catch (const std::exception&) {
      throw ConfigError("axis " + axis + ": bad numeric value '" + v + "'");
    }
  };
  if (axis == "learning_rate") {
    config.learning_rate = as_double(value);
  } else if (axis == "init_stddev") {
    const double stddev = as_double(value);
    config.init = stddev == 0.0 ? InitKind::kZero : InitKind::kGaussian;
    config.init_stddev = stddev;
  } else if (axis == "epsilon") {
    config.privacy.enabled = true;
    config.privacy.epsilon = as_double(value);
  } else if (axis == "clip_norm") {
    config.clip_norm = as_double(value);
  } else if (axis == "epochs") {
    config.epochs = static_cast<std::int64_t>(as_double(value));
  } else if (axis == "steps") {
    config.steps = static_cast<std::int64_t>(as_double(value));
  } else if (axis == "optimizer") {
    config.optimizer = optim::optimizer_from_name(value);
  } else {
    throw ConfigError("unknown sweep axis: " + axis);
  }
}

SweepResults run_sweep(const SweepGrid& grid, const TrainConfig& base,
                       const data::FeatureDataset& dataset, unsigned workers,
                       const data::FeatureDataset* eval_data) {
  if (grid.axes.empty()) throw ConfigError("sweep grid has no axes");
  if (grid.repeats < 1) throw ConfigError("sweep repeats must be >= 1");
  for (const SweepAxis& axis : grid.axes) {
    if (axis.values.empty()) {
      throw ConfigError("sweep axis " + axis.name + " has no values");
    }
  }

  SweepResults results;
  for (const SweepAxis& axis : grid.axes) results.axis_names.push_back(axis.name);

  std::size_t num_cells = 1;
  for (const SweepAxis& axis : grid.axes) num_cells *= axis.values.size();
  const std::size_t num_runs = num_cells * static_cast<std::size_t>(grid.repeats);
  results.rows.resize(num_runs);

  const auto cell_values = [&](std::size_t cell) {
    std::vector<std::string> values(grid.axes.size());
    std::size_t rem = cell;
    for (std::size_t a = grid.axes.size(); a-- > 0;) {
      const auto& axis_vals = grid.axes[a].values;
      values[a] = axis_vals[rem % axis_vals.size()];
      rem /= axis_vals.size();
    }
    return values;
  };

  const auto run_one = [&](std::size_t run_index) {
    const std::size_t cell = run_index / static_cast<std::size_t>(grid.repeats);
    const int repeat = static_cast<int>(run_index % grid.repeats);
    SweepRow row;
    row.run_index = run_index;
    char id[32];
    std::snprintf(id, sizeof(id), "run_%05zu", run_index);
    row.run_id = id;
    row.axis_values = cell_values(cell);
    row.repeat = repeat;
    row.seed = mix_seed(mix_seed(base.seed, 0xce11 + cell),
                        static_cast<std::uint64_t>(repeat));
    try {
      TrainConfig config = base;
      for (std::size_t a = 0; a < grid.axes.size(); ++a) {
        apply_axis(config, grid.axes[a].name, row.axis_values[a]);
      }
      config.seed = row.seed;
      const TrainResult trained = train(config, dataset, eval_data);
      if (trained.aborted) {
        row.ok = false;
        row.error = trained.abort_reason;
        row.final_accuracy = std::numeric_limits<double>::quiet_NaN();
        row.epsilon_achieved = std::numeric_limits<double>::quiet_NaN();
        row.sigma = trained.report.sigma;
        row.steps = trained.executed_steps;
        results.rows[run_index] = std::move(row);
        return;
      }
      row.ok = true;
      row.final_accuracy = trained.final_accuracy;
      row.epsilon_achieved = trained.report.epsilon;
      row.sigma = trained.report.sigma;
      row.steps = trained.executed_steps;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      row.final_accuracy = std::numeric_limits<double>::quiet_NaN();
      row.epsilon_achieved = std::numeric_limits<double>::quiet_NaN();
    }
    results.rows[run_index] = std::move(row);
  };

  if (workers <= 1 || num_runs <= 1) {
    for (std::size_t r = 0; r < num_runs; ++r) run_one(r);
  } else {
    std::atomic<std::size_t> next{0};
    const unsigned team = std::min<std::size_t>(workers, num_runs);
    std::vector<std::thread> threads;
    threads.reserve(team);
    for (unsigned w = 0; w < team; ++w) {
      threads.emplace_back([&] {
        for (;;) {
          const std::size_t r = next.fetch_add(1);
          if (r >= num_runs) return;
          run_one(r);
        }
      });
    }
    for (auto& t : threads) t.join();
  }

  results.cells.resize(num_cells);
  for (std::size_t cell = 0; cell < num_cells; ++cell) {
    SweepCell& agg = results.cells[cell];
    agg.axis_values = cell_values(cell);
    double sum = 0.0;
    for (int r = 0; r < grid.repeats; ++r) {
      const SweepRow& row = results.rows[cell * grid.repeats + r];
      if (row.ok) {
        ++agg.runs_ok;
        sum += row.final_accuracy;
      }
    }
    if (agg.runs_ok > 0) {
      agg.mean_accuracy = sum / agg.runs_ok;
      double sq = 0.0;
      for (int r = 0; r < grid.repeats; ++r) {
        const SweepRow& row = results.rows[cell * grid.repeats + r];
        if (row.ok) {
          const double dev = row.final_accuracy - agg.mean_accuracy;
          sq += dev * dev;
        }
      }
      agg.stddev_accuracy =
          agg.runs_ok > 1 ? std::sqrt(sq / (agg.runs_ok - 1)) : 0.0;
    }
  }
  return results;
}

std::string sweep_rows_csv(const SweepResults& results) {
  std::ostringstream out;
  out << "run_id";
  for (const std::string& name : results.axis_names) out << ',' << name;
  out << ",final_accuracy,epsilon_achieved,sigma,steps,seed,status,error\n";
  for (const SweepRow& row : results.rows) {
    out << row.run_id;
    for (const std::string& v : row.axis_values) out << ',' << v;
    out << ',' << format_double(row.final_accuracy) << ','
        << format_double(row.epsilon_achieved) << ',' << format_double(row.sigma)
        << ',' << row.steps << ',' << row.seed << ','
        << (row.ok ? "ok" : "failed") << ',';
    std::string sanitized = row.error;
    for (char& c : sanitized) {
      if (c == ',' || c == '\n') c = ';';
    }
    out << sanitized << '\n';
  }
  return out.str();
}

std::string sweep_cells_csv(const SweepResults& results) {
  std::ostringstream out;
  for (const std::string& name : results.axis_names) out << name << ',';
  out << "runs_ok,mean_accuracy,stddev_accuracy\n";
  for (const SweepCell& cell : results.cells) {
    for (const std::string& v : cell.axis_values) out << v << ',';
    out << cell.runs_ok << ',' << format_double(cell.mean_accuracy) << ','
        << format_double(cell.stddev_accuracy) << '\n';
  }
  return out.str();
}

}  // namespace dpht::training
