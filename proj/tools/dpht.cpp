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
// dpht command line: calibrate, report, gen-synth, import, train, sweep,
// eval. Machine-readable JSON goes to stdout only for calibrate/report;
// progress and warnings go to stderr. Exit codes: 0 ok, 1 I/O, 2
// usage/validation, 3 numeric failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpht/accountant.hpp"
#include "dpht/common.hpp"
#include "dpht/data_io.hpp"
#include "dpht/trainer.hpp"

namespace {

using dpht::ConfigError;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double parsed = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError(key + ": bad numeric value '" + value + "'");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long parsed = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError(key + ": bad integer value '" + value + "'");
  }
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// A full train/sweep run description: the library config plus file paths.
struct RunSetup {
  dpht::training::TrainConfig config;
  std::string data;
  std::string eval_data;
  std::string out_dir;
};

void apply_kv(RunSetup& setup, const std::string& key, const std::string& value) {
  auto& cfg = setup.config;
  if (key == "data") {
    setup.data = value;
  } else if (key == "eval_data") {
    setup.eval_data = value;
  } else if (key == "out_dir") {
    setup.out_dir = value;
  } else if (key == "optimizer.kind") {
    cfg.optimizer = dpht::optim::optimizer_from_name(value);
  } else if (key == "optimizer.learning_rate") {
    cfg.learning_rate = parse_double(key, value);
  } else if (key == "optimizer.momentum") {
    cfg.hyper.momentum = parse_double(key, value);
  } else if (key == "optimizer.beta1") {
    cfg.hyper.beta1 = parse_double(key, value);
  } else if (key == "optimizer.beta2") {
    cfg.hyper.beta2 = parse_double(key, value);
  } else if (key == "optimizer.eps_num") {
    cfg.hyper.eps_num = parse_double(key, value);
  } else if (key == "optimizer.weight_decay") {
    cfg.hyper.weight_decay = parse_double(key, value);
  } else if (key == "schedule.kind") {
    cfg.schedule = dpht::optim::schedule_from_name(value);
  } else if (key == "schedule.warmup_steps") {
    cfg.warmup_steps = parse_int(key, value);
  } else if (key == "run.epochs") {
    cfg.epochs = parse_int(key, value);
  } else if (key == "run.steps") {
    cfg.steps = parse_int(key, value);
  } else if (key == "run.single_step") {
    cfg.single_step = parse_int(key, value) != 0;
  } else if (key == "batch.mode") {
    cfg.batch_mode = dpht::data::batch_mode_from_name(value);
  } else if (key == "batch.sampling_rate") {
    cfg.sampling_rate = parse_double(key, value);
  } else if (key == "batch.size") {
    cfg.batch_size = static_cast<std::size_t>(parse_int(key, value));
  } else if (key == "privacy.enabled") {
    cfg.privacy.enabled = parse_int(key, value) != 0;
  } else if (key == "privacy.epsilon") {
    cfg.privacy.epsilon = parse_double(key, value);
  } else if (key == "privacy.delta") {
    cfg.privacy.delta = parse_double(key, value);
  } else if (key == "privacy.sigma_override") {
    if (value.empty()) {
      cfg.privacy.sigma_override.reset();
    } else {
      cfg.privacy.sigma_override = parse_double(key, value);
    }
  } else if (key == "init.kind") {
    cfg.init = dpht::training::init_from_name(value);
  } else if (key == "init.stddev") {
    cfg.init_stddev = parse_double(key, value);
  } else if (key == "init.bias") {
    cfg.bias_init = parse_double(key, value);
  } else if (key == "clip_norm") {
    cfg.clip_norm = parse_double(key, value);
  } else if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
  } else if (key == "workers") {
    cfg.workers = static_cast<unsigned>(parse_int(key, value));
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

// Canonical key=value form of a setup; reapplying it reproduces the run.
std::vector<std::pair<std::string, std::string>> setup_to_kv(const RunSetup& setup) {
  const auto& cfg = setup.config;
  std::vector<std::pair<std::string, std::string>> kv;
  kv.emplace_back("data", setup.data);
  kv.emplace_back("eval_data", setup.eval_data);
  kv.emplace_back("out_dir", setup.out_dir);
  kv.emplace_back("optimizer.kind", dpht::optim::optimizer_name(cfg.optimizer));
  kv.emplace_back("optimizer.learning_rate", format_double(cfg.learning_rate));
  kv.emplace_back("optimizer.momentum", format_double(cfg.hyper.momentum));
  kv.emplace_back("optimizer.beta1", format_double(cfg.hyper.beta1));
  kv.emplace_back("optimizer.beta2", format_double(cfg.hyper.beta2));
  kv.emplace_back("optimizer.eps_num", format_double(cfg.hyper.eps_num));
  kv.emplace_back("optimizer.weight_decay", format_double(cfg.hyper.weight_decay));
  kv.emplace_back("schedule.kind", dpht::optim::schedule_name(cfg.schedule));
  kv.emplace_back("schedule.warmup_steps", std::to_string(cfg.warmup_steps));
  kv.emplace_back("run.epochs", std::to_string(cfg.epochs));
  kv.emplace_back("run.steps", std::to_string(cfg.steps));
  kv.emplace_back("run.single_step", cfg.single_step ? "1" : "0");
  kv.emplace_back("batch.mode", dpht::data::batch_mode_name(cfg.batch_mode));
  kv.emplace_back("batch.sampling_rate", format_double(cfg.sampling_rate));
  kv.emplace_back("batch.size", std::to_string(cfg.batch_size));
  kv.emplace_back("privacy.enabled", cfg.privacy.enabled ? "1" : "0");
  kv.emplace_back("privacy.epsilon", format_double(cfg.privacy.epsilon));
  kv.emplace_back("privacy.delta", format_double(cfg.privacy.delta));
  kv.emplace_back("privacy.sigma_override",
                  cfg.privacy.sigma_override ? format_double(*cfg.privacy.sigma_override)
                                             : "");
  kv.emplace_back("init.kind", dpht::training::init_name(cfg.init));
  kv.emplace_back("init.stddev", format_double(cfg.init_stddev));
  kv.emplace_back("init.bias", format_double(cfg.bias_init));
  kv.emplace_back("clip_norm", format_double(cfg.clip_norm));
  kv.emplace_back("seed", std::to_string(cfg.seed));
  kv.emplace_back("workers", std::to_string(cfg.workers));
  return kv;
}

void apply_config_file(RunSetup& setup, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key=value");
    }
    apply_kv(setup, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out << content;
  if (!out) throw std::runtime_error("failed writing output file: " + path);
}

std::string resolved_config_text(const RunSetup& setup) {
  std::string text;
  for (const auto& [key, value] : setup_to_kv(setup)) {
    text += key;
    text += '=';
    text += value;
    text += '\n';
  }
  return text;
}

void save_head_json(const dpht::LinearHead& head, const std::string& path) {
  nlohmann::ordered_json doc;
  doc["d"] = head.dim();
  doc["k"] = head.classes();
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t c = 0; c < head.classes(); ++c) {
    auto row = nlohmann::ordered_json::array();
    for (std::size_t j = 0; j < head.dim(); ++j) row.push_back(head.W(c, j));
    rows.push_back(std::move(row));
  }
  doc["W"] = std::move(rows);
  doc["b"] = head.b;
  write_file(path, doc.dump(2) + "\n");
}

dpht::LinearHead load_head_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open head file: " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  const auto d = doc.at("d").get<std::size_t>();
  const auto k = doc.at("k").get<std::size_t>();
  dpht::LinearHead head(k, d);
  const auto& rows = doc.at("W");
  if (rows.size() != k) throw dpht::ValidationError("head W row count mismatch");
  for (std::size_t c = 0; c < k; ++c) {
    if (rows[c].size() != d) throw dpht::ValidationError("head W column count mismatch");
    for (std::size_t j = 0; j < d; ++j) head.W(c, j) = rows[c][j].get<double>();
  }
  const auto& b = doc.at("b");
  if (b.size() != k) throw dpht::ValidationError("head b length mismatch");
  for (std::size_t c = 0; c < k; ++c) head.b[c] = b[c].get<double>();
  return head;
}

dpht::data::FeatureDataset load_data(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("data file not found: " + path);
  }
  return dpht::data::read_cache(path);
}

std::string train_summary_csv(const dpht::training::TrainResult& result) {
  std::ostringstream out;
  out << "run_id,final_accuracy,epsilon_achieved,sigma,steps,seed\n";
  out << "run_00000," << format_double(result.final_accuracy) << ','
      << format_double(result.report.epsilon) << ','
      << format_double(result.report.sigma) << ',' << result.executed_steps << ','
      << result.resolved.seed << '\n';
  return out.str();
}

dpht::training::SweepGrid parse_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grid file: " + path);
  dpht::training::SweepGrid grid;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("grid line " + std::to_string(line_no) +
                        ": expected axis=v1,v2,...");
    }
    const std::string name = trim(t.substr(0, eq));
    const std::string rhs = t.substr(eq + 1);
    if (name == "repeats") {
      grid.repeats = static_cast<int>(parse_int(name, trim(rhs)));
      continue;
    }
    dpht::training::SweepAxis axis;
    axis.name = name;
    std::stringstream ss(rhs);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const std::string v = trim(cell);
      if (!v.empty()) axis.values.push_back(v);
    }
    if (axis.values.empty()) {
      throw ConfigError("grid line " + std::to_string(line_no) + ": axis " + name +
                        " has no values");
    }
    grid.axes.push_back(std::move(axis));
  }
  if (grid.axes.empty()) throw ConfigError("grid file defines no axes: " + path);
  return grid;
}

// Shared train/sweep flag surface. Presence is checked via count() so that
// flags override the config file.
struct TrainFlags {
  std::string data, eval_data, out_dir, config_path;
  std::string optimizer, schedule, batch_mode, init;
  double learning_rate = 0.0, momentum = 0.0, beta1 = 0.0, beta2 = 0.0;
  double eps_num = 0.0, weight_decay = 0.0, sampling_rate = 0.0;
  double epsilon = 0.0, delta = 0.0, sigma = 0.0;
  double init_stddev = 0.0, bias_init = 0.0, clip_norm = 0.0;
  std::int64_t warmup_steps = 0, epochs = 0, steps = 0;
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  bool single_step = false, no_privacy = false;
};

void add_train_options(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--data", f.data, "feature cache file");
  cmd->add_option("--eval-data", f.eval_data, "held-out cache for evaluation");
  cmd->add_option("--out-dir", f.out_dir, "output directory");
  cmd->add_option("--config", f.config_path, "key=value config file (flags win)");
  cmd->add_option("--optimizer", f.optimizer, "sgd|momentum|adam|lamb");
  cmd->add_option("--learning-rate", f.learning_rate, "base learning rate");
  cmd->add_option("--momentum", f.momentum, "momentum coefficient");
  cmd->add_option("--beta1", f.beta1, "Adam/LAMB beta1");
  cmd->add_option("--beta2", f.beta2, "Adam/LAMB beta2");
  cmd->add_option("--eps-num", f.eps_num, "Adam/LAMB denominator epsilon");
  cmd->add_option("--weight-decay", f.weight_decay, "LAMB weight decay");
  cmd->add_option("--schedule", f.schedule,
                  "constant|linear_warmup_linear_decay|linear_warmup_cosine_decay");
  cmd->add_option("--warmup-steps", f.warmup_steps, "warmup steps");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--steps", f.steps, "explicit step count (overrides epochs)");
  cmd->add_flag("--single-step", f.single_step, "one full-batch update");
  cmd->add_option("--batch-mode", f.batch_mode, "full|shuffle|poisson");
  cmd->add_option("--sampling-rate", f.sampling_rate, "poisson inclusion rate");
  cmd->add_option("--batch-size", f.batch_size, "shuffle batch size");
  cmd->add_option("--epsilon", f.epsilon, "privacy budget epsilon (enables DP)");
  cmd->add_option("--delta", f.delta, "privacy budget delta");
  cmd->add_option("--sigma", f.sigma, "noise multiplier override (enables DP)");
  cmd->add_flag("--no-privacy", f.no_privacy, "disable DP noise and accounting");
  cmd->add_option("--init", f.init, "zero|gaussian");
  cmd->add_option("--init-stddev", f.init_stddev, "gaussian init stddev");
  cmd->add_option("--bias-init", f.bias_init, "bias initialization value");
  cmd->add_option("--clip-norm", f.clip_norm, "per-example clip norm C");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--workers", f.workers,
                  "worker threads (sweep: parallel cells, train: gradient chunks)");
}

RunSetup build_setup(const CLI::App* cmd, const TrainFlags& f) {
  RunSetup setup;
  bool batch_mode_given = false;
  if (cmd->count("--config")) {
    apply_config_file(setup, f.config_path);
    std::ifstream in(f.config_path);
    std::string line;
    while (std::getline(in, line)) {
      batch_mode_given |= trim(line).rfind("batch.mode", 0) == 0;
    }
  }

  const auto on = [&](const char* flag) { return cmd->count(flag) > 0; };
  batch_mode_given |= on("--batch-mode");
  if (on("--data")) setup.data = f.data;
  if (on("--eval-data")) setup.eval_data = f.eval_data;
  if (on("--out-dir")) setup.out_dir = f.out_dir;
  auto& cfg = setup.config;
  if (on("--optimizer")) cfg.optimizer = dpht::optim::optimizer_from_name(f.optimizer);
  if (on("--learning-rate")) cfg.learning_rate = f.learning_rate;
  if (on("--momentum")) cfg.hyper.momentum = f.momentum;
  if (on("--beta1")) cfg.hyper.beta1 = f.beta1;
  if (on("--beta2")) cfg.hyper.beta2 = f.beta2;
  if (on("--eps-num")) cfg.hyper.eps_num = f.eps_num;
  if (on("--weight-decay")) cfg.hyper.weight_decay = f.weight_decay;
  if (on("--schedule")) cfg.schedule = dpht::optim::schedule_from_name(f.schedule);
  if (on("--warmup-steps")) cfg.warmup_steps = f.warmup_steps;
  if (on("--epochs")) cfg.epochs = f.epochs;
  if (on("--steps")) cfg.steps = f.steps;
  if (f.single_step) cfg.single_step = true;
  if (on("--batch-mode")) cfg.batch_mode = dpht::data::batch_mode_from_name(f.batch_mode);
  if (on("--sampling-rate")) cfg.sampling_rate = f.sampling_rate;
  if (on("--batch-size")) cfg.batch_size = f.batch_size;
  if (on("--epsilon")) {
    cfg.privacy.enabled = true;
    cfg.privacy.epsilon = f.epsilon;
  }
  if (on("--delta")) cfg.privacy.delta = f.delta;
  if (on("--sigma")) {
    cfg.privacy.enabled = true;
    cfg.privacy.sigma_override = f.sigma;
  }
  if (f.no_privacy) {
    cfg.privacy.enabled = false;
    cfg.privacy.sigma_override.reset();
  }
  if (on("--init")) cfg.init = dpht::training::init_from_name(f.init);
  if (on("--init-stddev")) {
    cfg.init_stddev = f.init_stddev;
    if (!on("--init")) cfg.init = dpht::training::InitKind::kGaussian;
  }
  if (on("--bias-init")) cfg.bias_init = f.bias_init;
  if (on("--clip-norm")) cfg.clip_norm = f.clip_norm;
  if (on("--seed")) cfg.seed = f.seed;
  if (on("--workers")) cfg.workers = f.workers;

  // Poisson sampling is the accounting-accurate default once DP is on;
  // other modes stay available but must be asked for.
  if (cfg.privacy.enabled && !cfg.single_step && !batch_mode_given) {
    cfg.batch_mode = dpht::data::BatchMode::kPoisson;
  }

  if (setup.data.empty()) throw ConfigError("no data file given (--data or config)");
  return setup;
}

void check_privacy_ranges(double epsilon, double delta) {
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(delta > 0.0) || delta >= 1.0) throw ConfigError("delta must be in (0, 1)");
}

int run_train(const CLI::App* cmd, const TrainFlags& flags) {
  RunSetup setup = build_setup(cmd, flags);
  if (setup.out_dir.empty()) throw ConfigError("no output directory given");
  const dpht::data::FeatureDataset dataset = load_data(setup.data);
  std::optional<dpht::data::FeatureDataset> eval_set;
  if (!setup.eval_data.empty()) eval_set = load_data(setup.eval_data);

  dpht::training::TrainResult result = dpht::training::train(
      setup.config, dataset, eval_set ? &*eval_set : nullptr);

  // Echo the post-coercion config so the run can be reproduced from the
  // output directory alone.
  RunSetup resolved = setup;
  resolved.config = result.resolved;
  const std::string config_text = resolved_config_text(resolved);

  std::filesystem::create_directories(setup.out_dir);
  const std::filesystem::path out(setup.out_dir);
  write_file((out / "resolved_config.txt").string(), config_text);
  write_file((out / "metrics.jsonl").string(),
             dpht::training::metrics_to_jsonl(result.metrics));
  write_file((out / "summary.csv").string(), train_summary_csv(result));
  write_file((out / "privacy_report.json").string(),
             dpht::privacy::report_to_json(result.report) + "\n");
  save_head_json(result.head, (out / "head.json").string());

  std::cerr << config_text;
  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& row : result.metrics) {
    if (row.accuracy.has_value()) {
      std::cerr << "step " << row.step + 1 << "/" << result.metrics.size()
                << " loss=" << row.train_loss << " accuracy=" << *row.accuracy
                << "\n";
    }
  }
  if (result.aborted) {
    std::cerr << "error: " << result.abort_reason << "\n";
    return 3;
  }
  std::cerr << "final accuracy " << format_double(result.final_accuracy)
            << " (random chance " << format_double(1.0 / dataset.k) << ")"
            << ", achieved epsilon " << format_double(result.report.epsilon)
            << " at sigma " << format_double(result.report.sigma) << "\n";
  return 0;
}

int run_sweep_cmd(const CLI::App* cmd, const TrainFlags& flags,
                  const std::string& grid_path) {
  RunSetup setup = build_setup(cmd, flags);
  // For sweeps, --workers governs how many cells run in parallel; the runs
  // themselves stay single-threaded unless a config file says otherwise.
  unsigned sweep_workers = std::thread::hardware_concurrency();
  if (sweep_workers == 0) sweep_workers = 1;
  if (cmd->count("--workers")) {
    sweep_workers = flags.workers;
    setup.config.workers = 1;
  }
  if (setup.out_dir.empty()) throw ConfigError("no output directory given");
  const dpht::training::SweepGrid grid = parse_grid_file(grid_path);
  const dpht::data::FeatureDataset dataset = load_data(setup.data);
  std::optional<dpht::data::FeatureDataset> eval_set;
  if (!setup.eval_data.empty()) eval_set = load_data(setup.eval_data);

  const dpht::training::SweepResults results =
      dpht::training::run_sweep(grid, setup.config, dataset, sweep_workers,
                             eval_set ? &*eval_set : nullptr);

  std::filesystem::create_directories(setup.out_dir);
  const std::filesystem::path out(setup.out_dir);
  write_file((out / "resolved_config.txt").string(), resolved_config_text(setup));
  write_file((out / "results.csv").string(), dpht::training::sweep_rows_csv(results));
  write_file((out / "cells.csv").string(), dpht::training::sweep_cells_csv(results));

  std::size_t failed = 0;
  for (const auto& row : results.rows) {
    if (!row.ok) {
      ++failed;
      std::cerr << row.run_id << " failed: " << row.error << "\n";
    }
  }
  std::cerr << "sweep finished: " << results.rows.size() - failed << "/"
            << results.rows.size() << " runs ok\n";
  return failed == results.rows.size() ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"differentially private last-layer finetuning toolkit"};
  app.require_subcommand(1);

  // calibrate
  auto* calibrate = app.add_subcommand(
      "calibrate", "solve for the noise multiplier of a target (epsilon, delta)");
  double cal_eps = 0.0, cal_delta = 0.0, cal_q = 1.0, cal_clip = 1.0;
  std::int64_t cal_steps = 1;
  calibrate->add_option("--epsilon", cal_eps, "target epsilon")->required();
  calibrate->add_option("--delta", cal_delta, "target delta")->required();
  calibrate->add_option("--sampling-rate", cal_q, "per-step sampling rate")->required();
  calibrate->add_option("--steps", cal_steps, "number of composed steps")->required();
  calibrate->add_option("--clip-norm", cal_clip, "clip norm echoed in the report");

  // report
  auto* report = app.add_subcommand(
      "report", "achieved epsilon of a given noise multiplier");
  double rep_sigma = 0.0, rep_delta = 0.0, rep_q = 1.0, rep_clip = 1.0;
  std::int64_t rep_steps = 1;
  report->add_option("--sigma", rep_sigma, "noise multiplier")->required();
  report->add_option("--delta", rep_delta, "delta")->required();
  report->add_option("--sampling-rate", rep_q, "per-step sampling rate")->required();
  report->add_option("--steps", rep_steps, "number of composed steps")->required();
  report->add_option("--clip-norm", rep_clip, "clip norm echoed in the report");

  // gen-synth
  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic feature cache");
  std::size_t gen_n = 1000, gen_d = 16, gen_k = 4;
  double gen_sep = 4.0, gen_noise = 1.0;
  std::uint64_t gen_seed = 0;
  std::string gen_out, gen_csv_out;
  gen->add_option("--n", gen_n, "example count");
  gen->add_option("--d", gen_d, "feature dimension");
  gen->add_option("--k", gen_k, "class count");
  gen->add_option("--separation", gen_sep, "class mean separation");
  gen->add_option("--noise-std", gen_noise, "feature noise stddev");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--out", gen_out, "output cache path")->required();
  gen->add_option("--csv-out", gen_csv_out, "also export CSV to this path");

  // import
  auto* import_cmd = app.add_subcommand("import", "import a CSV into a feature cache");
  std::string imp_in, imp_out;
  int imp_label_col = -1;
  bool imp_header = false;
  std::size_t imp_classes = 0;
  import_cmd->add_option("--input", imp_in, "CSV file")->required();
  import_cmd->add_option("--out", imp_out, "output cache path")->required();
  import_cmd->add_option("--label-column", imp_label_col,
                         "label column index (default: last)");
  import_cmd->add_flag("--header", imp_header, "skip a header row");
  import_cmd->add_option("--classes", imp_classes,
                         "declared class count (default: infer)");

  // train
  auto* train_cmd = app.add_subcommand("train", "run one DP finetuning job");
  TrainFlags train_flags;
  add_train_options(train_cmd, train_flags);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "run a hyperparameter grid");
  TrainFlags sweep_flags;
  std::string grid_path;
  add_train_options(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--grid", grid_path, "axis grid file")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved head on a cache");
  std::string eval_data_path, eval_head_path;
  eval_cmd->add_option("--data", eval_data_path, "feature cache")->required();
  eval_cmd->add_option("--head", eval_head_path, "head JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (calibrate->parsed()) {
      check_privacy_ranges(cal_eps, cal_delta);
      dpht::privacy::PrivacySpec spec;
      spec.epsilon = cal_eps;
      spec.delta = cal_delta;
      spec.sampling_rate = cal_q;
      spec.steps = cal_steps;
      spec.clip_norm = cal_clip;
      spec.sigma = dpht::privacy::calibrate_sigma(cal_eps, cal_delta, cal_q, cal_steps,
                                                  dpht::privacy::default_orders());
      std::cout << dpht::privacy::report_to_json(dpht::privacy::privacy_report(spec))
                << "\n";
      return 0;
    }
    if (report->parsed()) {
      if (!(rep_sigma > 0.0)) throw ConfigError("sigma must be positive");
      if (!(rep_delta > 0.0) || rep_delta >= 1.0) {
        throw ConfigError("delta must be in (0, 1)");
      }
      dpht::privacy::PrivacySpec spec;
      spec.epsilon = 0.0;
      spec.delta = rep_delta;
      spec.sampling_rate = rep_q;
      spec.steps = rep_steps;
      spec.clip_norm = rep_clip;
      spec.sigma = rep_sigma;
      std::cout << dpht::privacy::report_to_json(dpht::privacy::privacy_report(spec))
                << "\n";
      return 0;
    }
    if (gen->parsed()) {
      const auto dataset =
          dpht::data::gen_synthetic(gen_n, gen_d, gen_k, gen_sep, gen_noise, gen_seed);
      dpht::data::write_cache(dataset, gen_out);
      if (!gen_csv_out.empty()) dpht::data::export_csv(dataset, gen_csv_out);
      std::cerr << "wrote " << dataset.n << " examples (d=" << dataset.d
                << ", k=" << dataset.k << ") to " << gen_out << "\n";
      return 0;
    }
    if (import_cmd->parsed()) {
      const auto dataset =
          dpht::data::import_csv(imp_in, imp_label_col, imp_header, imp_classes);
      dpht::data::write_cache(dataset, imp_out);
      std::cerr << "imported " << dataset.n << " examples (d=" << dataset.d
                << ", k=" << dataset.k << ") to " << imp_out << "\n";
      return 0;
    }
    if (train_cmd->parsed()) return run_train(train_cmd, train_flags);
    if (sweep_cmd->parsed()) {
      return run_sweep_cmd(sweep_cmd, sweep_flags, grid_path);
    }
    if (eval_cmd->parsed()) {
      const auto dataset = load_data(eval_data_path);
      const auto head = load_head_json(eval_head_path);
      std::cout << format_double(dpht::training::evaluate(head, dataset)) << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dpht::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dpht::BracketError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dpht::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const dpht::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
