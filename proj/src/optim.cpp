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

#include "dpht/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dpht::optim {

namespace {

void check_shapes(const LinearHead& head, const GradientPacket& g) {
  if (!head.W.same_shape(g.gW) || head.b.size() != g.gb.size()) {
    throw ShapeError("gradient shape does not match head");
  }
}

double l2_norm(const double* v, std::size_t n) {
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) sq += v[i] * v[i];
  return std::sqrt(sq);
}

}  // namespace

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "momentum") return OptimizerKind::kMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "lamb") return OptimizerKind::kLamb;
  throw ConfigError("unknown optimizer: " + name);
}

std::string optimizer_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kMomentum: return "momentum";
    case OptimizerKind::kAdam: return "adam";
    case OptimizerKind::kLamb: return "lamb";
  }
  return "sgd";
}

OptimizerState OptimizerState::init(OptimizerKind kind, std::size_t classes,
                                    std::size_t dim, Hyperparams hyper) {
  OptimizerState state;
  state.kind = kind;
  state.t = 0;
  state.m_W = Matrix(classes, dim);
  state.m_b.assign(classes, 0.0);
  state.v_W = Matrix(classes, dim);
  state.v_b.assign(classes, 0.0);
  state.hyper = hyper;
  return state;
}

AdamResult adam_update(const OptimizerState& state, const GradientPacket& g) {
  const double b1 = state.hyper.beta1;
  const double b2 = state.hyper.beta2;
  const double eps = state.hyper.eps_num;

  AdamResult out{state, GradientPacket(g.gW.rows(), g.gW.cols())};
  out.state.t = state.t + 1;
  const double mc = 1.0 - std::pow(b1, static_cast<double>(out.state.t));
  const double vc = 1.0 - std::pow(b2, static_cast<double>(out.state.t));

  const auto update_coord = [&](double& m, double& v, double grad) {
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad * grad;
    return (m / mc) / (std::sqrt(v / vc) + eps);
  };

  for (std::size_t i = 0; i < g.gW.size(); ++i) {
    out.direction.gW.data()[i] =
        update_coord(out.state.m_W.data()[i], out.state.v_W.data()[i], g.gW.data()[i]);
  }
  for (std::size_t c = 0; c < g.gb.size(); ++c) {
    out.direction.gb[c] = update_coord(out.state.m_b[c], out.state.v_b[c], g.gb[c]);
  }
  out.direction.count = g.count;
  return out;
}

StepResult lamb_update(const LinearHead& head, const OptimizerState& state,
                       const GradientPacket& g, double rate) {
  check_shapes(head, g);
  if (rate < 0.0) throw std::domain_error("learning rate must be nonnegative");

  AdamResult adam = adam_update(state, g);
  const double wd = state.hyper.weight_decay;

  // One parameter group: w' = w - rate * r * (u + wd*w).
  const auto apply_group = [&](const double* w, const double* u, double* out,
                               std::size_t n) {
    std::vector<double> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = u[i] + wd * w[i];
    const double w_norm = l2_norm(w, n);
    const double a_norm = l2_norm(a.data(), n);
    const double ratio = (w_norm == 0.0 || a_norm == 0.0) ? 1.0 : w_norm / a_norm;
    for (std::size_t i = 0; i < n; ++i) out[i] = w[i] - rate * ratio * a[i];
  };

  StepResult result{LinearHead(head.classes(), head.dim()), std::move(adam.state)};
  apply_group(head.W.data().data(), adam.direction.gW.data().data(),
              result.head.W.data().data(), head.W.size());
  apply_group(head.b.data(), adam.direction.gb.data(), result.head.b.data(),
              head.b.size());
  return result;
}

StepResult dp_step(const LinearHead& head, const OptimizerState& state,
                   const GradientPacket& g, double rate) {
  check_shapes(head, g);
  if (rate < 0.0) throw std::domain_error("learning rate must be nonnegative");

  switch (state.kind) {
    case OptimizerKind::kSgd: {
      StepResult result{head, state};
      result.state.t = state.t + 1;
      for (std::size_t i = 0; i < head.W.size(); ++i) {
        result.head.W.data()[i] = head.W.data()[i] - rate * g.gW.data()[i];
      }
      for (std::size_t c = 0; c < head.b.size(); ++c) {
        result.head.b[c] = head.b[c] - rate * g.gb[c];
      }
      return result;
    }
    case OptimizerKind::kMomentum: {
      StepResult result{head, state};
      result.state.t = state.t + 1;
      const double mu = state.hyper.momentum;
      for (std::size_t i = 0; i < head.W.size(); ++i) {
        double& vel = result.state.v_W.data()[i];
        vel = mu * vel + g.gW.data()[i];
        result.head.W.data()[i] = head.W.data()[i] - rate * vel;
      }
      for (std::size_t c = 0; c < head.b.size(); ++c) {
        double& vel = result.state.v_b[c];
        vel = mu * vel + g.gb[c];
        result.head.b[c] = head.b[c] - rate * vel;
      }
      return result;
    }
    case OptimizerKind::kAdam: {
      AdamResult adam = adam_update(state, g);
      StepResult result{LinearHead(head.classes(), head.dim()), std::move(adam.state)};
      for (std::size_t i = 0; i < head.W.size(); ++i) {
        result.head.W.data()[i] = head.W.data()[i] - rate * adam.direction.gW.data()[i];
      }
      for (std::size_t c = 0; c < head.b.size(); ++c) {
        result.head.b[c] = head.b[c] - rate * adam.direction.gb[c];
      }
      return result;
    }
    case OptimizerKind::kLamb:
      return lamb_update(head, state, g, rate);
  }
  throw std::logic_error("unreachable optimizer kind");
}

ScheduleKind schedule_from_name(const std::string& name) {
  if (name == "constant") return ScheduleKind::kConstant;
  if (name == "linear_warmup_linear_decay") return ScheduleKind::kLinearWarmupLinearDecay;
  if (name == "linear_warmup_cosine_decay") return ScheduleKind::kLinearWarmupCosineDecay;
  throw ConfigError("unknown schedule: " + name);
}

std::string schedule_name(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kLinearWarmupLinearDecay: return "linear_warmup_linear_decay";
    case ScheduleKind::kLinearWarmupCosineDecay: return "linear_warmup_cosine_decay";
  }
  return "constant";
}

double schedule_rate(const Schedule& schedule, std::int64_t t) {
  if (t < 0) throw std::domain_error("schedule step must be nonnegative");
  if (schedule.kind == ScheduleKind::kConstant) return schedule.base_rate;

  t = std::min(t, schedule.total_steps);
  if (t < schedule.warmup_steps) {
    return schedule.base_rate * static_cast<double>(t) /
           static_cast<double>(schedule.warmup_steps);
  }
  const std::int64_t span = schedule.total_steps - schedule.warmup_steps;
  if (span <= 0) return schedule.base_rate;
  const double s = static_cast<double>(t - schedule.warmup_steps) /
                   static_cast<double>(span);
  if (schedule.kind == ScheduleKind::kLinearWarmupLinearDecay) {
    return schedule.base_rate * (1.0 - s);
  }
  return schedule.base_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * s));
}

}  // namespace dpht::optim
