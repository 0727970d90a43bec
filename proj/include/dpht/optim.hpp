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

#ifndef DPHT_OPTIM_HPP
#define DPHT_OPTIM_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "dpht/common.hpp"

namespace dpht::optim {

// First-order optimizers driven by an already-privatized gradient. Nothing
// in this module accepts per-example data: privatization happens upstream
// and every update here is post-processing.

enum class OptimizerKind { kSgd, kMomentum, kAdam, kLamb };

OptimizerKind optimizer_from_name(const std::string& name);
std::string optimizer_name(OptimizerKind kind);

struct Hyperparams {
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_num = 1e-6;
  double weight_decay = 0.0;
};

// Step counter plus head-shaped moment buffers. `m` is the Adam/LAMB first
// moment; `v` is the second moment for Adam/LAMB and the velocity for
// momentum SGD.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kSgd;
  std::int64_t t = 0;
  Matrix m_W;
  std::vector<double> m_b;
  Matrix v_W;
  std::vector<double> v_b;
  Hyperparams hyper;

  static OptimizerState init(OptimizerKind kind, std::size_t classes,
                             std::size_t dim, Hyperparams hyper = {});
};

struct StepResult {
  LinearHead head;
  OptimizerState state;
};

struct AdamResult {
  OptimizerState state;
  GradientPacket direction;
};

// Bias-corrected Adam direction:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;
//   u = (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps_num).
// Advances the step counter; inputs are not mutated.
AdamResult adam_update(const OptimizerState& state, const GradientPacket& g);

// LAMB step. The Adam direction u is scaled per parameter group (W and b
// are the two groups of a linear head) by the trust ratio
//   r = ||w|| / ||u + wd*w||,  with r = 1 when either norm is zero,
// then applied as w' = w - rate * r * (u + wd*w). The identity trust-ratio
// transform plus r = 1 on zero norms make the first step from zero weights
// coincide exactly with Adam.
StepResult lamb_update(const LinearHead& head, const OptimizerState& state,
                       const GradientPacket& g, double rate);

// One optimizer step with a privatized gradient; dispatches on state.kind.
// Returns fresh values; neither input is mutated.
StepResult dp_step(const LinearHead& head, const OptimizerState& state,
                   const GradientPacket& g, double rate);

enum class ScheduleKind {
  kConstant,
  kLinearWarmupLinearDecay,
  kLinearWarmupCosineDecay,
};

ScheduleKind schedule_from_name(const std::string& name);
std::string schedule_name(ScheduleKind kind);

struct Schedule {
  ScheduleKind kind = ScheduleKind::kConstant;
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1;
  double base_rate = 0.0;
};

// Linear ramp from 0 to base_rate over warmup_steps, then the configured
// decay to 0 at total_steps. Steps past total_steps clamp to the final
// value.
double schedule_rate(const Schedule& schedule, std::int64_t t);

}  // namespace dpht::optim

#endif  // DPHT_OPTIM_HPP
