// Copyright (c) 2026 The MUTE Lab Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "model/checkpoint.hpp"
#include "model/model.hpp"
#include "random.hpp"
#include "tasks/tasks.hpp"

namespace mute::train {

using num::Tensor;

struct TrainConfig {
  std::size_t max_steps = 5000;
  std::size_t batch_tokens = 512;
  std::size_t warmup_steps = 400;
  Real lr_scale = Real(2.0);  // schedule constant; peak lr = scale / sqrt(d * warmup)
  Real clip_norm = Real(5.0);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.998);
  Real adam_eps = Real(1e-9);
  std::size_t log_interval = 50;
  std::size_t checkpoint_interval = 1000;
  std::size_t eval_interval = 250;
  std::uint64_t seed = 1;
  std::size_t train_size = 20000;
  std::size_t eval_size = 500;
  // Early stop once both are reached at an evaluation; 0 disables.
  Real target_token_acc = 0;
  Real target_exact_match = 0;
  bool log_throughput = false;

  void validate() const;
};

struct AdamState {
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.998);
  Real eps = Real(1e-9);
  std::uint64_t step = 0;
  std::vector<std::vector<Real>> m;
  std::vector<std::vector<Real>> v;
};

AdamState make_adam(std::span<const Tensor> params, Real beta1, Real beta2, Real eps);

// Bias-corrected Adam update from the tensors' gradient buffers. Throws a
// numeric error, leaving parameters and moments unchanged, if any gradient
// is not finite.
void adam_step(std::span<Tensor> params, AdamState& state, Real lr);

// scale * d^-0.5 * min(step^-0.5, step * warmup^-1.5), step counted from 1.
Real learning_rate(std::uint64_t step, std::size_t width, std::size_t warmup, Real scale);

// Rescales gradients so their global l2 norm is at most max_norm; returns
// the norm before clipping.
Real clip_gradients(std::span<Tensor> params, Real max_norm);

// Named RNG streams fanned out from one master seed.
struct Streams {
  Rng data;
  Rng noise;
  Rng dropout;

  static Streams from_seed(std::uint64_t seed);
};

std::uint64_t init_seed(std::uint64_t master);

struct StepStats {
  std::uint64_t step = 0;
  Real loss = 0;
  Real ce = 0;
  Real penalty_sum = 0;
  Real lr = 0;
  double tokens_per_sec = 0;
};

class Trainer {
 public:
  Trainer(model::Model& model, const TrainConfig& config);

  // forward -> loss -> backward -> Adam -> shuffle projection.
  StepStats train_step(const tasks::Batch& batch);

  std::uint64_t step() const { return adam_.step; }
  Streams& streams() { return streams_; }
  const AdamState& adam() const { return adam_; }
  std::vector<Tensor>& params() { return params_; }

  model::Checkpoint checkpoint(const std::string& config_text) const;
  // Restores parameters, optimizer moments, RNG streams and step counter.
  void restore(const model::Checkpoint& ckpt);

 private:
  model::Model& model_;
  TrainConfig config_;
  std::vector<Tensor> params_;
  AdamState adam_;
  Streams streams_;
};

struct EvalMetrics {
  double token_accuracy = 0;
  double exact_match = 0;
  std::size_t tokens = 0;
  std::size_t sequences = 0;
};

// Maps sources to hypotheses; `finished[i]` tells whether hypothesis i
// ended with eos.
using DecodeFn = std::function<std::vector<std::vector<std::int32_t>>(
    const std::vector<std::vector<std::int32_t>>& sources, std::vector<bool>& finished)>;

// References are targets followed by eos; hypotheses are compared
// positionally over the reference length.
EvalMetrics evaluate(const DecodeFn& decode, const std::vector<tasks::Pair>& data);
EvalMetrics evaluate(const model::Model& model, const std::vector<tasks::Pair>& data);

struct RunOptions {
  std::string out_dir;      // empty: no files written
  std::string config_text;  // stored in checkpoints
  const model::Checkpoint* resume = nullptr;
  std::function<void(const StepStats&)> on_log;
  std::function<void(std::uint64_t, const EvalMetrics&)> on_eval;
};

struct RunResult {
  std::vector<StepStats> log;
  EvalMetrics final_metrics;
  std::uint64_t steps = 0;
  bool reached_target = false;
};

// Training and held-out sets derived from the task seed.
std::vector<tasks::Pair> training_pairs(const tasks::TaskSpec& task, std::size_t count);
std::vector<tasks::Pair> evaluation_pairs(const tasks::TaskSpec& task, std::size_t count);

// Writes metrics.log, eval.log, shuffle.log (per-layer penalty and hardness
// of each shuffle matrix), periodic step_<N>.ckpt, final.ckpt and
// summary.tsv under out_dir. On resume the logs are cut back to the
// checkpoint step and then appended to.
RunResult run_training(model::Model& model, const TrainConfig& config,
                       const tasks::TaskSpec& task, const RunOptions& options);

}  // namespace mute::train
