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

#include <functional>
#include <string>
#include <vector>

#include "cli/run_config.hpp"
#include "model/checkpoint.hpp"
#include "numerics/grad_check.hpp"
#include "train/trainer.hpp"

namespace mute::cli {

using LineSink = std::function<void(const std::string&)>;

// Trains to max_steps (or the early-stop targets) under cfg.out_dir.
train::RunResult cmd_train(const RunConfig& cfg, const LineSink& log = {},
                           const std::string& resume_path = {});

// Evaluates a checkpoint on the held-out set of its own configuration, or
// on pairs read from data_path. Writes eval.tsv under cfg.out_dir.
train::EvalMetrics cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                            const std::string& data_path = {});

enum class SweepAxis { Units, SampleRate };
SweepAxis parse_axis(const std::string& text);
const char* axis_name(SweepAxis axis);
std::vector<double> sweep_values(SweepAxis axis);

struct SweepRow {
  double value = 0;
  train::EvalMetrics metrics;
  double tokens_per_sec = 0;
};

// Median over `repeats` timed greedy decodes of the sources.
double decode_speed(const model::Model& model,
                    const std::vector<std::vector<std::int32_t>>& sources, std::size_t repeats);

// Trains one run per axis value under <out>/sweep_<axis>/<value>/ and writes
// <out>/sweep_<axis>.tsv.
std::vector<SweepRow> cmd_sweep(const RunConfig& cfg, SweepAxis axis, const LineSink& log = {});

// Writes the weight, attention and diversity tables under <out>/analysis.
void cmd_analyze(const RunConfig& cfg, const std::string& checkpoint_path);

struct GradcheckReport {
  num::GradCheckResult result;
  std::string worst_parameter;
};

// Finite-difference check of the full model on one training pair with
// noise and dropout off; at most max_per_tensor coordinates per parameter.
GradcheckReport cmd_gradcheck(const RunConfig& cfg, std::size_t max_per_tensor = 0);

// Model and configuration stored in a checkpoint.
struct LoadedModel {
  RunConfig config;
  model::Model model;
};
LoadedModel load_model(const std::string& checkpoint_path);

}  // namespace mute::cli
