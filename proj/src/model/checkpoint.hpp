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
#include <map>
#include <string>
#include <vector>

#include "common.hpp"
#include "numerics/tensor.hpp"

namespace mute::model {

class Model;

inline constexpr char kCheckpointMagic[4] = {'M', 'U', 'T', 'E'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorBlock {
  std::string name;
  num::Shape shape;
  std::vector<double> values;
};

// In-memory image of a checkpoint file. See docs/checkpoint-format.md.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_text;  // canonical "key = value" lines
  std::uint64_t step = 0;
  std::map<std::string, std::string> rng_states;
  std::vector<TensorBlock> blocks;

  const TensorBlock* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Parameter blocks for every named model parameter.
std::vector<TensorBlock> export_parameters(const Model& model);

inline constexpr char kOptimizerPrefix[] = "adam.";

// Copies blocks into the model's parameters. Every parameter must be
// present with a matching shape; any block outside the optimizer namespace
// that does not name a parameter is rejected.
void import_parameters(Model& model, const Checkpoint& ckpt);

}  // namespace mute::model
