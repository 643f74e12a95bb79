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

#include <string>
#include <vector>

#include "model/model.hpp"
#include "tasks/tasks.hpp"
#include "train/trainer.hpp"

namespace mute::cli {

// Every knob of a run, read from flat "key = value" text.
struct RunConfig {
  model::ModelConfig model;
  train::TrainConfig train;
  tasks::TaskSpec task;
  std::uint64_t task_seed = 0;  // 0: derived from the master seed
  std::string out_dir = "run";
  std::size_t probe_size = 32;
  Real attention_threshold = Real(0.05);
  std::size_t speed_probe = 2000;
  std::size_t speed_repeats = 3;
  bool export_data = false;

  // Throws a configuration error for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  bool seed_was_set() const { return seed_set_; }

  // Derives dependent fields (vocabulary sizes, task seed) and validates.
  void finalize();

  // One "key = value" line per key, in documentation order.
  std::string canonical_text() const;

  struct KeyDoc {
    std::string key;
    std::string doc;
  };
  static std::vector<KeyDoc> documented_keys();

 private:
  bool seed_set_ = false;
};

// Parses "key = value" lines; '#' starts a comment. Later lines win.
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin);
RunConfig load_config_file(const std::string& path);

// Uses MUTE_SEED when the configuration did not set a seed.
void apply_seed_fallback(RunConfig& cfg);

// Writes canonical_text() to <out_dir>/config.resolved.
void write_resolved(const RunConfig& cfg);

// Rebuilds a configuration from the text stored in a checkpoint.
RunConfig config_from_text(const std::string& text);

}  // namespace mute::cli
