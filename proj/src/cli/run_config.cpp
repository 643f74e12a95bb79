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

#include "cli/run_config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace mute::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  require(!v.empty() && v[0] != '-' && *end == '\0' && errno == 0, ErrorKind::Config,
          "'" + key + "' expects a non-negative integer, got '" + v + "'");
  return x;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

Real parse_real(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  require(!v.empty() && *end == '\0' && errno == 0, ErrorKind::Config,
          "'" + key + "' expects a number, got '" + v + "'");
  return static_cast<Real>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorKind::Config, "'" + key + "' expects true or false, got '" + v + "'");
}

// Shortest text that reads back to the same value.
std::string fmt_real(Real v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

std::string fmt_noises(const std::vector<layer::NoiseKind>& noises) {
  if (noises.empty()) return "default";
  std::string out;
  for (std::size_t i = 0; i < noises.size(); ++i) out += (i ? "," : "") + noises[i].str();
  return out;
}

std::vector<layer::NoiseKind> parse_noises(const std::string& v) {
  if (v == "default") return {};
  std::vector<layer::NoiseKind> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(layer::NoiseKind::parse(trim(item)));
  require(!out.empty(), ErrorKind::Config, "'noises' needs at least one entry");
  return out;
}

struct Key {
  const char* name;
  const char* doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define SIZE_KEY(name, field, doc)                                                   \
  Key {                                                                              \
    name, doc, [](const RunConfig& c) { return std::to_string(c.field); },           \
        [](RunConfig& c, const std::string& v) { c.field = parse_size(name, v); }    \
  }
#define REAL_KEY(name, field, doc)                                                   \
  Key {                                                                              \
    name, doc, [](const RunConfig& c) { return fmt_real(c.field); },                 \
        [](RunConfig& c, const std::string& v) { c.field = parse_real(name, v); }    \
  }
#define BOOL_KEY(name, field, doc)                                                   \
  Key {                                                                              \
    name, doc, [](const RunConfig& c) { return fmt_bool(c.field); },                 \
        [](RunConfig& c, const std::string& v) { c.field = parse_bool(name, v); }    \
  }

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = {
      // model
      SIZE_KEY("width", model.width, "model width d"),
      SIZE_KEY("ffn_width", model.ffn_width, "FFN hidden width"),
      SIZE_KEY("heads", model.heads, "attention heads"),
      SIZE_KEY("enc_layers", model.enc_layers, "encoder layers"),
      SIZE_KEY("dec_layers", model.dec_layers, "decoder layers"),
      SIZE_KEY("units", model.units, "units per encoder layer"),
      Key{"mode", "plain | biased | seq",
          [](const RunConfig& c) { return std::string(layer::mode_name(c.model.mode)); },
          [](RunConfig& c, const std::string& v) { c.model.mode = layer::parse_mode(v); }},
      Key{"noises", "comma list of identity, swap:<k>, disorder:<k>, mask; or default",
          [](const RunConfig& c) { return fmt_noises(c.model.noises); },
          [](RunConfig& c, const std::string& v) { c.model.noises = parse_noises(v); }},
      REAL_KEY("sample_rate", model.sample_rate, "probability that the noises are on"),
      SIZE_KEY("relpos_clip", model.relpos_clip, "relative position clipping distance"),
      REAL_KEY("dropout", model.dropout, "dropout rate"),
      REAL_KEY("label_smoothing", model.label_smoothing, "label smoothing"),
      REAL_KEY("penalty_weight", model.penalty_weight, "weight of the shuffle penalty"),
      SIZE_KEY("max_decode_len", model.max_len, "longest sequence the model handles"),
      BOOL_KEY("share_attention", model.share_attention, "one self-attention for all units"),
      BOOL_KEY("share_ffn", model.share_ffn, "one FFN for all units"),
      // task
      Key{"task", "copy | reverse | sort | cipher",
          [](const RunConfig& c) { return std::string(tasks::task_name(c.task.kind)); },
          [](RunConfig& c, const std::string& v) { c.task.kind = tasks::parse_task(v); }},
      SIZE_KEY("vocab", task.vocab, "content vocabulary size"),
      SIZE_KEY("min_length", task.min_len, "shortest source"),
      SIZE_KEY("max_length", task.max_len, "longest source"),
      Key{"task_seed", "data seed; 0 derives it from seed",
          [](const RunConfig& c) { return std::to_string(c.task_seed); },
          [](RunConfig& c, const std::string& v) { c.task_seed = parse_u64("task_seed", v); }},
      // training
      Key{"seed", "master seed",
          [](const RunConfig& c) { return std::to_string(c.train.seed); },
          [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64("seed", v); }},
      SIZE_KEY("max_steps", train.max_steps, "training steps"),
      SIZE_KEY("batch_tokens", train.batch_tokens, "token budget per batch"),
      SIZE_KEY("warmup_steps", train.warmup_steps, "learning-rate warmup steps"),
      REAL_KEY("lr_scale", train.lr_scale, "learning-rate schedule scale"),
      REAL_KEY("clip_norm", train.clip_norm, "global gradient norm limit"),
      SIZE_KEY("log_interval", train.log_interval, "steps between metrics lines"),
      SIZE_KEY("checkpoint_interval", train.checkpoint_interval, "steps between checkpoints"),
      SIZE_KEY("eval_interval", train.eval_interval, "steps between early-stop evaluations"),
      SIZE_KEY("train_size", train.train_size, "training pairs"),
      SIZE_KEY("eval_size", train.eval_size, "held-out pairs"),
      REAL_KEY("target_token_acc", train.target_token_acc, "early-stop token accuracy; 0 off"),
      REAL_KEY("target_exact_match", train.target_exact_match, "early-stop exact match; 0 off"),
      BOOL_KEY("log_throughput", train.log_throughput,
               "write measured tokens/sec to metrics.log (not reproducible)"),
      // analysis and output
      SIZE_KEY("probe_size", probe_size, "held-out sequences used by analyze"),
      REAL_KEY("attention_threshold", attention_threshold, "attention dump cutoff"),
      SIZE_KEY("speed_probe", speed_probe, "sequences decoded per speed measurement"),
      SIZE_KEY("speed_repeats", speed_repeats, "speed measurements (median reported)"),
      BOOL_KEY("export_data", export_data, "write train_pairs.tsv and eval_pairs.tsv"),
      Key{"out", "run directory",
          [](const RunConfig& c) { return c.out_dir; },
          [](RunConfig& c, const std::string& v) {
            require(!v.empty(), ErrorKind::Config, "'out' must not be empty");
            c.out_dir = v;
          }},
  };
  return keys;
}

#undef SIZE_KEY
#undef REAL_KEY
#undef BOOL_KEY

const Key& lookup(const std::string& key) {
  for (const auto& k : key_table())
    if (key == k.name) return k;
  fail(ErrorKind::Config, "unknown configuration key '" + key + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  lookup(key).set(*this, trim(value));
  if (key == "seed") seed_set_ = true;
}

std::string RunConfig::get(const std::string& key) const { return lookup(key).get(*this); }

void RunConfig::finalize() {
  model.src_vocab = task.total_vocab();
  model.tgt_vocab = task.total_vocab();
  task.seed = task_seed != 0 ? task_seed : derive_seed(train.seed, "task");
  model.validate();
  train.validate();
  require(model.max_len >= 2, ErrorKind::Config, "max_decode_len must be >= 2");
  task.validate(model.max_len - 1);
  require(probe_size >= 1 && speed_probe >= 1 && speed_repeats >= 1, ErrorKind::Config,
          "probe sizes and repeats must be positive");
  require(attention_threshold >= 0 && attention_threshold <= 1, ErrorKind::Config,
          "attention_threshold must lie in [0, 1]");
}

std::string RunConfig::canonical_text() const {
  std::string out;
  for (const auto& k : key_table()) out += std::string(k.name) + " = " + k.get(*this) + "\n";
  return out;
}

std::vector<RunConfig::KeyDoc> RunConfig::documented_keys() {
  std::vector<KeyDoc> out;
  const RunConfig defaults;
  for (const auto& k : key_table())
    out.push_back({k.name, std::string(k.doc) + " (default " + k.get(defaults) + ")"});
  return out;
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    require(eq != std::string::npos, ErrorKind::Config, where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    try {
      cfg.set(key, line.substr(eq + 1));
    } catch (const Error& e) {
      throw Error(e.kind(), where + ": " + e.what());
    }
  }
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::Io, "cannot read configuration " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  RunConfig cfg;
  apply_config_text(cfg, ss.str(), path);
  return cfg;
}

void apply_seed_fallback(RunConfig& cfg) {
  if (cfg.seed_was_set()) return;
  if (const char* env = std::getenv("MUTE_SEED"); env && *env) {
    try {
      cfg.set("seed", env);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string("MUTE_SEED: ") + e.what());
    }
  }
}

void write_resolved(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  require(!ec, ErrorKind::Io, "cannot create " + cfg.out_dir + ": " + ec.message());
  const auto path = std::filesystem::path(cfg.out_dir) / "config.resolved";
  std::ofstream os(path, std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path.string());
  os << cfg.canonical_text();
}

RunConfig config_from_text(const std::string& text) {
  RunConfig cfg;
  apply_config_text(cfg, text, "checkpoint");
  cfg.finalize();
  return cfg;
}

}  // namespace mute::cli
