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

#include "cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "analysis/analysis.hpp"
#include "tasks/tasks.hpp"

namespace mute::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream os(path, std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path.string());
  return os;
}

std::vector<std::vector<std::int32_t>> sources_of(const std::vector<tasks::Pair>& pairs) {
  std::vector<std::vector<std::int32_t>> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.source);
  return out;
}

// Keys that may change between a run and its continuation.
bool loop_only_key(const std::string& key) {
  static const char* keys[] = {"max_steps",     "log_interval",  "checkpoint_interval",
                               "eval_interval", "target_token_acc", "target_exact_match",
                               "log_throughput", "probe_size",   "attention_threshold",
                               "speed_probe",   "speed_repeats", "export_data", "out"};
  return std::find(std::begin(keys), std::end(keys), key) != std::end(keys);
}

void require_resumable(const RunConfig& saved, const RunConfig& now) {
  for (const auto& k : RunConfig::documented_keys()) {
    if (loop_only_key(k.key)) continue;
    require(saved.get(k.key) == now.get(k.key), ErrorKind::Config,
            "cannot resume: '" + k.key + "' is " + now.get(k.key) + " but the checkpoint has " +
                saved.get(k.key));
  }
}

}  // namespace

LoadedModel load_model(const std::string& checkpoint_path) {
  const model::Checkpoint ckpt = model::load_checkpoint(checkpoint_path);
  RunConfig cfg = config_from_text(ckpt.config_text);
  model::Model m(cfg.model, train::init_seed(cfg.train.seed));
  model::import_parameters(m, ckpt);
  return {std::move(cfg), std::move(m)};
}

train::RunResult cmd_train(const RunConfig& cfg_in, const LineSink& log,
                           const std::string& resume_path) {
  RunConfig cfg = cfg_in;
  cfg.finalize();
  write_resolved(cfg);
  if (cfg.export_data) {
    const fs::path out(cfg.out_dir);
    tasks::export_pairs((out / "train_pairs.tsv").string(),
                        train::training_pairs(cfg.task, cfg.train.train_size));
    tasks::export_pairs((out / "eval_pairs.tsv").string(),
                        train::evaluation_pairs(cfg.task, cfg.train.eval_size));
  }

  model::Model m(cfg.model, train::init_seed(cfg.train.seed));
  model::Checkpoint resume;
  train::RunOptions opts;
  opts.out_dir = cfg.out_dir;
  opts.config_text = cfg.canonical_text();
  if (!resume_path.empty()) {
    resume = model::load_checkpoint(resume_path);
    require_resumable(config_from_text(resume.config_text), cfg);
    opts.resume = &resume;
  }
  if (log) {
    opts.on_log = [&](const train::StepStats& s) {
      log("step " + std::to_string(s.step) + "  loss " + fmt(s.loss, "%.4f") + "  ce " +
          fmt(s.ce, "%.4f") + "  penalty " + fmt(s.penalty_sum, "%.4f") + "  lr " +
          fmt(s.lr, "%.6f"));
    };
    opts.on_eval = [&](std::uint64_t step, const train::EvalMetrics& e) {
      log("eval step " + std::to_string(step) + "  token_acc " + fmt(e.token_accuracy, "%.4f") +
          "  exact " + fmt(e.exact_match, "%.4f"));
    };
  }
  train::RunResult r = train::run_training(m, cfg.train, cfg.task, opts);
  if (log)
    log("done after " + std::to_string(r.steps) + " steps: token_acc " +
        fmt(r.final_metrics.token_accuracy, "%.4f") + "  exact " +
        fmt(r.final_metrics.exact_match, "%.4f"));
  return r;
}

train::EvalMetrics cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                            const std::string& data_path) {
  const LoadedModel lm = load_model(checkpoint_path);
  const auto data = data_path.empty()
                        ? train::evaluation_pairs(lm.config.task, lm.config.train.eval_size)
                        : tasks::import_pairs(data_path);
  const train::EvalMetrics m = train::evaluate(lm.model, data);
  auto os = open_out(fs::path(cfg.out_dir) / "eval.tsv");
  os << "key\tvalue\n"
     << "checkpoint\t" << checkpoint_path << '\n'
     << "sequences\t" << m.sequences << '\n'
     << "tokens\t" << m.tokens << '\n'
     << "token_accuracy\t" << fmt(m.token_accuracy, "%.17g") << '\n'
     << "exact_match\t" << fmt(m.exact_match, "%.17g") << '\n';
  return m;
}

SweepAxis parse_axis(const std::string& text) {
  if (text == "units") return SweepAxis::Units;
  if (text == "sample_rate") return SweepAxis::SampleRate;
  fail(ErrorKind::Config, "unknown sweep axis '" + text + "' (expected units or sample_rate)");
}

const char* axis_name(SweepAxis axis) {
  return axis == SweepAxis::Units ? "units" : "sample_rate";
}

std::vector<double> sweep_values(SweepAxis axis) {
  if (axis == SweepAxis::Units) return {1, 2, 3, 4, 5, 6};
  return {0.5, 0.75, 0.85, 1.0};
}

double decode_speed(const model::Model& model,
                    const std::vector<std::vector<std::int32_t>>& sources, std::size_t repeats) {
  require(repeats >= 1 && !sources.empty(), ErrorKind::Contract,
          "speed measurement needs sources and at least one repeat");
  std::size_t longest = 0;
  for (const auto& s : sources) longest = std::max(longest, s.size());
  std::vector<double> rates;
  for (std::size_t r = 0; r < repeats; ++r) {
    std::vector<bool> finished;
    const auto start = std::chrono::steady_clock::now();
    const auto out = model::greedy_decode(model, sources, longest + 1, &finished);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::size_t tokens = 0;
    for (std::size_t i = 0; i < out.size(); ++i) tokens += out[i].size() + (finished[i] ? 1 : 0);
    rates.push_back(static_cast<double>(tokens) / std::max(secs, 1e-9));
  }
  std::sort(rates.begin(), rates.end());
  return rates[rates.size() / 2];
}

std::vector<SweepRow> cmd_sweep(const RunConfig& cfg_in, SweepAxis axis, const LineSink& log) {
  RunConfig base = cfg_in;
  base.finalize();
  write_resolved(base);
  const fs::path root(base.out_dir);
  const std::string axis_str = axis_name(axis);

  tasks::TaskSpec probe_task = base.task;
  probe_task.seed = derive_seed(base.task.seed, "speed");
  const auto speed_sources = sources_of(tasks::generate_pairs(probe_task, base.speed_probe));

  std::vector<SweepRow> rows;
  for (double v : sweep_values(axis)) {
    RunConfig cfg = base;
    std::string label;
    if (axis == SweepAxis::Units) {
      cfg.model.units = static_cast<std::size_t>(v);
      label = "units_" + std::to_string(cfg.model.units);
    } else {
      cfg.model.sample_rate = static_cast<Real>(v);
      label = "sample_rate_" + fmt(v, "%g");
    }
    cfg.out_dir = (root / ("sweep_" + axis_str) / label).string();
    if (log) log("sweep " + axis_str + " = " + fmt(v, "%g"));
    cfg.finalize();
    write_resolved(cfg);

    model::Model m(cfg.model, train::init_seed(cfg.train.seed));
    train::RunOptions opts;
    opts.out_dir = cfg.out_dir;
    opts.config_text = cfg.canonical_text();
    const train::RunResult r = train::run_training(m, cfg.train, cfg.task, opts);

    SweepRow row;
    row.value = v;
    row.metrics = r.final_metrics;
    row.tokens_per_sec = decode_speed(m, speed_sources, cfg.speed_repeats);
    rows.push_back(row);
    if (log)
      log("  token_acc " + fmt(row.metrics.token_accuracy, "%.4f") + "  exact " +
          fmt(row.metrics.exact_match, "%.4f") + "  decode tokens/sec " +
          fmt(row.tokens_per_sec, "%.1f"));
  }

  auto os = open_out(root / ("sweep_" + axis_str + ".tsv"));
  os << axis_str << "\ttoken_accuracy\texact_match\ttokens_per_sec\n";
  for (const auto& r : rows)
    os << fmt(r.value, "%g") << '\t' << fmt(r.metrics.token_accuracy) << '\t'
       << fmt(r.metrics.exact_match) << '\t' << fmt(r.tokens_per_sec, "%.1f") << '\n';
  return rows;
}

void cmd_analyze(const RunConfig& cfg, const std::string& checkpoint_path) {
  const LoadedModel lm = load_model(checkpoint_path);
  const auto probe = sources_of(train::evaluation_pairs(lm.config.task, cfg.probe_size));
  analysis::dump_weights(lm.model, probe, (fs::path(cfg.out_dir) / "analysis").string(),
                         cfg.attention_threshold);
}

GradcheckReport cmd_gradcheck(const RunConfig& cfg_in, std::size_t max_per_tensor) {
  RunConfig cfg = cfg_in;
  cfg.finalize();
  model::Model m(cfg.model, train::init_seed(cfg.train.seed));
  const auto pairs = train::training_pairs(cfg.task, 1);
  const tasks::Batch batch = tasks::make_batch(pairs);
  const auto targets = model::loss_targets(batch);

  std::vector<num::Tensor> params;
  for (const auto& p : m.parameters()) params.push_back(p.tensor);
  model::ForwardOptions opts;  // evaluation mode: noise and dropout off
  const auto loss = [&] {
    const num::Tensor logits = model::batch_logits(m, batch, opts);
    return model::loss_with_penalty(logits, targets, m.config(), m.shuffle_matrices()).total;
  };
  GradcheckReport report;
  report.result = num::grad_check(loss, params, Real(1e-5), max_per_tensor, cfg.train.seed);
  report.worst_parameter = m.parameters()[report.result.worst_tensor].name;
  return report;
}

}  // namespace mute::cli
