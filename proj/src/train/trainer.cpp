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

#include "train/trainer.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "shuffle/shuffle.hpp"

namespace mute::train {

void TrainConfig::validate() const {
  require(max_steps >= 1 && batch_tokens >= 1 && warmup_steps >= 1 && log_interval >= 1 &&
              checkpoint_interval >= 1 && eval_interval >= 1 && train_size >= 1 &&
              eval_size >= 1,
          ErrorKind::Config, "training sizes and intervals must be positive");
  require(lr_scale > 0 && clip_norm > 0 && adam_eps > 0, ErrorKind::Config,
          "learning-rate scale, clip norm and Adam epsilon must be positive");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, ErrorKind::Config,
          "Adam betas must lie in [0, 1)");
  require(target_token_acc >= 0 && target_token_acc <= 1 && target_exact_match >= 0 &&
              target_exact_match <= 1,
          ErrorKind::Config, "accuracy targets must lie in [0, 1]");
}

AdamState make_adam(std::span<const Tensor> params, Real beta1, Real beta2, Real eps) {
  AdamState s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  for (const auto& p : params) {
    s.m.emplace_back(p.numel(), Real(0));
    s.v.emplace_back(p.numel(), Real(0));
  }
  return s;
}

void adam_step(std::span<Tensor> params, AdamState& state, Real lr) {
  require(state.m.size() == params.size() && state.v.size() == params.size(), ErrorKind::Contract,
          "optimizer state does not match the parameter list");
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto* node = params[p].node();
    require(state.m[p].size() == params[p].numel(), ErrorKind::Contract,
            "optimizer moment shape mismatch");
    for (Real g : node->grad)
      if (!std::isfinite(g))
        fail(ErrorKind::Numeric,
             "non-finite gradient in parameter #" + std::to_string(p) + "; optimizer step aborted");
  }
  ++state.step;
  const Real t = static_cast<Real>(state.step);
  const Real c1 = Real(1) - std::pow(state.beta1, t);
  const Real c2 = Real(1) - std::pow(state.beta2, t);
  using Arr = Eigen::Array<Real, Eigen::Dynamic, 1>;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto& grad = params[p].node()->grad;
    auto w = params[p].mutable_data();
    const auto n = static_cast<Eigen::Index>(w.size());
    Eigen::Map<Arr> m(state.m[p].data(), n), v(state.v[p].data(), n), x(w.data(), n);
    if (grad.empty()) {
      m *= state.beta1;
      v *= state.beta2;
    } else {
      Eigen::Map<const Arr> g(grad.data(), n);
      m = state.beta1 * m + (Real(1) - state.beta1) * g;
      v = state.beta2 * v + (Real(1) - state.beta2) * g.square();
    }
    x -= lr * (m / c1) / ((v / c2).sqrt() + state.eps);
  }
}

Real learning_rate(std::uint64_t step, std::size_t width, std::size_t warmup, Real scale) {
  const Real s = static_cast<Real>(std::max<std::uint64_t>(step, 1));
  const Real w = static_cast<Real>(warmup);
  return scale / std::sqrt(static_cast<Real>(width)) *
         std::min(Real(1) / std::sqrt(s), s / (w * std::sqrt(w)));
}

Real clip_gradients(std::span<Tensor> params, Real max_norm) {
  Real sq = 0;
  for (const auto& p : params)
    for (Real g : p.node()->grad) sq += g * g;
  const Real norm = std::sqrt(sq);
  if (norm > max_norm) {
    const Real f = max_norm / norm;
    for (auto& p : params)
      for (Real& g : p.node()->grad) g *= f;
  }
  return norm;
}

Streams Streams::from_seed(std::uint64_t seed) {
  return {Rng(derive_seed(seed, "data")), Rng(derive_seed(seed, "noise")),
          Rng(derive_seed(seed, "dropout"))};
}

std::uint64_t init_seed(std::uint64_t master) { return derive_seed(master, "init"); }

namespace {

// Graph buffers are large and short-lived; keeping them on the heap instead
// of fresh mmap pages avoids a page-fault storm every step.
void tune_allocator() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

Trainer::Trainer(model::Model& model, const TrainConfig& config)
    : model_(model), config_(config), streams_(Streams::from_seed(config.seed)) {
  tune_allocator();
  config_.validate();
  for (const auto& p : model_.parameters()) params_.push_back(p.tensor);
  adam_ = make_adam(params_, config_.beta1, config_.beta2, config_.adam_eps);
}

StepStats Trainer::train_step(const tasks::Batch& batch) {
  const auto start = std::chrono::steady_clock::now();
  for (auto& p : params_) p.zero_grad();

  model::ForwardOptions opts;
  opts.training = true;
  opts.noise_rng = &streams_.noise;
  opts.dropout_rng = &streams_.dropout;
  const Tensor logits = model::batch_logits(model_, batch, opts);
  const auto targets = model::loss_targets(batch);
  const auto shuffles = model_.shuffle_matrices();
  const model::LossParts parts =
      model::loss_with_penalty(logits, targets, model_.config(), shuffles);
  require(std::isfinite(parts.total.item()), ErrorKind::Numeric,
          "non-finite loss at step " + std::to_string(adam_.step + 1));
  num::backward(parts.total);

  for (std::size_t p = 0; p < params_.size(); ++p)
    for (Real g : params_[p].node()->grad)
      if (!std::isfinite(g))
        fail(ErrorKind::Numeric, "non-finite gradient in '" + model_.parameters()[p].name +
                                     "' at step " + std::to_string(adam_.step + 1));
  clip_gradients(params_, config_.clip_norm);

  StepStats stats;
  stats.lr = learning_rate(adam_.step + 1, model_.config().width, config_.warmup_steps,
                           config_.lr_scale);
  adam_step(params_, adam_, stats.lr);
  for (auto& m : model_.shuffle_matrices()) shuffle::project(m);

  stats.step = adam_.step;
  stats.loss = parts.total.item();
  stats.ce = parts.ce;
  stats.penalty_sum = parts.penalty_sum;
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  stats.tokens_per_sec = secs > 0 ? static_cast<double>(batch.target_tokens()) / secs : 0.0;
  return stats;
}

model::Checkpoint Trainer::checkpoint(const std::string& config_text) const {
  model::Checkpoint ckpt;
  ckpt.config_text = config_text;
  ckpt.step = adam_.step;
  ckpt.rng_states["data"] = streams_.data.save_state();
  ckpt.rng_states["noise"] = streams_.noise.save_state();
  ckpt.rng_states["dropout"] = streams_.dropout.save_state();
  ckpt.blocks = model::export_parameters(model_);
  const auto& named = model_.parameters();
  for (std::size_t p = 0; p < named.size(); ++p) {
    const auto& shape = named[p].tensor.shape();
    ckpt.blocks.push_back({std::string(model::kOptimizerPrefix) + "m/" + named[p].name, shape,
                           {adam_.m[p].begin(), adam_.m[p].end()}});
    ckpt.blocks.push_back({std::string(model::kOptimizerPrefix) + "v/" + named[p].name, shape,
                           {adam_.v[p].begin(), adam_.v[p].end()}});
  }
  return ckpt;
}

void Trainer::restore(const model::Checkpoint& ckpt) {
  model::import_parameters(model_, ckpt);
  const auto& named = model_.parameters();
  for (std::size_t p = 0; p < named.size(); ++p) {
    for (const char* which : {"m/", "v/"}) {
      const std::string key = std::string(model::kOptimizerPrefix) + which + named[p].name;
      const auto* b = ckpt.find(key);
      require(b != nullptr && b->values.size() == named[p].tensor.numel(), ErrorKind::Format,
              "checkpoint lacks optimizer state '" + key + "'");
      auto& dst = which[0] == 'm' ? adam_.m[p] : adam_.v[p];
      std::transform(b->values.begin(), b->values.end(), dst.begin(),
                     [](double v) { return static_cast<Real>(v); });
    }
  }
  for (const auto& b : ckpt.blocks) {
    if (b.name.rfind(model::kOptimizerPrefix, 0) != 0) continue;
    const std::string rest = b.name.substr(std::string(model::kOptimizerPrefix).size());
    require(rest.size() > 2 && (rest.rfind("m/", 0) == 0 || rest.rfind("v/", 0) == 0),
            ErrorKind::Format, "unknown optimizer block '" + b.name + "'");
    model_.find(rest.substr(2));
  }
  auto load = [&](const char* name, Rng& rng) {
    const auto it = ckpt.rng_states.find(name);
    require(it != ckpt.rng_states.end(), ErrorKind::Format,
            std::string("checkpoint lacks RNG stream '") + name + "'");
    rng.load_state(it->second);
  };
  load("data", streams_.data);
  load("noise", streams_.noise);
  load("dropout", streams_.dropout);
  adam_.step = ckpt.step;
}

EvalMetrics evaluate(const DecodeFn& decode, const std::vector<tasks::Pair>& data) {
  require(!data.empty(), ErrorKind::Contract, "evaluation over an empty dataset");
  std::vector<std::vector<std::int32_t>> sources;
  sources.reserve(data.size());
  for (const auto& p : data) sources.push_back(p.source);
  std::vector<bool> finished(data.size(), false);
  const auto hyps = decode(sources, finished);
  require(hyps.size() == data.size(), ErrorKind::Contract,
          "decoder returned the wrong number of hypotheses");

  EvalMetrics m;
  std::size_t correct = 0, exact = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::vector<std::int32_t> ref = data[i].target;
    ref.push_back(tasks::kEos);
    std::vector<std::int32_t> hyp = hyps[i];
    if (finished[i]) hyp.push_back(tasks::kEos);
    for (std::size_t t = 0; t < ref.size(); ++t)
      if (t < hyp.size() && hyp[t] == ref[t]) ++correct;
    m.tokens += ref.size();
    if (hyp == ref) ++exact;
  }
  m.sequences = data.size();
  m.token_accuracy = static_cast<double>(correct) / static_cast<double>(m.tokens);
  m.exact_match = static_cast<double>(exact) / static_cast<double>(m.sequences);
  return m;
}

EvalMetrics evaluate(const model::Model& model, const std::vector<tasks::Pair>& data) {
  std::size_t longest = 0;
  for (const auto& p : data) longest = std::max(longest, p.target.size());
  return evaluate(
      [&](const std::vector<std::vector<std::int32_t>>& sources, std::vector<bool>& finished) {
        return model::greedy_decode(model, sources, longest + 1, &finished);
      },
      data);
}

std::vector<tasks::Pair> training_pairs(const tasks::TaskSpec& task, std::size_t count) {
  tasks::TaskSpec t = task;
  t.seed = derive_seed(task.seed, "train");
  if (t.kind == tasks::TaskKind::SubstCipher && t.mapping.empty()) t.mapping = tasks::cipher_mapping(task);
  return tasks::generate_pairs(t, count);
}

std::vector<tasks::Pair> evaluation_pairs(const tasks::TaskSpec& task, std::size_t count) {
  tasks::TaskSpec t = task;
  t.seed = derive_seed(task.seed, "eval");
  if (t.kind == tasks::TaskKind::SubstCipher && t.mapping.empty()) t.mapping = tasks::cipher_mapping(task);
  return tasks::generate_pairs(t, count);
}

namespace {

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void open_append(std::ofstream& os, const std::filesystem::path& path, bool truncate) {
  os.open(path, truncate ? std::ios::trunc : std::ios::app);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path.string());
}

// Drops lines whose leading step field lies beyond `step`, so a resumed run
// does not repeat what the interrupted one logged after its checkpoint.
void trim_log(const std::filesystem::path& path, std::uint64_t step) {
  std::ifstream in(path);
  if (!in) return;
  std::string kept, line;
  while (std::getline(in, line)) {
    if (std::strtoull(line.c_str(), nullptr, 10) > step) continue;
    kept += line;
    kept += '\n';
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << kept;
}

}  // namespace

RunResult run_training(model::Model& model, const TrainConfig& config,
                       const tasks::TaskSpec& task, const RunOptions& options) {
  config.validate();
  const auto train_set = training_pairs(task, config.train_size);
  const auto eval_set = evaluation_pairs(task, config.eval_size);
  const auto batches = tasks::batchify(train_set, config.batch_tokens);

  Trainer trainer(model, config);
  if (options.resume) trainer.restore(*options.resume);

  const bool write = !options.out_dir.empty();
  const std::filesystem::path out(options.out_dir);
  const auto shuffles = model.shuffle_matrices();
  std::ofstream metrics, evals, shuffle_log;
  if (write) {
    std::filesystem::create_directories(out);
    // A resumed run keeps the trace written up to the checkpoint.
    const bool fresh = options.resume == nullptr;
    if (!fresh)
      for (const char* name : {"metrics.log", "eval.log", "shuffle.log"})
        trim_log(out / name, options.resume->step);
    open_append(metrics, out / "metrics.log", fresh);
    open_append(evals, out / "eval.log", fresh);
    if (!shuffles.empty()) open_append(shuffle_log, out / "shuffle.log", fresh);
  }
  const bool early_stop = config.target_token_acc > 0 || config.target_exact_match > 0;

  RunResult result;
  while (trainer.step() < config.max_steps) {
    const auto& batch = batches[trainer.streams().data.below(batches.size())];
    const StepStats stats = trainer.train_step(batch);
    const std::uint64_t step = stats.step;
    if (step == 1 || step % config.log_interval == 0) {
      result.log.push_back(stats);
      if (write) {
        metrics << step << '\t' << format_real(stats.loss) << '\t' << format_real(stats.ce) << '\t'
                << format_real(stats.penalty_sum) << '\t' << format_real(stats.lr) << '\t'
                << (config.log_throughput ? format_real(stats.tokens_per_sec) : std::string("0"))
                << '\n';
        metrics.flush();
        for (std::size_t k = 0; k < shuffles.size(); ++k)
          shuffle_log << step << '\t' << k + 1 << '\t'
                      << format_real(shuffle::penalty_value(shuffles[k].data(),
                                                            shuffles[k].dim(0)))
                      << '\t' << format_real(shuffle::hardness(shuffles[k])) << '\n';
        shuffle_log.flush();
      }
      if (options.on_log) options.on_log(stats);
    }
    if (write && step % config.checkpoint_interval == 0)
      model::save_checkpoint((out / ("step_" + std::to_string(step) + ".ckpt")).string(),
                             trainer.checkpoint(options.config_text));
    if (early_stop && step % config.eval_interval == 0) {
      const EvalMetrics m = evaluate(model, eval_set);
      if (write) {
        evals << step << '\t' << format_real(m.token_accuracy) << '\t'
              << format_real(m.exact_match) << '\n';
        evals.flush();
      }
      if (options.on_eval) options.on_eval(step, m);
      if (m.token_accuracy >= config.target_token_acc &&
          m.exact_match >= config.target_exact_match) {
        result.reached_target = true;
        break;
      }
    }
  }
  result.steps = trainer.step();
  result.final_metrics = evaluate(model, eval_set);
  if (write) {
    model::save_checkpoint((out / "final.ckpt").string(), trainer.checkpoint(options.config_text));
    std::ofstream summary;
    open_append(summary, out / "summary.tsv", true);
    summary << "key\tvalue\n"
            << "steps\t" << result.steps << '\n'
            << "token_accuracy\t" << format_real(result.final_metrics.token_accuracy) << '\n'
            << "exact_match\t" << format_real(result.final_metrics.exact_match) << '\n'
            << "eval_sequences\t" << result.final_metrics.sequences << '\n'
            << "reached_target\t" << (result.reached_target ? 1 : 0) << '\n';
  }
  return result;
}

}  // namespace mute::train
