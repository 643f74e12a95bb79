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

// Command-line front end over the C API.

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "mute/mute.h"

namespace {

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::string mode;
  std::optional<std::size_t> units;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("-c,--config", f.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", f.sets, "override one key, as key=value (repeatable)");
  cmd->add_option("--mode", f.mode, "encoder layer mode: plain, biased or seq");
  cmd->add_option("--units", f.units, "units per encoder layer");
  cmd->add_option("--seed", f.seed, "master seed (falls back to MUTE_SEED)");
  cmd->add_option("-o,--out", f.out, "run directory for all outputs");
}

class Failure {
 public:
  explicit Failure(mute_status s) : status(s) {}
  mute_status status;
};

void check(mute_status s) {
  if (s != MUTE_OK) throw Failure(s);
}

struct Config {
  mute_config* handle = nullptr;
  Config() { check(mute_config_create(&handle)); }
  ~Config() { mute_config_destroy(handle); }
  Config(const Config&) = delete;
  Config& operator=(const Config&) = delete;
};

void build_config(Config& cfg, const ConfigFlags& f) {
  if (!f.config_path.empty()) check(mute_config_load_file(cfg.handle, f.config_path.c_str()));
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "--set expects key=value, got '%s'\n", kv.c_str());
      throw Failure(MUTE_ERR_CONFIG);
    }
    check(mute_config_set(cfg.handle, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  if (!f.mode.empty()) check(mute_config_set(cfg.handle, "mode", f.mode.c_str()));
  if (f.units) check(mute_config_set(cfg.handle, "units", std::to_string(*f.units).c_str()));
  if (f.seed) check(mute_config_set(cfg.handle, "seed", std::to_string(*f.seed).c_str()));
  if (!f.out.empty()) check(mute_config_set(cfg.handle, "out", f.out.c_str()));
  check(mute_config_seed_fallback(cfg.handle));
  // Validate everything before any work starts.
  size_t needed = 0;
  check(mute_config_resolved(cfg.handle, nullptr, 0, &needed));
}

void print_line(const char* line, void* user) {
  if (user == nullptr) std::printf("%s\n", line);
  std::fflush(stdout);
}

void print_metrics(const mute_metrics& m) {
  std::printf("token_accuracy\t%.6f\nexact_match\t%.6f\nsequences\t%llu\n", m.token_accuracy,
              m.exact_match, static_cast<unsigned long long>(m.sequences));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MUTE: multi-unit transformer toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", mute_version());

  ConfigFlags train_flags, eval_flags, sweep_flags, analyze_flags, grad_flags;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "train a model; writes metrics.log and checkpoints");
  add_config_flags(train, train_flags);
  std::string resume;
  train->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  train->add_flag("-q,--quiet", quiet, "suppress progress lines");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint; writes eval.tsv");
  add_config_flags(eval, eval_flags);
  std::string eval_ckpt, eval_data;
  eval->add_option("checkpoint", eval_ckpt, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", eval_data, "src<TAB>tgt pairs file instead of the held-out set")
      ->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "train and time one run per axis value");
  add_config_flags(sweep, sweep_flags);
  std::string axis;
  sweep->add_option("axis", axis, "units or sample_rate")
      ->required()
      ->check(CLI::IsMember({"units", "sample_rate"}));

  auto* analyze = app.add_subcommand("analyze", "dump unit weights, attention and diversity tables");
  add_config_flags(analyze, analyze_flags);
  std::string analyze_ckpt;
  analyze->add_option("checkpoint", analyze_ckpt, "checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);

  auto* verify = app.add_subcommand("verify", "run the property suites");
  std::vector<std::string> suites;
  bool inject = false;
  verify->add_option("--suite", suites, "suite to run (repeatable; default all)")
      ->check(CLI::IsMember({"grad", "shuffle", "equivalence", "determinism", "diversity"}));
  verify->add_flag("--inject-gradient-fault", inject,
                   "corrupt the relu backward pass to exercise the gradient suite");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full model");
  add_config_flags(gradcheck, grad_flags);
  std::size_t per_tensor = 64;
  gradcheck->add_option("--per-tensor", per_tensor,
                        "coordinates sampled per parameter (0 = all)");
  double tolerance = 1e-4;
  gradcheck->add_option("--tolerance", tolerance, "maximum relative error");

  auto* keys = app.add_subcommand("keys", "list configuration keys and defaults");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      Config cfg;
      build_config(cfg, train_flags);
      mute_train_summary s{};
      check(mute_train(cfg.handle, resume.empty() ? nullptr : resume.c_str(),
                       quiet ? nullptr : print_line, nullptr, &s));
      return 0;
    }
    if (*eval) {
      Config cfg;
      build_config(cfg, eval_flags);
      mute_metrics m{};
      check(mute_eval(cfg.handle, eval_ckpt.c_str(), eval_data.empty() ? nullptr : eval_data.c_str(),
                      &m));
      print_metrics(m);
      return 0;
    }
    if (*sweep) {
      Config cfg;
      build_config(cfg, sweep_flags);
      std::vector<mute_sweep_row> rows(8);
      size_t n = 0;
      check(mute_sweep(cfg.handle, axis.c_str(), print_line, nullptr, rows.data(), rows.size(), &n));
      std::printf("%s\ttoken_accuracy\texact_match\ttokens_per_sec\n", axis.c_str());
      for (size_t i = 0; i < n && i < rows.size(); ++i)
        std::printf("%g\t%.4f\t%.4f\t%.1f\n", rows[i].value, rows[i].metrics.token_accuracy,
                    rows[i].metrics.exact_match, rows[i].tokens_per_sec);
      return 0;
    }
    if (*analyze) {
      Config cfg;
      build_config(cfg, analyze_flags);
      check(mute_analyze(cfg.handle, analyze_ckpt.c_str()));
      return 0;
    }
    if (*verify) {
      std::string joined;
      for (const auto& s : suites) joined += (joined.empty() ? "" : ",") + s;
      int ok = 0;
      check(mute_verify(joined.empty() ? nullptr : joined.c_str(), inject ? 1 : 0, print_line,
                        nullptr, &ok));
      std::printf("%s\n", ok ? "all suites passed" : "verification FAILED");
      return ok ? 0 : 1;
    }
    if (*gradcheck) {
      Config cfg;
      build_config(cfg, grad_flags);
      mute_gradcheck_result r{};
      char name[256] = {0};
      check(mute_gradcheck(cfg.handle, per_tensor, &r, name, sizeof name));
      const bool ok = r.max_rel_error < tolerance;
      std::printf("%s max relative error %.3e over %llu coordinates (worst: %s, analytic %.6e, "
                  "numeric %.6e)\n",
                  ok ? "PASS" : "FAIL", r.max_rel_error,
                  static_cast<unsigned long long>(r.coordinates), name, r.analytic, r.numeric);
      return ok ? 0 : 1;
    }
    if (*keys) {
      for (size_t i = 0; i < mute_config_key_count(); ++i)
        std::printf("%-22s %s\n", mute_config_key_name(i), mute_config_key_doc(i));
      return 0;
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error (%s): %s\n", mute_status_name(f.status), mute_last_error());
    return 2;
  }
  return 0;
}
