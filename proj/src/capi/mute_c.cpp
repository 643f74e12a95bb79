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

#include "mute/mute.h"

#include <cstring>
#include <exception>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "cli/commands.hpp"
#include "cli/run_config.hpp"
#include "cli/verify.hpp"

struct mute_config {
  mute::cli::RunConfig cfg;
};

struct mute_model {
  std::unique_ptr<mute::cli::LoadedModel> loaded;
};

namespace {

thread_local std::string t_last_error;

mute_status status_of(mute::ErrorKind kind) {
  using mute::ErrorKind;
  switch (kind) {
    case ErrorKind::Dimension: return MUTE_ERR_DIMENSION;
    case ErrorKind::Contract: return MUTE_ERR_CONTRACT;
    case ErrorKind::Config: return MUTE_ERR_CONFIG;
    case ErrorKind::Input: return MUTE_ERR_INPUT;
    case ErrorKind::Format: return MUTE_ERR_FORMAT;
    case ErrorKind::Io: return MUTE_ERR_IO;
    case ErrorKind::Numeric: return MUTE_ERR_NUMERIC;
    case ErrorKind::Projection: return MUTE_ERR_PROJECTION;
    case ErrorKind::Unsupported: return MUTE_ERR_UNSUPPORTED;
  }
  return MUTE_ERR_INTERNAL;
}

mute_status set_error(mute_status s, const std::string& msg) {
  t_last_error = msg;
  return s;
}

template <typename F>
mute_status guarded(F&& f) {
  try {
    t_last_error.clear();
    return f();
  } catch (const mute::Error& e) {
    return set_error(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(MUTE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(MUTE_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(MUTE_ERR_INTERNAL, "unknown error");
  }
}

#define MUTE_REQUIRE_ARG(cond)                                                      \
  do {                                                                              \
    if (!(cond)) return set_error(MUTE_ERR_INVALID_ARGUMENT, "invalid argument: " #cond); \
  } while (0)

mute_status copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf) return MUTE_OK;
  if (cap < s.size() + 1)
    return set_error(MUTE_ERR_BUFFER_TOO_SMALL,
                     "buffer of " + std::to_string(cap) + " bytes, need " +
                         std::to_string(s.size() + 1));
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return MUTE_OK;
}

mute_metrics to_c(const mute::train::EvalMetrics& m) {
  return {m.token_accuracy, m.exact_match, m.tokens, m.sequences};
}

mute::cli::LineSink sink(mute_line_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const std::string& line) { fn(line.c_str(), user); };
}

const std::vector<mute::cli::RunConfig::KeyDoc>& key_docs() {
  static const auto docs = mute::cli::RunConfig::documented_keys();
  return docs;
}

}  // namespace

extern "C" {

const char* mute_last_error(void) { return t_last_error.c_str(); }

const char* mute_status_name(mute_status status) {
  switch (status) {
    case MUTE_OK: return "ok";
    case MUTE_ERR_DIMENSION: return "dimension error";
    case MUTE_ERR_CONTRACT: return "contract error";
    case MUTE_ERR_CONFIG: return "configuration error";
    case MUTE_ERR_INPUT: return "input error";
    case MUTE_ERR_FORMAT: return "format error";
    case MUTE_ERR_IO: return "I/O error";
    case MUTE_ERR_NUMERIC: return "numeric error";
    case MUTE_ERR_PROJECTION: return "projection error";
    case MUTE_ERR_UNSUPPORTED: return "unsupported";
    case MUTE_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MUTE_ERR_BUFFER_TOO_SMALL: return "buffer too small";
    case MUTE_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* mute_version(void) { return "1.0.0"; }

mute_status mute_config_create(mute_config** out) {
  MUTE_REQUIRE_ARG(out);
  return guarded([&] {
    *out = new mute_config();
    return MUTE_OK;
  });
}

void mute_config_destroy(mute_config* cfg) { delete cfg; }

mute_status mute_config_load_file(mute_config* cfg, const char* path) {
  MUTE_REQUIRE_ARG(cfg && path);
  return guarded([&] {
    std::ifstream probe(path);
    mute::require(static_cast<bool>(probe), mute::ErrorKind::Io,
                  std::string("cannot read configuration ") + path);
    std::stringstream ss;
    ss << probe.rdbuf();
    mute::cli::apply_config_text(cfg->cfg, ss.str(), path);
    return MUTE_OK;
  });
}

mute_status mute_config_set(mute_config* cfg, const char* key, const char* value) {
  MUTE_REQUIRE_ARG(cfg && key && value);
  return guarded([&] {
    cfg->cfg.set(key, value);
    return MUTE_OK;
  });
}

mute_status mute_config_get(const mute_config* cfg, const char* key, char* buf, size_t cap,
                            size_t* needed) {
  MUTE_REQUIRE_ARG(cfg && key);
  return guarded([&] { return copy_out(cfg->cfg.get(key), buf, cap, needed); });
}

mute_status mute_config_seed_fallback(mute_config* cfg) {
  MUTE_REQUIRE_ARG(cfg);
  return guarded([&] {
    mute::cli::apply_seed_fallback(cfg->cfg);
    return MUTE_OK;
  });
}

mute_status mute_config_resolved(const mute_config* cfg, char* buf, size_t cap, size_t* needed) {
  MUTE_REQUIRE_ARG(cfg);
  return guarded([&] {
    mute::cli::RunConfig c = cfg->cfg;
    c.finalize();
    return copy_out(c.canonical_text(), buf, cap, needed);
  });
}

size_t mute_config_key_count(void) { return key_docs().size(); }

const char* mute_config_key_name(size_t i) {
  return i < key_docs().size() ? key_docs()[i].key.c_str() : nullptr;
}

const char* mute_config_key_doc(size_t i) {
  return i < key_docs().size() ? key_docs()[i].doc.c_str() : nullptr;
}

mute_status mute_train(const mute_config* cfg, const char* resume_checkpoint, mute_line_fn log,
                       void* user, mute_train_summary* out) {
  MUTE_REQUIRE_ARG(cfg);
  return guarded([&] {
    const auto r = mute::cli::cmd_train(cfg->cfg, sink(log, user),
                                        resume_checkpoint ? resume_checkpoint : "");
    if (out) *out = {r.steps, r.reached_target ? 1 : 0, to_c(r.final_metrics)};
    return MUTE_OK;
  });
}

mute_status mute_eval(const mute_config* cfg, const char* checkpoint, const char* data_path,
                      mute_metrics* out) {
  MUTE_REQUIRE_ARG(cfg && checkpoint);
  return guarded([&] {
    const auto m = mute::cli::cmd_eval(cfg->cfg, checkpoint, data_path ? data_path : "");
    if (out) *out = to_c(m);
    return MUTE_OK;
  });
}

mute_status mute_sweep(const mute_config* cfg, const char* axis, mute_line_fn log, void* user,
                       mute_sweep_row* out, size_t cap, size_t* rows) {
  MUTE_REQUIRE_ARG(cfg && axis);
  return guarded([&] {
    const auto result =
        mute::cli::cmd_sweep(cfg->cfg, mute::cli::parse_axis(axis), sink(log, user));
    if (rows) *rows = result.size();
    for (size_t i = 0; out && i < result.size() && i < cap; ++i)
      out[i] = {result[i].value, to_c(result[i].metrics), result[i].tokens_per_sec};
    return MUTE_OK;
  });
}

mute_status mute_analyze(const mute_config* cfg, const char* checkpoint) {
  MUTE_REQUIRE_ARG(cfg && checkpoint);
  return guarded([&] {
    mute::cli::cmd_analyze(cfg->cfg, checkpoint);
    return MUTE_OK;
  });
}

mute_status mute_gradcheck(const mute_config* cfg, size_t max_per_tensor,
                           mute_gradcheck_result* out, char* name_buf, size_t name_cap) {
  MUTE_REQUIRE_ARG(cfg);
  return guarded([&] {
    const auto r = mute::cli::cmd_gradcheck(cfg->cfg, max_per_tensor);
    if (out)
      *out = {r.result.max_rel_error, r.result.analytic, r.result.numeric, r.result.coordinates};
    if (name_buf) return copy_out(r.worst_parameter, name_buf, name_cap, nullptr);
    return MUTE_OK;
  });
}

mute_status mute_verify(const char* suites, int inject_gradient_fault, mute_line_fn log,
                        void* user, int* all_passed) {
  return guarded([&] {
    std::vector<std::string> names;
    if (suites && *suites) {
      std::stringstream ss(suites);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) names.push_back(item);
    }
    const auto results = mute::cli::run_verify(names, inject_gradient_fault != 0);
    bool ok = true;
    for (const auto& r : results) {
      ok = ok && r.passed;
      if (log) {
        const std::string line = std::string(r.passed ? "PASS " : "FAIL ") + r.name + "  " + r.detail;
        log(line.c_str(), user);
      }
    }
    if (all_passed) *all_passed = ok ? 1 : 0;
    return MUTE_OK;
  });
}

mute_status mute_model_load(const char* checkpoint, mute_model** out) {
  MUTE_REQUIRE_ARG(checkpoint && out);
  return guarded([&] {
    auto m = std::make_unique<mute_model>();
    m->loaded = std::make_unique<mute::cli::LoadedModel>(mute::cli::load_model(checkpoint));
    *out = m.release();
    return MUTE_OK;
  });
}

void mute_model_destroy(mute_model* model) { delete model; }

mute_status mute_model_decode(const mute_model* model, const int32_t* source, size_t length,
                              size_t max_len, int32_t* out, size_t cap, size_t* out_len,
                              int* finished) {
  MUTE_REQUIRE_ARG(model && (source || length == 0) && out_len);
  return guarded([&] {
    mute::require(length >= 1, mute::ErrorKind::Input, "cannot decode an empty source");
    std::vector<std::vector<std::int32_t>> src = {{source, source + length}};
    std::vector<bool> done;
    const auto hyp = mute::model::greedy_decode(model->loaded->model, src, max_len, &done);
    *out_len = hyp[0].size();
    if (finished) *finished = done[0] ? 1 : 0;
    if (cap < hyp[0].size() || (!out && !hyp[0].empty()))
      return set_error(MUTE_ERR_BUFFER_TOO_SMALL,
                       "output needs " + std::to_string(hyp[0].size()) + " ids");
    std::copy(hyp[0].begin(), hyp[0].end(), out);
    return MUTE_OK;
  });
}

mute_status mute_model_parameter_count(const mute_model* model, uint64_t* out) {
  MUTE_REQUIRE_ARG(model && out);
  return guarded([&] {
    uint64_t n = 0;
    for (const auto& p : model->loaded->model.parameters()) n += p.tensor.numel();
    *out = n;
    return MUTE_OK;
  });
}

}  // extern "C"
