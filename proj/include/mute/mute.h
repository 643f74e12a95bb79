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

#ifndef MUTE_MUTE_H_
#define MUTE_MUTE_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MUTE_API __declspec(dllexport)
#else
#define MUTE_API __attribute__((visibility("default")))
#endif

typedef enum mute_status {
  MUTE_OK = 0,
  MUTE_ERR_DIMENSION = 1,
  MUTE_ERR_CONTRACT = 2,
  MUTE_ERR_CONFIG = 3,
  MUTE_ERR_INPUT = 4,
  MUTE_ERR_FORMAT = 5,
  MUTE_ERR_IO = 6,
  MUTE_ERR_NUMERIC = 7,
  MUTE_ERR_PROJECTION = 8,
  MUTE_ERR_UNSUPPORTED = 9,
  MUTE_ERR_INVALID_ARGUMENT = 10,
  MUTE_ERR_BUFFER_TOO_SMALL = 11,
  MUTE_ERR_INTERNAL = 12
} mute_status;

/* Message of the last failed call on this thread ("" if none). */
MUTE_API const char* mute_last_error(void);
MUTE_API const char* mute_status_name(mute_status status);
MUTE_API const char* mute_version(void);

/* Receives one line of progress output. */
typedef void (*mute_line_fn)(const char* line, void* user);

/* ---- run configuration ------------------------------------------------ */

typedef struct mute_config mute_config;

MUTE_API mute_status mute_config_create(mute_config** out);
MUTE_API void mute_config_destroy(mute_config* cfg);
/* Applies "key = value" lines from a file; unknown keys are rejected. */
MUTE_API mute_status mute_config_load_file(mute_config* cfg, const char* path);
MUTE_API mute_status mute_config_set(mute_config* cfg, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated); *needed gets the full size. */
MUTE_API mute_status mute_config_get(const mute_config* cfg, const char* key, char* buf,
                                     size_t cap, size_t* needed);
/* Uses MUTE_SEED when no seed was set explicitly. */
MUTE_API mute_status mute_config_seed_fallback(mute_config* cfg);
/* Canonical "key = value" text of the fully resolved configuration. */
MUTE_API mute_status mute_config_resolved(const mute_config* cfg, char* buf, size_t cap,
                                          size_t* needed);
/* Number of documented keys and the i-th key with its description. */
MUTE_API size_t mute_config_key_count(void);
MUTE_API const char* mute_config_key_name(size_t i);
MUTE_API const char* mute_config_key_doc(size_t i);

/* ---- commands --------------------------------------------------------- */

typedef struct mute_metrics {
  double token_accuracy;
  double exact_match;
  uint64_t tokens;
  uint64_t sequences;
} mute_metrics;

typedef struct mute_train_summary {
  uint64_t steps;
  int reached_target;
  mute_metrics final_metrics;
} mute_train_summary;

/* resume_checkpoint may be NULL. */
MUTE_API mute_status mute_train(const mute_config* cfg, const char* resume_checkpoint,
                                mute_line_fn log, void* user, mute_train_summary* out);
/* data_path may be NULL to use the checkpoint's held-out set. */
MUTE_API mute_status mute_eval(const mute_config* cfg, const char* checkpoint,
                               const char* data_path, mute_metrics* out);

typedef struct mute_sweep_row {
  double value;
  mute_metrics metrics;
  double tokens_per_sec;
} mute_sweep_row;

/* axis: "units" or "sample_rate". Writes up to cap rows; *rows gets the count. */
MUTE_API mute_status mute_sweep(const mute_config* cfg, const char* axis, mute_line_fn log,
                                void* user, mute_sweep_row* out, size_t cap, size_t* rows);
MUTE_API mute_status mute_analyze(const mute_config* cfg, const char* checkpoint);

typedef struct mute_gradcheck_result {
  double max_rel_error;
  double analytic;
  double numeric;
  uint64_t coordinates;
} mute_gradcheck_result;

/* max_per_tensor == 0 checks every coordinate. Writes the worst parameter
   name into name_buf when it is non-NULL. */
MUTE_API mute_status mute_gradcheck(const mute_config* cfg, size_t max_per_tensor,
                                    mute_gradcheck_result* out, char* name_buf, size_t name_cap);

/* suites: comma-separated names or NULL for all. One line per suite goes to
   log; *all_passed is 1 when every suite passed. */
MUTE_API mute_status mute_verify(const char* suites, int inject_gradient_fault, mute_line_fn log,
                                 void* user, int* all_passed);

/* ---- trained models --------------------------------------------------- */

typedef struct mute_model mute_model;

MUTE_API mute_status mute_model_load(const char* checkpoint, mute_model** out);
MUTE_API void mute_model_destroy(mute_model* model);
/* Greedy decode of one content-id source. Output excludes eos; *finished
   is 1 when decoding stopped at eos. */
MUTE_API mute_status mute_model_decode(const mute_model* model, const int32_t* source,
                                       size_t length, size_t max_len, int32_t* out, size_t cap,
                                       size_t* out_len, int* finished);
MUTE_API mute_status mute_model_parameter_count(const mute_model* model, uint64_t* out);

#ifdef __cplusplus
}
#endif

#endif /* MUTE_MUTE_H_ */
