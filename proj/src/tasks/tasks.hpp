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
#include <string>
#include <vector>

namespace mute::tasks {

inline constexpr std::int32_t kPad = 0;
inline constexpr std::int32_t kBos = 1;
inline constexpr std::int32_t kEos = 2;
inline constexpr std::int32_t kFirstContent = 3;
inline constexpr std::size_t kSpecialIds = 3;

enum class TaskKind { Copy, Reverse, Sort, SubstCipher };

const char* task_name(TaskKind kind);
TaskKind parse_task(const std::string& text);

struct TaskSpec {
  TaskKind kind = TaskKind::Copy;
  std::size_t vocab = 20;  // content ids, excluding the special ids
  std::size_t min_len = 5;
  std::size_t max_len = 12;
  std::uint64_t seed = 1;
  // Cipher bijection over content ids (mapping[id - kFirstContent]); empty
  // means one is derived from the seed.
  std::vector<std::int32_t> mapping;

  std::size_t total_vocab() const { return vocab + kSpecialIds; }
  // `max_sequence` bounds max_len; framing adds one more position.
  void validate(std::size_t max_sequence = SIZE_MAX) const;
};

// Content ids only; framing (bos/eos) is added by batchify.
struct Pair {
  std::vector<std::int32_t> source;
  std::vector<std::int32_t> target;

  bool operator==(const Pair&) const = default;
  bool operator<(const Pair& o) const {
    return source != o.source ? source < o.source : target < o.target;
  }
};

std::vector<std::int32_t> cipher_mapping(const TaskSpec& spec);

std::vector<Pair> generate_pairs(const TaskSpec& spec, std::size_t count);

// Target for one source under the task's rule.
std::vector<std::int32_t> make_target(const TaskSpec& spec, const std::vector<std::int32_t>& source,
                                      const std::vector<std::int32_t>& mapping);

// Row-major padded id matrices. Sources end with eos; decoder input is bos
// followed by the target; decoder output is the target followed by eos.
struct Batch {
  std::size_t rows = 0;
  std::size_t src_len = 0;
  std::size_t tgt_len = 0;
  std::vector<std::int32_t> src;
  std::vector<std::int32_t> tgt_in;
  std::vector<std::int32_t> tgt_out;
  std::vector<std::size_t> src_lengths;  // including eos
  std::vector<std::size_t> tgt_lengths;  // including the bos/eos shift
  std::vector<std::uint8_t> src_pad;     // 1 marks a pad position
  std::vector<std::uint8_t> tgt_pad;

  std::size_t target_tokens() const;
};

Batch make_batch(const std::vector<Pair>& pairs);

// Buckets by length and packs so that rows * max(padded src, padded tgt)
// stays within `token_budget`.
std::vector<Batch> batchify(const std::vector<Pair>& pairs, std::size_t token_budget);

std::vector<Pair> unbatch(const std::vector<Batch>& batches);

// One "src<TAB>tgt" line per pair, ids separated by spaces.
void export_pairs(const std::string& path, const std::vector<Pair>& pairs);
std::vector<Pair> import_pairs(const std::string& path);

}  // namespace mute::tasks
