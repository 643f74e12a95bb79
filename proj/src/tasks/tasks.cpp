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

#include "tasks/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "common.hpp"
#include "random.hpp"

namespace mute::tasks {

const char* task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Copy: return "copy";
    case TaskKind::Reverse: return "reverse";
    case TaskKind::Sort: return "sort";
    case TaskKind::SubstCipher: return "cipher";
  }
  return "copy";
}

TaskKind parse_task(const std::string& text) {
  if (text == "copy") return TaskKind::Copy;
  if (text == "reverse") return TaskKind::Reverse;
  if (text == "sort") return TaskKind::Sort;
  if (text == "cipher") return TaskKind::SubstCipher;
  fail(ErrorKind::Config, "unknown task '" + text + "' (copy, reverse, sort, cipher)");
}

void TaskSpec::validate(std::size_t max_sequence) const {
  require(vocab >= 1, ErrorKind::Config, "task vocabulary needs at least one content id");
  require(min_len >= 1 && min_len <= max_len, ErrorKind::Config,
          "task lengths must satisfy 1 <= min_len <= max_len");
  require(max_len < max_sequence, ErrorKind::Config,
          "task max_len " + std::to_string(max_len) + " leaves no room for eos within " +
              std::to_string(max_sequence) + " positions");
  if (!mapping.empty()) {
    require(mapping.size() == vocab, ErrorKind::Config, "cipher mapping must cover every id");
    std::vector<bool> seen(vocab, false);
    for (auto m : mapping) {
      const auto idx = m - kFirstContent;
      require(idx >= 0 && static_cast<std::size_t>(idx) < vocab && !seen[idx],
              ErrorKind::Config, "cipher mapping is not a bijection on content ids");
      seen[idx] = true;
    }
  }
}

std::vector<std::int32_t> cipher_mapping(const TaskSpec& spec) {
  if (!spec.mapping.empty()) return spec.mapping;
  std::vector<std::int32_t> m(spec.vocab);
  std::iota(m.begin(), m.end(), kFirstContent);
  Rng rng(derive_seed(spec.seed, "cipher"));
  for (std::size_t k = m.size(); k > 1; --k) std::swap(m[k - 1], m[rng.below(k)]);
  return m;
}

std::vector<std::int32_t> make_target(const TaskSpec& spec, const std::vector<std::int32_t>& source,
                                      const std::vector<std::int32_t>& mapping) {
  std::vector<std::int32_t> target = source;
  switch (spec.kind) {
    case TaskKind::Copy: break;
    case TaskKind::Reverse: std::reverse(target.begin(), target.end()); break;
    case TaskKind::Sort: std::sort(target.begin(), target.end()); break;
    case TaskKind::SubstCipher:
      for (auto& t : target) t = mapping.at(static_cast<std::size_t>(t - kFirstContent));
      break;
  }
  return target;
}

std::vector<Pair> generate_pairs(const TaskSpec& spec, std::size_t count) {
  spec.validate();
  const auto mapping = spec.kind == TaskKind::SubstCipher ? cipher_mapping(spec)
                                                          : std::vector<std::int32_t>{};
  Rng rng(derive_seed(spec.seed, "pairs"));
  std::vector<Pair> pairs;
  pairs.reserve(count);
  for (std::size_t p = 0; p < count; ++p) {
    const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
    Pair pair;
    pair.source.resize(len);
    for (auto& t : pair.source) t = kFirstContent + static_cast<std::int32_t>(rng.below(spec.vocab));
    pair.target = make_target(spec, pair.source, mapping);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::size_t Batch::target_tokens() const {
  return std::accumulate(tgt_lengths.begin(), tgt_lengths.end(), std::size_t{0});
}

Batch make_batch(const std::vector<Pair>& pairs) {
  require(!pairs.empty(), ErrorKind::Contract, "cannot build an empty batch");
  Batch b;
  b.rows = pairs.size();
  for (const auto& p : pairs) {
    b.src_len = std::max(b.src_len, p.source.size() + 1);
    b.tgt_len = std::max(b.tgt_len, p.target.size() + 1);
  }
  b.src.assign(b.rows * b.src_len, kPad);
  b.tgt_in.assign(b.rows * b.tgt_len, kPad);
  b.tgt_out.assign(b.rows * b.tgt_len, kPad);
  b.src_pad.assign(b.rows * b.src_len, 1);
  b.tgt_pad.assign(b.rows * b.tgt_len, 1);
  for (std::size_t r = 0; r < b.rows; ++r) {
    const auto& p = pairs[r];
    std::int32_t* src = b.src.data() + r * b.src_len;
    std::copy(p.source.begin(), p.source.end(), src);
    src[p.source.size()] = kEos;
    std::fill_n(b.src_pad.begin() + r * b.src_len, p.source.size() + 1, 0);
    b.src_lengths.push_back(p.source.size() + 1);

    std::int32_t* in = b.tgt_in.data() + r * b.tgt_len;
    std::int32_t* out = b.tgt_out.data() + r * b.tgt_len;
    in[0] = kBos;
    std::copy(p.target.begin(), p.target.end(), in + 1);
    std::copy(p.target.begin(), p.target.end(), out);
    out[p.target.size()] = kEos;
    std::fill_n(b.tgt_pad.begin() + r * b.tgt_len, p.target.size() + 1, 0);
    b.tgt_lengths.push_back(p.target.size() + 1);
  }
  return b;
}

std::vector<Batch> batchify(const std::vector<Pair>& pairs, std::size_t token_budget) {
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = pairs[a];
    const auto& pb = pairs[b];
    if (pa.source.size() != pb.source.size()) return pa.source.size() < pb.source.size();
    return pa.target.size() < pb.target.size();
  });

  std::vector<Batch> batches;
  std::vector<Pair> current;
  std::size_t widest = 0;
  for (std::size_t idx : order) {
    const Pair& p = pairs[idx];
    const std::size_t width = std::max(p.source.size(), p.target.size()) + 1;
    require(width <= token_budget, ErrorKind::Config,
            "a single pair needs " + std::to_string(width) + " tokens, above the batch budget of " +
                std::to_string(token_budget));
    const std::size_t new_widest = std::max(widest, width);
    if (!current.empty() && (current.size() + 1) * new_widest > token_budget) {
      batches.push_back(make_batch(current));
      current.clear();
      widest = 0;
    }
    current.push_back(p);
    widest = std::max(widest, width);
  }
  if (!current.empty()) batches.push_back(make_batch(current));
  return batches;
}

std::vector<Pair> unbatch(const std::vector<Batch>& batches) {
  std::vector<Pair> pairs;
  for (const auto& b : batches) {
    for (std::size_t r = 0; r < b.rows; ++r) {
      Pair p;
      const std::int32_t* src = b.src.data() + r * b.src_len;
      p.source.assign(src, src + b.src_lengths[r] - 1);
      const std::int32_t* out = b.tgt_out.data() + r * b.tgt_len;
      p.target.assign(out, out + b.tgt_lengths[r] - 1);
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

namespace {

std::string join_ids(const std::vector<std::int32_t>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(ids[i]);
  }
  return out;
}

std::vector<std::int32_t> split_ids(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::int32_t> ids;
  std::int32_t v;
  while (is >> v) ids.push_back(v);
  require(is.eof(), ErrorKind::Format, "non-numeric token in '" + text + "'");
  return ids;
}

}  // namespace

void export_pairs(const std::string& path, const std::vector<Pair>& pairs) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path);
  for (const auto& p : pairs) os << join_ids(p.source) << '\t' << join_ids(p.target) << '\n';
  require(static_cast<bool>(os), ErrorKind::Io, "write failed for " + path);
}

std::vector<Pair> import_pairs(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::Io, "cannot read " + path);
  std::vector<Pair> pairs;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    require(tab != std::string::npos, ErrorKind::Format, "missing tab in pair line");
    pairs.push_back({split_ids(line.substr(0, tab)), split_ids(line.substr(tab + 1))});
  }
  return pairs;
}

}  // namespace mute::tasks
