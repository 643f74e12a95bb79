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

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "layer/mute_layer.hpp"
#include "model/model.hpp"

namespace mute::analysis {

// exp(-cos(a, b)); lies in [1/e, e].
Real diversity_score(std::span<const Real> a, std::span<const Real> b);

enum class Category { AttentionWeights = 0, AttentionOutput = 1, FfnOutput = 2 };
inline constexpr std::size_t kCategories = 3;
const char* category_name(Category c);

struct DiversityReport {
  std::size_t layers = 0;
  std::size_t units = 0;
  // scores[layer][category] is a units x units row-major matrix; the
  // diagonal holds the self score 1/e.
  std::vector<std::array<std::vector<Real>, kCategories>> scores;
  std::array<Real, kCategories> grand_mean{};  // over layers and pairs i < j

  Real score(std::size_t layer, Category c, std::size_t i, std::size_t j) const;
};

// Scores every unit pair from recorded traces of one batch, averaging over
// the first lengths[b] positions of each sequence b.
DiversityReport diversity_from_traces(const std::vector<std::vector<layer::UnitTrace>>& traces,
                                      std::size_t batch, std::size_t seq_len,
                                      const std::vector<std::size_t>& lengths);

// Runs the encoder in evaluation mode over the probe sources.
DiversityReport diversity_report(const model::Model& model,
                                 const std::vector<std::vector<std::int32_t>>& probe);

inline constexpr Real kAttentionThreshold = Real(0.05);

// Writes alphas.tsv, shuffle_l<k>.tsv, attention_u<i>_l<k>.tsv (first probe
// sequence) and, when units >= 2, diversity.tsv under out_dir. Layer and
// unit numbers in file names start at 1.
void dump_weights(const model::Model& model, const std::vector<std::vector<std::int32_t>>& probe,
                  const std::string& out_dir, Real threshold = kAttentionThreshold);

// Head-averaged attention rows [query_len, key_len] of sequence b.
std::vector<Real> head_averaged(const nn::AttentionTrace& trace, std::size_t batch,
                                std::size_t b, std::size_t query_len, std::size_t key_len);

}  // namespace mute::analysis
