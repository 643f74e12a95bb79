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
#include <vector>

#include "numerics/tensor.hpp"
#include "random.hpp"

namespace mute::nn {

using num::Tensor;

struct AttentionParams {
  Tensor wq, wk, wv, wo;  // each [d, d]; row vector convention x * W
  std::size_t heads = 1;

  std::size_t width() const { return wq.dim(0); }
  std::size_t head_width() const { return width() / heads; }
};

// Learnable key-side offset vectors for clipped relative distances.
struct RelPosTable {
  Tensor table;  // [2 * clip + 1, head_width]
  std::size_t clip = 1;
};

struct FfnParams {
  Tensor w1, b1;  // [d, d_ff], [d_ff]
  Tensor w2, b2;  // [d_ff, d], [d]
};

struct NormParams {
  Tensor gain, bias;  // [d]
};

inline constexpr Real kNormEps = Real(1e-6);

// clip(j - i, -k, k) + k.
std::size_t rel_index(std::int64_t i, std::int64_t j, std::size_t k);

// Sequences are packed as [batch * len, d] row blocks, all padded to the
// same length within one call.
struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t query_len = 1;
  std::size_t key_len = 1;
};

// One byte per (sequence, query, key); nonzero means the key is visible.
// An empty mask allows everything.
using AttentionMask = std::vector<std::uint8_t>;

AttentionMask key_padding_mask(std::size_t batch, std::size_t query_len, std::size_t key_len,
                               const std::vector<std::size_t>& key_lengths);
AttentionMask causal_mask(std::size_t batch, std::size_t len);
// Elementwise AND of two masks of equal size (an empty mask is all-true).
AttentionMask mask_and(const AttentionMask& a, const AttentionMask& b);

// Receives the post-softmax weights, laid out [batch, heads, query, key].
struct AttentionTrace {
  std::vector<Real> weights;
  std::size_t heads = 0;
};

// Multihead scaled dot-product attention over already projected q/k/v.
// When `rel` is given, key j seen from query i is shifted by the table row
// rel_index(i, j, clip). Differentiable in q, k, v and the table.
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                      const RelPosTable* rel, const AttentionLayout& layout,
                      const AttentionMask& mask, AttentionTrace* trace = nullptr);

// Attention term of a self-attention sub-layer (no residual).
Tensor relative_self_attention(const Tensor& x, const AttentionParams& params,
                               const RelPosTable& relpos, std::size_t batch,
                               const AttentionMask& mask = {}, AttentionTrace* trace = nullptr);

// Queries from y, keys and values from enc_out; no positional term.
Tensor cross_attention(const Tensor& y, const Tensor& enc_out, const AttentionParams& params,
                       const AttentionLayout& layout, const AttentionMask& mask = {},
                       AttentionTrace* trace = nullptr);

// relu(s W1 + b1) W2 + b2, rowwise.
Tensor ffn_forward(const Tensor& s, const FfnParams& params);

Tensor norm_forward(const Tensor& x, const NormParams& params);

AttentionParams init_attention(std::size_t d, std::size_t heads, Rng& rng);
RelPosTable init_relpos(std::size_t head_width, std::size_t clip, Rng& rng);
FfnParams init_ffn(std::size_t d, std::size_t d_ff, Rng& rng);
NormParams init_norm(std::size_t d);

// Uniform Xavier/Glorot initialization for a [fan_in, fan_out] matrix.
Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace mute::nn
