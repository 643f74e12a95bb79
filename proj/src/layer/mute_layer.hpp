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
#include <span>
#include <string>
#include <vector>

#include "nn/blocks.hpp"
#include "numerics/tensor.hpp"
#include "random.hpp"

namespace mute::layer {

using num::Tensor;

enum class NoiseType { Identity, Swap, Disorder, Mask };

struct NoiseKind {
  NoiseType type = NoiseType::Identity;
  std::size_t span = 0;  // swap range or disorder window

  static NoiseKind identity() { return {NoiseType::Identity, 0}; }
  static NoiseKind swap(std::size_t range) { return {NoiseType::Swap, range}; }
  static NoiseKind disorder(std::size_t window) { return {NoiseType::Disorder, window}; }
  static NoiseKind mask() { return {NoiseType::Mask, 0}; }

  void validate() const;
  // "identity", "swap:3", "disorder:3", "mask"
  std::string str() const;
  static NoiseKind parse(const std::string& text);

  bool operator==(const NoiseKind&) const = default;
};

// Identity, Swap(3), Disorder(3), Mask, repeated cyclically to `units`.
std::vector<NoiseKind> default_noises(std::size_t units);

enum class LayerMode { Plain, Biased, SeqBiased };

const char* mode_name(LayerMode mode);
LayerMode parse_mode(const std::string& text);

// One attention + FFN bundle with its own parameters and post-norms.
struct Unit {
  nn::AttentionParams attn;
  nn::RelPosTable relpos;
  nn::NormParams norm1;
  nn::FfnParams ffn;
  nn::NormParams norm2;
};

struct MuteLayerState {
  std::vector<Unit> units;
  Tensor alpha;  // [I], unconstrained
  std::vector<NoiseKind> noises;
  Real sample_rate = Real(0.85);
  LayerMode mode = LayerMode::Plain;
  Tensor shuffle;  // [I, I]; defined iff mode == SeqBiased

  std::size_t size() const { return units.size(); }
  // Throws a configuration error on mode/shuffle or count mismatches.
  void validate() const;
};

// Output row r takes input row map[r]; -1 selects the mask embedding.
using RowMap = std::vector<std::int64_t>;

RowMap identity_map(std::size_t n);
// Rows i and min(i + delta, n - 1) exchanged.
RowMap swap_map(std::size_t n, std::size_t i, std::size_t delta);
// Rows start..start+len-1 reordered: position start+k takes start+order[k].
RowMap disorder_map(std::size_t n, std::size_t start, std::span<const std::size_t> order);
RowMap mask_map(std::size_t n, std::size_t position);

// One random application of `kind` to a length-n sequence. Swap and
// Disorder degrade to the identity when n == 1.
RowMap draw_noise(const NoiseKind& kind, std::size_t n, Rng& rng);

Tensor apply_row_map(const Tensor& x, const RowMap& map, const Tensor& mask_embedding);

// Bias module for a single sequence x [n, d].
Tensor apply_bias(const Tensor& x, const NoiseKind& kind, Rng& rng,
                  const Tensor& mask_embedding);

// True with probability p in training; always false in evaluation.
bool sample_switch(Real p, Rng& rng, bool training = true);

enum class SwitchPolicy { Sample, ForceOn, ForceOff };

// Per-unit intermediates for the diversity analysis.
struct UnitTrace {
  nn::AttentionTrace attention;
  Tensor attention_out;  // self-attention term before the residual
  Tensor ffn_out;        // FFN term before the residual
};

struct ForwardContext {
  bool training = false;
  std::size_t batch = 1;
  // Unpadded length of each sequence; empty means every row is content.
  std::vector<std::size_t> lengths;
  nn::AttentionMask mask;  // self-attention visibility
  Tensor mask_embedding;   // [d]
  Rng* noise_rng = nullptr;
  Rng* dropout_rng = nullptr;
  Real dropout = 0;
  SwitchPolicy switch_policy = SwitchPolicy::Sample;
  std::vector<UnitTrace>* trace = nullptr;  // filled with one entry per unit
};

// Residual self-attention then residual FFN, each followed by layer norm.
Tensor unit_forward(const Tensor& x, const Unit& unit, const ForwardContext& ctx,
                    UnitTrace* trace = nullptr);

// sum_i alpha_i * outputs_i.
Tensor fuse_parallel(std::span<const Tensor> outputs, const Tensor& alpha);

// Prefix sums: acc_i = acc_{i-1} + g_i with acc_0 = 0.
std::vector<Tensor> accumulate_sequential(std::span<const Tensor> outputs);

// sum_i alpha_i * acc_i / i for i = 1..I.
Tensor fuse_sequential(std::span<const Tensor> accumulated, const Tensor& alpha);

Tensor mute_layer_forward(const Tensor& x, const MuteLayerState& state,
                          const ForwardContext& ctx);

struct UnitShape {
  std::size_t width = 0;
  std::size_t ffn_width = 0;
  std::size_t heads = 1;
  std::size_t relpos_clip = 8;
};

Unit init_unit(const UnitShape& shape, Rng& rng);

}  // namespace mute::layer
