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

#include "layer/mute_layer.hpp"
#include "nn/blocks.hpp"
#include "numerics/tensor.hpp"
#include "random.hpp"
#include "tasks/tasks.hpp"

namespace mute::model {

using num::Tensor;

struct ModelConfig {
  std::size_t width = 64;
  std::size_t ffn_width = 256;
  std::size_t heads = 4;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t units = 4;
  layer::LayerMode mode = layer::LayerMode::SeqBiased;
  std::vector<layer::NoiseKind> noises;  // empty: default cycle
  Real sample_rate = Real(0.85);
  std::size_t relpos_clip = 16;
  Real dropout = Real(0.1);
  Real label_smoothing = Real(0.1);
  Real penalty_weight = Real(0.1);
  std::size_t src_vocab = 23;
  std::size_t tgt_vocab = 23;
  std::size_t max_len = 64;
  bool share_attention = false;  // one self-attention shared by all units
  bool share_ffn = false;        // one FFN shared by all units

  std::vector<layer::NoiseKind> resolved_noises() const;
  void validate() const;
};

// Single-unit decoder layer: causal relative self-attention, cross-attention
// and FFN, each followed by residual add and layer norm.
struct DecoderLayer {
  nn::AttentionParams self_attn;
  nn::RelPosTable relpos;
  nn::NormParams norm1;
  nn::AttentionParams cross_attn;
  nn::NormParams norm2;
  nn::FfnParams ffn;
  nn::NormParams norm3;
};

struct OutputProjection {
  Tensor weight;  // [d, |V|]
  Tensor bias;    // [|V|]
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Padded id matrix [batch, len] with the unpadded length of each row.
struct SeqBatch {
  std::size_t batch = 0;
  std::size_t len = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::size_t> lengths;

  static SeqBatch single(std::span<const std::int32_t> tokens);
  // Content-id sources, each framed with eos and padded to the longest.
  static SeqBatch sources(std::span<const std::vector<std::int32_t>> seqs);
};

struct ForwardOptions {
  bool training = false;
  Rng* noise_rng = nullptr;
  Rng* dropout_rng = nullptr;
  layer::SwitchPolicy switch_policy = layer::SwitchPolicy::Sample;
  // When set, receives the per-unit traces of every encoder layer.
  std::vector<std::vector<layer::UnitTrace>>* encoder_trace = nullptr;
};

struct LossParts {
  Tensor total;
  Real ce = 0;
  Real penalty_sum = 0;
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t init_seed);

  const ModelConfig& config() const { return config_; }

  // Every trainable tensor exactly once, in a fixed canonical order.
  const std::vector<NamedParam>& parameters() const { return params_; }
  Tensor find(const std::string& name) const;

  std::vector<layer::MuteLayerState>& encoder_layers() { return encoder_; }
  const std::vector<layer::MuteLayerState>& encoder_layers() const { return encoder_; }
  std::vector<DecoderLayer>& decoder_layers() { return decoder_; }
  const std::vector<DecoderLayer>& decoder_layers() const { return decoder_; }
  const Tensor& src_embedding() const { return src_embed_; }
  const Tensor& tgt_embedding() const { return tgt_embed_; }
  const Tensor& mask_embedding() const { return mask_embed_; }
  const OutputProjection& output() const { return output_; }

  // Shuffle matrices of the SeqBiased encoder layers.
  std::vector<Tensor> shuffle_matrices() const;

  // Embedding lookup scaled by sqrt(d), then the encoder stack. [B*n, d].
  Tensor encode(const SeqBatch& src, const ForwardOptions& opts) const;
  // Decoder stack over embedded target inputs. [B*m, d].
  Tensor decode(const SeqBatch& tgt_in, const Tensor& enc_out, const SeqBatch& src,
                const ForwardOptions& opts) const;
  // x W_s + b. [rows, |V|].
  Tensor project(const Tensor& hidden) const;

  Tensor encode(std::span<const std::int32_t> tokens, bool training = false,
                Rng* rng = nullptr) const;

 private:
  void register_params();
  void check_ids(const SeqBatch& seqs, std::size_t vocab, const char* what) const;

  ModelConfig config_;
  Tensor src_embed_, tgt_embed_, mask_embed_;
  std::vector<layer::MuteLayerState> encoder_;
  std::vector<DecoderLayer> decoder_;
  OutputProjection output_;
  std::vector<NamedParam> params_;
};

// Label-smoothed cross entropy over positions whose target is not padding,
// plus penalty_weight times the sum of shuffle penalties.
LossParts loss_with_penalty(const Tensor& logits, std::span<const std::int32_t> targets,
                            const ModelConfig& config, std::span<const Tensor> shuffles);

// Full training-style forward for a batch: logits for every target position.
Tensor batch_logits(const Model& model, const tasks::Batch& batch, const ForwardOptions& opts);

// Targets with padding replaced by -1, ready for the loss.
std::vector<std::int32_t> loss_targets(const tasks::Batch& batch);

// Greedy decoding in evaluation mode: argmax per step (lowest id on ties),
// stopping at eos or after max_len tokens. Returned sequences exclude eos;
// `finished` (if given) reports whether each one ended with eos.
std::vector<std::vector<std::int32_t>> greedy_decode(
    const Model& model, const std::vector<std::vector<std::int32_t>>& sources,
    std::size_t max_len, std::vector<bool>* finished = nullptr);

// Shared argmax with lowest-index tie-break.
std::size_t argmax(std::span<const Real> row);

}  // namespace mute::model
