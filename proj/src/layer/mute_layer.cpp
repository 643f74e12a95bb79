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

#include "layer/mute_layer.hpp"

#include <algorithm>
#include <numeric>

#include "numerics/ops.hpp"
#include "shuffle/shuffle.hpp"

namespace mute::layer {

void NoiseKind::validate() const {
  if (type == NoiseType::Swap)
    require(span >= 1, ErrorKind::Config, "swap range must be >= 1");
  if (type == NoiseType::Disorder)
    require(span >= 2, ErrorKind::Config, "disorder window must be >= 2");
}

std::string NoiseKind::str() const {
  switch (type) {
    case NoiseType::Identity: return "identity";
    case NoiseType::Swap: return "swap:" + std::to_string(span);
    case NoiseType::Disorder: return "disorder:" + std::to_string(span);
    case NoiseType::Mask: return "mask";
  }
  return "identity";
}

NoiseKind NoiseKind::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  std::size_t arg = 3;
  if (colon != std::string::npos) {
    try {
      std::size_t used = 0;
      arg = std::stoul(text.substr(colon + 1), &used);
      require(used == text.size() - colon - 1, ErrorKind::Config, "bad noise argument");
    } catch (const std::logic_error&) {
      fail(ErrorKind::Config, "bad noise argument in '" + text + "'");
    }
  }
  NoiseKind kind;
  if (name == "identity") kind = identity();
  else if (name == "swap") kind = swap(arg);
  else if (name == "disorder") kind = disorder(arg);
  else if (name == "mask") kind = mask();
  else fail(ErrorKind::Config, "unknown noise kind '" + text + "'");
  if ((kind.type == NoiseType::Identity || kind.type == NoiseType::Mask) &&
      colon != std::string::npos)
    fail(ErrorKind::Config, "noise '" + name + "' takes no argument");
  kind.validate();
  return kind;
}

std::vector<NoiseKind> default_noises(std::size_t units) {
  const NoiseKind cycle[] = {NoiseKind::identity(), NoiseKind::swap(3), NoiseKind::disorder(3),
                             NoiseKind::mask()};
  std::vector<NoiseKind> out;
  for (std::size_t i = 0; i < units; ++i) out.push_back(cycle[i % 4]);
  return out;
}

const char* mode_name(LayerMode mode) {
  switch (mode) {
    case LayerMode::Plain: return "plain";
    case LayerMode::Biased: return "biased";
    case LayerMode::SeqBiased: return "seq";
  }
  return "plain";
}

LayerMode parse_mode(const std::string& text) {
  if (text == "plain") return LayerMode::Plain;
  if (text == "biased") return LayerMode::Biased;
  if (text == "seq" || text == "seqbiased") return LayerMode::SeqBiased;
  fail(ErrorKind::Config, "unknown layer mode '" + text + "' (plain, biased, seq)");
}

void MuteLayerState::validate() const {
  const std::size_t n = units.size();
  require(n >= 1, ErrorKind::Config, "a MUTE layer needs at least one unit");
  require(alpha.defined() && alpha.numel() == n, ErrorKind::Config,
          "unit weights must have one entry per unit");
  require(noises.size() == n, ErrorKind::Config, "one noise kind per unit required");
  for (const auto& k : noises) k.validate();
  require(sample_rate >= 0 && sample_rate <= 1, ErrorKind::Config,
          "sample rate must lie in [0, 1]");
  const bool wants_shuffle = mode == LayerMode::SeqBiased;
  require(wants_shuffle == shuffle.defined(), ErrorKind::Config,
          std::string("layer mode '") + mode_name(mode) +
              (wants_shuffle ? "' requires a shuffle matrix" : "' must not carry a shuffle matrix"));
  if (wants_shuffle)
    require(shuffle.shape() == num::Shape{n, n}, ErrorKind::Config,
            "shuffle matrix must be [units, units]");
}

RowMap identity_map(std::size_t n) {
  RowMap map(n);
  std::iota(map.begin(), map.end(), std::int64_t{0});
  return map;
}

RowMap swap_map(std::size_t n, std::size_t i, std::size_t delta) {
  RowMap map = identity_map(n);
  if (n < 2) return map;
  require(i < n, ErrorKind::Contract, "swap position out of range");
  const std::size_t j = std::min(i + delta, n - 1);
  std::swap(map[i], map[j]);
  return map;
}

RowMap disorder_map(std::size_t n, std::size_t start, std::span<const std::size_t> order) {
  RowMap map = identity_map(n);
  require(start + order.size() <= n, ErrorKind::Contract, "disorder window out of range");
  for (std::size_t k = 0; k < order.size(); ++k) {
    require(order[k] < order.size(), ErrorKind::Contract, "disorder order is not a permutation");
    map[start + k] = static_cast<std::int64_t>(start + order[k]);
  }
  return map;
}

RowMap mask_map(std::size_t n, std::size_t position) {
  RowMap map = identity_map(n);
  require(position < n, ErrorKind::Contract, "mask position out of range");
  map[position] = -1;
  return map;
}

RowMap draw_noise(const NoiseKind& kind, std::size_t n, Rng& rng) {
  switch (kind.type) {
    case NoiseType::Identity:
      return identity_map(n);
    case NoiseType::Swap: {
      if (n < 2) return identity_map(n);
      const std::size_t i = rng.below(n - 1);
      const std::size_t delta = 1 + rng.below(kind.span);
      return swap_map(n, i, delta);
    }
    case NoiseType::Disorder: {
      if (n < 2) return identity_map(n);
      const std::size_t len = std::min(kind.span, n);
      const std::size_t start = rng.below(n - len + 1);
      std::vector<std::size_t> order(len);
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t k = len - 1; k > 0; --k) std::swap(order[k], order[rng.below(k + 1)]);
      return disorder_map(n, start, order);
    }
    case NoiseType::Mask:
      return mask_map(n, rng.below(n));
  }
  return identity_map(n);
}

Tensor apply_row_map(const Tensor& x, const RowMap& map, const Tensor& mask_embedding) {
  return num::gather_rows(x, map, mask_embedding);
}

Tensor apply_bias(const Tensor& x, const NoiseKind& kind, Rng& rng,
                  const Tensor& mask_embedding) {
  require(x.rank() == 2 && x.dim(0) >= 1, ErrorKind::Contract, "bias input must be [n, d]");
  if (kind.type == NoiseType::Identity) return x;
  return apply_row_map(x, draw_noise(kind, x.dim(0), rng), mask_embedding);
}

bool sample_switch(Real p, Rng& rng, bool training) {
  require(p >= 0 && p <= 1, ErrorKind::Contract, "sample rate must lie in [0, 1]");
  if (!training) return false;
  return rng.bernoulli(static_cast<double>(p));
}

Tensor unit_forward(const Tensor& x, const Unit& unit, const ForwardContext& ctx,
                    UnitTrace* trace) {
  const bool drop = ctx.training && ctx.dropout > 0 && ctx.dropout_rng;
  Tensor attn = nn::relative_self_attention(x, unit.attn, unit.relpos, ctx.batch, ctx.mask,
                                            trace ? &trace->attention : nullptr);
  if (trace) trace->attention_out = attn;
  if (drop) attn = num::dropout(attn, ctx.dropout, *ctx.dropout_rng);
  const Tensor s = nn::norm_forward(num::add(x, attn), unit.norm1);
  Tensor ff = nn::ffn_forward(s, unit.ffn);
  if (trace) trace->ffn_out = ff;
  if (drop) ff = num::dropout(ff, ctx.dropout, *ctx.dropout_rng);
  return nn::norm_forward(num::add(s, ff), unit.norm2);
}

Tensor fuse_parallel(std::span<const Tensor> outputs, const Tensor& alpha) {
  require(alpha.numel() == outputs.size(), ErrorKind::Config,
          "one unit weight per output required");
  return num::weighted_sum(outputs, alpha);
}

std::vector<Tensor> accumulate_sequential(std::span<const Tensor> outputs) {
  require(!outputs.empty(), ErrorKind::Contract, "accumulation over zero unit outputs");
  std::vector<Tensor> acc;
  acc.reserve(outputs.size());
  acc.push_back(outputs[0]);
  for (std::size_t i = 1; i < outputs.size(); ++i) acc.push_back(num::add(acc.back(), outputs[i]));
  return acc;
}

Tensor fuse_sequential(std::span<const Tensor> accumulated, const Tensor& alpha) {
  require(alpha.numel() == accumulated.size(), ErrorKind::Config,
          "one unit weight per output required");
  std::vector<Tensor> normalized;
  normalized.reserve(accumulated.size());
  for (std::size_t i = 0; i < accumulated.size(); ++i)
    normalized.push_back(i == 0 ? accumulated[0]
                                : num::scale(accumulated[i], Real(1) / Real(i + 1)));
  return num::weighted_sum(normalized, alpha);
}

namespace {

// Batch-wide row maps, one per unit, or an empty vector when every unit
// sees the clean input.
std::vector<RowMap> draw_batch_noise(const MuteLayerState& state, const ForwardContext& ctx,
                                     std::size_t seq_len) {
  if (state.mode == LayerMode::Plain || !ctx.training) return {};
  if (ctx.switch_policy == SwitchPolicy::ForceOff) return {};
  require(ctx.noise_rng != nullptr, ErrorKind::Contract,
          "biased layer in training mode needs a noise RNG");
  const std::size_t units = state.size();
  std::vector<RowMap> maps(units, identity_map(ctx.batch * seq_len));
  bool any = false;
  for (std::size_t b = 0; b < ctx.batch; ++b) {
    const std::size_t len = ctx.lengths.empty() ? seq_len : ctx.lengths[b];
    bool on = true;
    if (ctx.switch_policy == SwitchPolicy::Sample)
      on = sample_switch(state.sample_rate, *ctx.noise_rng, true);
    if (!on) continue;
    for (std::size_t u = 0; u < units; ++u) {
      if (state.noises[u].type == NoiseType::Identity) continue;
      const RowMap local = draw_noise(state.noises[u], len, *ctx.noise_rng);
      for (std::size_t r = 0; r < len; ++r) {
        const std::int64_t src = local[r];
        maps[u][b * seq_len + r] =
            src < 0 ? -1 : static_cast<std::int64_t>(b * seq_len) + src;
      }
      any = true;
    }
  }
  if (!any) return {};
  return maps;
}

bool is_identity(const RowMap& map) {
  for (std::size_t r = 0; r < map.size(); ++r)
    if (map[r] != static_cast<std::int64_t>(r)) return false;
  return true;
}

}  // namespace

Tensor mute_layer_forward(const Tensor& x, const MuteLayerState& state,
                          const ForwardContext& ctx) {
  state.validate();
  require(x.rank() == 2 && ctx.batch >= 1 && x.dim(0) % ctx.batch == 0, ErrorKind::Dimension,
          "layer input " + num::shape_str(x.shape()) + " does not split into " +
              std::to_string(ctx.batch) + " sequences");
  require(ctx.lengths.empty() || ctx.lengths.size() == ctx.batch, ErrorKind::Dimension,
          "one length per sequence required");
  const std::size_t seq_len = x.dim(0) / ctx.batch;
  const std::size_t units = state.size();

  const std::vector<RowMap> maps = draw_batch_noise(state, ctx, seq_len);
  if (ctx.trace) ctx.trace->assign(units, UnitTrace{});

  std::vector<Tensor> outputs;
  outputs.reserve(units);
  for (std::size_t u = 0; u < units; ++u) {
    Tensor input = x;
    if (!maps.empty() && !is_identity(maps[u]))
      input = apply_row_map(x, maps[u], ctx.mask_embedding);
    outputs.push_back(
        unit_forward(input, state.units[u], ctx, ctx.trace ? &(*ctx.trace)[u] : nullptr));
  }

  if (state.mode != LayerMode::SeqBiased) return fuse_parallel(outputs, state.alpha);
  const std::vector<Tensor> permuted = shuffle::permute_outputs(state.shuffle, outputs);
  const std::vector<Tensor> accumulated = accumulate_sequential(permuted);
  return fuse_sequential(accumulated, state.alpha);
}

Unit init_unit(const UnitShape& shape, Rng& rng) {
  Unit unit;
  unit.attn = nn::init_attention(shape.width, shape.heads, rng);
  unit.relpos = nn::init_relpos(shape.width / shape.heads, shape.relpos_clip, rng);
  unit.norm1 = nn::init_norm(shape.width);
  unit.ffn = nn::init_ffn(shape.width, shape.ffn_width, rng);
  unit.norm2 = nn::init_norm(shape.width);
  return unit;
}

}  // namespace mute::layer
