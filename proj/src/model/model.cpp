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

#include "model/model.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "numerics/ops.hpp"
#include "shuffle/shuffle.hpp"

namespace mute::model {

std::vector<layer::NoiseKind> ModelConfig::resolved_noises() const {
  return noises.empty() ? layer::default_noises(units) : noises;
}

void ModelConfig::validate() const {
  require(width >= 1 && ffn_width >= 1 && heads >= 1 && enc_layers >= 1 && dec_layers >= 1 &&
              units >= 1 && src_vocab >= 1 && tgt_vocab >= 1 && max_len >= 2,
          ErrorKind::Config, "model sizes must be positive");
  require(width % heads == 0, ErrorKind::Config,
          "width " + std::to_string(width) + " not divisible by " + std::to_string(heads) +
              " heads");
  require(relpos_clip >= 1, ErrorKind::Config, "relative position clip must be >= 1");
  require(noises.empty() || noises.size() == units, ErrorKind::Config,
          "noise list has " + std::to_string(noises.size()) + " entries for " +
              std::to_string(units) + " units");
  for (const auto& n : noises) n.validate();
  require(sample_rate >= 0 && sample_rate <= 1, ErrorKind::Config,
          "sample rate must lie in [0, 1]");
  require(dropout >= 0 && dropout < 1, ErrorKind::Config, "dropout must lie in [0, 1)");
  require(label_smoothing >= 0 && label_smoothing <= 1, ErrorKind::Config,
          "label smoothing must lie in [0, 1]");
  require(penalty_weight >= 0, ErrorKind::Config, "penalty weight must be >= 0");
  require(src_vocab > tasks::kSpecialIds && tgt_vocab > tasks::kSpecialIds, ErrorKind::Config,
          "vocabularies must extend past the special ids");
}

SeqBatch SeqBatch::single(std::span<const std::int32_t> tokens) {
  SeqBatch s;
  s.batch = 1;
  s.len = tokens.size();
  s.ids.assign(tokens.begin(), tokens.end());
  s.lengths = {tokens.size()};
  return s;
}

SeqBatch SeqBatch::sources(std::span<const std::vector<std::int32_t>> seqs) {
  SeqBatch s;
  s.batch = seqs.size();
  for (const auto& q : seqs) s.len = std::max(s.len, q.size() + 1);
  s.ids.assign(s.batch * s.len, tasks::kPad);
  for (std::size_t r = 0; r < s.batch; ++r) {
    std::copy(seqs[r].begin(), seqs[r].end(), s.ids.begin() + r * s.len);
    s.ids[r * s.len + seqs[r].size()] = tasks::kEos;
    s.lengths.push_back(seqs[r].size() + 1);
  }
  return s;
}

namespace {

Tensor normal_table(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::vector<Real> v(rows * cols);
  for (auto& x : v) x = static_cast<Real>(stddev * rng.normal());
  return Tensor::from({rows, cols}, std::move(v), true);
}

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  Rng rng(init_seed);
  const std::size_t d = config_.width;
  const double emb_std = 1.0 / std::sqrt(static_cast<double>(d));
  src_embed_ = normal_table(config_.src_vocab, d, emb_std, rng);
  tgt_embed_ = normal_table(config_.tgt_vocab, d, emb_std, rng);
  {
    std::vector<Real> v(d);
    for (auto& x : v) x = static_cast<Real>(rng.normal());
    mask_embed_ = Tensor::from({d}, std::move(v), true);
  }

  const layer::UnitShape shape{d, config_.ffn_width, config_.heads, config_.relpos_clip};
  const auto noises = config_.resolved_noises();
  for (std::size_t k = 0; k < config_.enc_layers; ++k) {
    layer::MuteLayerState state;
    for (std::size_t u = 0; u < config_.units; ++u) {
      layer::Unit unit = layer::init_unit(shape, rng);
      if (u > 0 && config_.share_attention) {
        unit.attn = state.units[0].attn;
        unit.relpos = state.units[0].relpos;
        unit.norm1 = state.units[0].norm1;
      }
      if (u > 0 && config_.share_ffn) {
        unit.ffn = state.units[0].ffn;
        unit.norm2 = state.units[0].norm2;
      }
      state.units.push_back(std::move(unit));
    }
    state.alpha = Tensor::full({config_.units}, Real(1) / Real(config_.units), true);
    state.noises = noises;
    state.sample_rate = config_.sample_rate;
    state.mode = config_.mode;
    if (config_.mode == layer::LayerMode::SeqBiased)
      state.shuffle = shuffle::init_matrix(config_.units, rng);
    state.validate();
    encoder_.push_back(std::move(state));
  }

  for (std::size_t k = 0; k < config_.dec_layers; ++k) {
    DecoderLayer l;
    l.self_attn = nn::init_attention(d, config_.heads, rng);
    l.relpos = nn::init_relpos(d / config_.heads, config_.relpos_clip, rng);
    l.norm1 = nn::init_norm(d);
    l.cross_attn = nn::init_attention(d, config_.heads, rng);
    l.norm2 = nn::init_norm(d);
    l.ffn = nn::init_ffn(d, config_.ffn_width, rng);
    l.norm3 = nn::init_norm(d);
    decoder_.push_back(std::move(l));
  }
  output_.weight = nn::xavier(d, config_.tgt_vocab, rng);
  output_.bias = Tensor::zeros({config_.tgt_vocab}, true);
  register_params();
}

void Model::register_params() {
  params_.clear();
  std::unordered_set<const num::Node*> seen;
  auto add = [&](const std::string& name, const Tensor& t) {
    if (seen.insert(t.node()).second) params_.push_back({name, t});
  };
  auto add_attn = [&](const std::string& p, const nn::AttentionParams& a) {
    add(p + ".wq", a.wq);
    add(p + ".wk", a.wk);
    add(p + ".wv", a.wv);
    add(p + ".wo", a.wo);
  };
  auto add_norm = [&](const std::string& p, const nn::NormParams& n) {
    add(p + ".gain", n.gain);
    add(p + ".bias", n.bias);
  };
  auto add_ffn = [&](const std::string& p, const nn::FfnParams& f) {
    add(p + ".w1", f.w1);
    add(p + ".b1", f.b1);
    add(p + ".w2", f.w2);
    add(p + ".b2", f.b2);
  };
  add("src_embedding", src_embed_);
  add("tgt_embedding", tgt_embed_);
  add("mask_embedding", mask_embed_);
  for (std::size_t k = 0; k < encoder_.size(); ++k) {
    const std::string lp = "enc." + std::to_string(k);
    const auto& state = encoder_[k];
    for (std::size_t u = 0; u < state.units.size(); ++u) {
      const std::string up = lp + ".unit." + std::to_string(u);
      const auto& unit = state.units[u];
      add_attn(up + ".attn", unit.attn);
      add(up + ".relpos", unit.relpos.table);
      add_norm(up + ".norm1", unit.norm1);
      add_ffn(up + ".ffn", unit.ffn);
      add_norm(up + ".norm2", unit.norm2);
    }
    add(lp + ".alpha", state.alpha);
    if (state.shuffle.defined()) add(lp + ".shuffle", state.shuffle);
  }
  for (std::size_t k = 0; k < decoder_.size(); ++k) {
    const std::string lp = "dec." + std::to_string(k);
    const auto& l = decoder_[k];
    add_attn(lp + ".self", l.self_attn);
    add(lp + ".relpos", l.relpos.table);
    add_norm(lp + ".norm1", l.norm1);
    add_attn(lp + ".cross", l.cross_attn);
    add_norm(lp + ".norm2", l.norm2);
    add_ffn(lp + ".ffn", l.ffn);
    add_norm(lp + ".norm3", l.norm3);
  }
  add("out.weight", output_.weight);
  add("out.bias", output_.bias);
}

Tensor Model::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  fail(ErrorKind::Format, "unknown parameter name '" + name + "'");
}

std::vector<Tensor> Model::shuffle_matrices() const {
  std::vector<Tensor> out;
  for (const auto& l : encoder_)
    if (l.shuffle.defined()) out.push_back(l.shuffle);
  return out;
}

void Model::check_ids(const SeqBatch& seqs, std::size_t vocab, const char* what) const {
  require(seqs.batch >= 1 && seqs.len >= 1 && seqs.ids.size() == seqs.batch * seqs.len &&
              seqs.lengths.size() == seqs.batch,
          ErrorKind::Dimension, std::string(what) + " batch is malformed");
  require(seqs.len <= config_.max_len, ErrorKind::Input,
          std::string(what) + " length " + std::to_string(seqs.len) + " exceeds max_len " +
              std::to_string(config_.max_len));
  for (auto id : seqs.ids)
    require(id >= 0 && static_cast<std::size_t>(id) < vocab, ErrorKind::Input,
            std::string(what) + " token id " + std::to_string(id) +
                " outside vocabulary of size " + std::to_string(vocab));
}

Tensor Model::encode(const SeqBatch& src, const ForwardOptions& opts) const {
  check_ids(src, config_.src_vocab, "source");
  const bool drop = opts.training && config_.dropout > 0 && opts.dropout_rng;
  Tensor x = num::scale(num::embedding(src_embed_, src.ids),
                        std::sqrt(static_cast<Real>(config_.width)));
  if (drop) x = num::dropout(x, config_.dropout, *opts.dropout_rng);

  layer::ForwardContext ctx;
  ctx.training = opts.training;
  ctx.batch = src.batch;
  ctx.lengths = src.lengths;
  ctx.mask = nn::key_padding_mask(src.batch, src.len, src.len, src.lengths);
  ctx.mask_embedding = mask_embed_;
  ctx.noise_rng = opts.noise_rng;
  ctx.dropout_rng = opts.dropout_rng;
  ctx.dropout = opts.training ? config_.dropout : Real(0);
  ctx.switch_policy = opts.switch_policy;
  if (opts.encoder_trace) opts.encoder_trace->assign(encoder_.size(), {});
  for (std::size_t k = 0; k < encoder_.size(); ++k) {
    ctx.trace = opts.encoder_trace ? &(*opts.encoder_trace)[k] : nullptr;
    x = layer::mute_layer_forward(x, encoder_[k], ctx);
  }
  return x;
}

Tensor Model::encode(std::span<const std::int32_t> tokens, bool training, Rng* rng) const {
  ForwardOptions opts;
  opts.training = training;
  opts.noise_rng = rng;
  opts.dropout_rng = rng;
  return encode(SeqBatch::single(tokens), opts);
}

Tensor Model::decode(const SeqBatch& tgt_in, const Tensor& enc_out, const SeqBatch& src,
                     const ForwardOptions& opts) const {
  check_ids(tgt_in, config_.tgt_vocab, "target");
  require(src.batch == tgt_in.batch && enc_out.rank() == 2 &&
              enc_out.dim(0) == src.batch * src.len,
          ErrorKind::Dimension, "decoder and encoder batches disagree");
  const bool drop = opts.training && config_.dropout > 0 && opts.dropout_rng;
  auto maybe_drop = [&](Tensor t) {
    return drop ? num::dropout(t, config_.dropout, *opts.dropout_rng) : t;
  };
  const std::size_t B = tgt_in.batch, m = tgt_in.len;
  Tensor y = num::scale(num::embedding(tgt_embed_, tgt_in.ids),
                        std::sqrt(static_cast<Real>(config_.width)));
  y = maybe_drop(y);
  const nn::AttentionMask self_mask = nn::causal_mask(B, m);
  const nn::AttentionMask cross_mask = nn::key_padding_mask(B, m, src.len, src.lengths);
  for (const auto& l : decoder_) {
    const Tensor a = nn::relative_self_attention(y, l.self_attn, l.relpos, B, self_mask);
    const Tensor s = nn::norm_forward(num::add(y, maybe_drop(a)), l.norm1);
    const Tensor c = nn::cross_attention(s, enc_out, l.cross_attn, {B, m, src.len}, cross_mask);
    const Tensor cs = nn::norm_forward(num::add(s, maybe_drop(c)), l.norm2);
    const Tensor f = nn::ffn_forward(cs, l.ffn);
    y = nn::norm_forward(num::add(cs, maybe_drop(f)), l.norm3);
  }
  return y;
}

Tensor Model::project(const Tensor& hidden) const {
  return num::add(num::matmul(hidden, output_.weight), output_.bias);
}

LossParts loss_with_penalty(const Tensor& logits, std::span<const std::int32_t> targets,
                            const ModelConfig& config, std::span<const Tensor> shuffles) {
  LossParts parts;
  const Tensor ce = num::smoothed_cross_entropy(logits, targets, config.label_smoothing);
  parts.ce = ce.item();
  parts.total = ce;
  if (!shuffles.empty()) {
    std::vector<Tensor> penalties;
    for (const auto& m : shuffles) {
      penalties.push_back(shuffle::penalty(m));
      parts.penalty_sum += penalties.back().item();
    }
    if (config.penalty_weight > 0) {
      const Tensor ones = Tensor::full({penalties.size()}, config.penalty_weight);
      parts.total = num::add(ce, num::weighted_sum(penalties, ones));
    }
  }
  return parts;
}

namespace {

SeqBatch source_batch(const tasks::Batch& b) {
  return {b.rows, b.src_len, b.src, b.src_lengths};
}

SeqBatch target_input_batch(const tasks::Batch& b) {
  return {b.rows, b.tgt_len, b.tgt_in, b.tgt_lengths};
}

}  // namespace

Tensor batch_logits(const Model& model, const tasks::Batch& batch, const ForwardOptions& opts) {
  const SeqBatch src = source_batch(batch);
  const Tensor enc = model.encode(src, opts);
  const Tensor dec = model.decode(target_input_batch(batch), enc, src, opts);
  return model.project(dec);
}

std::vector<std::int32_t> loss_targets(const tasks::Batch& batch) {
  std::vector<std::int32_t> t(batch.tgt_out);
  for (std::size_t i = 0; i < t.size(); ++i)
    if (batch.tgt_pad[i]) t[i] = -1;
  return t;
}

std::size_t argmax(std::span<const Real> row) {
  std::size_t best = 0;
  for (std::size_t v = 1; v < row.size(); ++v)
    if (row[v] > row[best]) best = v;
  return best;
}

std::vector<std::vector<std::int32_t>> greedy_decode(
    const Model& model, const std::vector<std::vector<std::int32_t>>& sources,
    std::size_t max_len, std::vector<bool>* finished) {
  num::NoGradGuard no_grad;
  constexpr std::size_t kChunk = 128;
  std::vector<std::vector<std::int32_t>> results(sources.size());
  if (finished) finished->assign(sources.size(), false);
  const std::size_t cap = std::min(max_len, model.config().max_len - 1);
  const ForwardOptions eval_opts;

  for (std::size_t start = 0; start < sources.size(); start += kChunk) {
    const std::size_t rows = std::min(kChunk, sources.size() - start);
    const SeqBatch src = SeqBatch::sources(
        std::span<const std::vector<std::int32_t>>(sources).subspan(start, rows));
    const Tensor enc = model.encode(src, eval_opts);

    std::vector<std::vector<std::int32_t>> prefix(rows, {tasks::kBos});
    std::vector<bool> done(rows, false);
    std::size_t remaining = rows;
    for (std::size_t step = 0; step < cap && remaining > 0; ++step) {
      SeqBatch tgt;
      tgt.batch = rows;
      tgt.len = step + 1;
      for (std::size_t r = 0; r < rows; ++r)
        tgt.ids.insert(tgt.ids.end(), prefix[r].begin(), prefix[r].end());
      tgt.lengths.assign(rows, tgt.len);
      const Tensor dec = model.decode(tgt, enc, src, eval_opts);
      std::vector<std::int64_t> last(rows);
      for (std::size_t r = 0; r < rows; ++r) last[r] = static_cast<std::int64_t>(r * tgt.len + step);
      const Tensor logits = model.project(num::gather_rows(dec, last));
      const std::size_t vocab = logits.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        if (done[r]) {
          prefix[r].push_back(tasks::kPad);
          continue;
        }
        const auto token = static_cast<std::int32_t>(
            argmax(logits.data().subspan(r * vocab, vocab)));
        if (token == tasks::kEos) {
          done[r] = true;
          --remaining;
          if (finished) (*finished)[start + r] = true;
          prefix[r].push_back(tasks::kPad);
        } else {
          results[start + r].push_back(token);
          prefix[r].push_back(token);
        }
      }
    }
  }
  return results;
}

}  // namespace mute::model
