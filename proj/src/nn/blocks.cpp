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

#include "nn/blocks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "numerics/ops.hpp"

namespace mute::nn {

std::size_t rel_index(std::int64_t i, std::int64_t j, std::size_t k) {
  const auto kk = static_cast<std::int64_t>(k);
  return static_cast<std::size_t>(std::clamp(j - i, -kk, kk) + kk);
}

AttentionMask key_padding_mask(std::size_t batch, std::size_t query_len, std::size_t key_len,
                               const std::vector<std::size_t>& key_lengths) {
  require(key_lengths.size() == batch, ErrorKind::Dimension,
          "key_padding_mask: one length per sequence expected");
  AttentionMask mask(batch * query_len * key_len, 0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < query_len; ++i)
      for (std::size_t j = 0; j < std::min(key_lengths[b], key_len); ++j)
        mask[(b * query_len + i) * key_len + j] = 1;
  return mask;
}

AttentionMask causal_mask(std::size_t batch, std::size_t len) {
  AttentionMask mask(batch * len * len, 0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j <= i; ++j) mask[(b * len + i) * len + j] = 1;
  return mask;
}

AttentionMask mask_and(const AttentionMask& a, const AttentionMask& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  require(a.size() == b.size(), ErrorKind::Dimension, "mask_and: mask sizes differ");
  AttentionMask out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] && b[i];
  return out;
}

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                      const RelPosTable* rel, const AttentionLayout& layout,
                      const AttentionMask& mask, AttentionTrace* trace) {
  const std::size_t B = layout.batch, M = layout.query_len, N = layout.key_len;
  require(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, ErrorKind::Dimension,
          "attention inputs must be rank 2");
  const std::size_t d = q.dim(1);
  require(heads >= 1 && d % heads == 0, ErrorKind::Config,
          "width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  require(q.dim(0) == B * M && k.dim(0) == B * N && v.dim(0) == B * N && k.dim(1) == d &&
              v.dim(1) == d,
          ErrorKind::Dimension,
          "attention shapes q" + num::shape_str(q.shape()) + " k" + num::shape_str(k.shape()) +
              " v" + num::shape_str(v.shape()) + " do not fit the layout");
  require(N >= 1, ErrorKind::Contract, "attention over an empty key set");
  require(mask.empty() || mask.size() == B * M * N, ErrorKind::Dimension,
          "attention mask size does not match the layout");
  const std::size_t dh = d / heads;
  std::size_t clip = 0;
  if (rel) {
    clip = rel->clip;
    require(rel->table.rank() == 2 && rel->table.dim(0) == 2 * clip + 1 &&
                rel->table.dim(1) == dh,
            ErrorKind::Dimension, "relative position table must be [2k+1, head_width]");
  }
  const Real inv = Real(1) / std::sqrt(Real(dh));
  const Real* qd = q.data().data();
  const Real* kd = k.data().data();
  const Real* vd = v.data().data();
  const Real* rd = rel ? rel->table.data().data() : nullptr;

  std::vector<Real> probs(B * heads * M * N, Real(0));
  std::vector<Real> out(B * M * d, Real(0));
  std::vector<Real> logits(N);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < M; ++i) {
        const Real* qi = qd + (b * M + i) * d + h * dh;
        Real mx = -std::numeric_limits<Real>::infinity();
        bool any = false;
        for (std::size_t j = 0; j < N; ++j) {
          if (!mask.empty() && !mask[(b * M + i) * N + j]) continue;
          any = true;
          const Real* kj = kd + (b * N + j) * d + h * dh;
          Real s = 0;
          if (rd) {
            const Real* r = rd + rel_index(static_cast<std::int64_t>(i),
                                           static_cast<std::int64_t>(j), clip) * dh;
            for (std::size_t c = 0; c < dh; ++c) s += qi[c] * (kj[c] + r[c]);
          } else {
            for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          }
          logits[j] = s * inv;
          mx = std::max(mx, logits[j]);
        }
        require(any, ErrorKind::Contract,
                "attention query " + std::to_string(i) + " of sequence " + std::to_string(b) +
                    " has every key masked");
        Real* p = probs.data() + ((b * heads + h) * M + i) * N;
        Real total = 0;
        for (std::size_t j = 0; j < N; ++j) {
          if (!mask.empty() && !mask[(b * M + i) * N + j]) continue;
          p[j] = std::exp(logits[j] - mx);
          total += p[j];
        }
        Real* oi = out.data() + (b * M + i) * d + h * dh;
        for (std::size_t j = 0; j < N; ++j) {
          if (p[j] == Real(0)) continue;
          p[j] /= total;
          const Real* vj = vd + (b * N + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }
  if (trace) {
    trace->weights = probs;
    trace->heads = heads;
  }

  std::vector<Tensor> parents{q, k, v};
  if (rel) parents.push_back(rel->table);
  const bool has_rel = rel != nullptr;
  return num::make_result(
      "attention", {B * M, d}, std::move(out), std::move(parents),
      [B, M, N, d, dh, heads, clip, inv, has_rel, probs = std::move(probs)](num::Node& o) {
        auto grad_of = [&o](std::size_t i) -> Real* {
          num::Node& p = *o.parents[i];
          return p.requires_grad ? p.grad_buffer().data() : nullptr;
        };
        Real* gq = grad_of(0);
        Real* gk = grad_of(1);
        Real* gv = grad_of(2);
        Real* gr = has_rel ? grad_of(3) : nullptr;
        const Real* qd = o.parents[0]->data.data();
        const Real* kd = o.parents[1]->data.data();
        const Real* vd = o.parents[2]->data.data();
        const Real* rd = has_rel ? o.parents[3]->data.data() : nullptr;
        std::vector<Real> dp(N), ds(N);
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < M; ++i) {
              const Real* p = probs.data() + ((b * heads + h) * M + i) * N;
              const Real* go = o.grad.data() + (b * M + i) * d + h * dh;
              Real dot = 0;
              for (std::size_t j = 0; j < N; ++j) {
                dp[j] = 0;
                if (p[j] == Real(0)) continue;
                const Real* vj = vd + (b * N + j) * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) dp[j] += go[c] * vj[c];
                dot += dp[j] * p[j];
                if (gv) {
                  Real* gvj = gv + (b * N + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gvj[c] += p[j] * go[c];
                }
              }
              const Real* qi = qd + (b * M + i) * d + h * dh;
              for (std::size_t j = 0; j < N; ++j) {
                if (p[j] == Real(0)) continue;
                const Real dsj = p[j] * (dp[j] - dot) * inv;
                const Real* kj = kd + (b * N + j) * d + h * dh;
                const std::size_t r = rd ? rel_index(static_cast<std::int64_t>(i),
                                                     static_cast<std::int64_t>(j), clip)
                                         : 0;
                if (gq) {
                  Real* gqi = gq + (b * M + i) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c)
                    gqi[c] += dsj * (kj[c] + (rd ? rd[r * dh + c] : Real(0)));
                }
                if (gk) {
                  Real* gkj = gk + (b * N + j) * d + h * dh;
                  for (std::size_t c = 0; c < dh; ++c) gkj[c] += dsj * qi[c];
                }
                if (gr)
                  for (std::size_t c = 0; c < dh; ++c) gr[r * dh + c] += dsj * qi[c];
              }
            }
          }
        }
      });
}

Tensor relative_self_attention(const Tensor& x, const AttentionParams& params,
                               const RelPosTable& relpos, std::size_t batch,
                               const AttentionMask& mask, AttentionTrace* trace) {
  require(batch >= 1 && x.rank() == 2 && x.dim(0) % batch == 0, ErrorKind::Dimension,
          "self-attention input " + num::shape_str(x.shape()) + " does not split into " +
              std::to_string(batch) + " sequences");
  const std::size_t n = x.dim(0) / batch;
  const Tensor q = num::matmul(x, params.wq);
  const Tensor k = num::matmul(x, params.wk);
  const Tensor v = num::matmul(x, params.wv);
  const Tensor ctx =
      attention_core(q, k, v, params.heads, &relpos, {batch, n, n}, mask, trace);
  return num::matmul(ctx, params.wo);
}

Tensor cross_attention(const Tensor& y, const Tensor& enc_out, const AttentionParams& params,
                       const AttentionLayout& layout, const AttentionMask& mask,
                       AttentionTrace* trace) {
  require(enc_out.rank() == 2 && enc_out.dim(0) >= 1, ErrorKind::Contract,
          "cross-attention needs a nonempty encoder output");
  const Tensor q = num::matmul(y, params.wq);
  const Tensor k = num::matmul(enc_out, params.wk);
  const Tensor v = num::matmul(enc_out, params.wv);
  const Tensor ctx = attention_core(q, k, v, params.heads, nullptr, layout, mask, trace);
  return num::matmul(ctx, params.wo);
}

Tensor ffn_forward(const Tensor& s, const FfnParams& params) {
  const Tensor hidden = num::relu(num::add(num::matmul(s, params.w1), params.b1));
  return num::add(num::matmul(hidden, params.w2), params.b2);
}

Tensor norm_forward(const Tensor& x, const NormParams& params) {
  return num::layer_norm(x, params.gain, params.bias, kNormEps);
}

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<Real> w(fan_in * fan_out);
  for (auto& x : w) x = static_cast<Real>(rng.uniform(-bound, bound));
  return Tensor::from({fan_in, fan_out}, std::move(w), true);
}

AttentionParams init_attention(std::size_t d, std::size_t heads, Rng& rng) {
  require(heads >= 1 && d % heads == 0, ErrorKind::Config,
          "width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
  AttentionParams p;
  p.wq = xavier(d, d, rng);
  p.wk = xavier(d, d, rng);
  p.wv = xavier(d, d, rng);
  p.wo = xavier(d, d, rng);
  p.heads = heads;
  return p;
}

RelPosTable init_relpos(std::size_t head_width, std::size_t clip, Rng& rng) {
  require(clip >= 1, ErrorKind::Config, "relative position clip must be >= 1");
  const std::size_t rows = 2 * clip + 1;
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + head_width));
  std::vector<Real> t(rows * head_width);
  for (auto& x : t) x = static_cast<Real>(rng.uniform(-bound, bound));
  return {Tensor::from({rows, head_width}, std::move(t), true), clip};
}

FfnParams init_ffn(std::size_t d, std::size_t d_ff, Rng& rng) {
  require(d_ff >= 1, ErrorKind::Config, "FFN width must be >= 1");
  FfnParams p;
  p.w1 = xavier(d, d_ff, rng);
  p.b1 = Tensor::zeros({d_ff}, true);
  p.w2 = xavier(d_ff, d, rng);
  p.b2 = Tensor::zeros({d}, true);
  return p;
}

NormParams init_norm(std::size_t d) {
  return {Tensor::full({d}, Real(1), true), Tensor::zeros({d}, true)};
}

}  // namespace mute::nn
