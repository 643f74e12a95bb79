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

// Plain-loop reference implementations used as test oracles. Nothing here
// calls into the library's numeric ops; the only dependency is reading
// parameter values out of a model.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "model/model.hpp"
#include "numerics/tensor.hpp"

namespace oracle {

struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

inline Mat from_tensor(const mute::num::Tensor& t) {
  Mat m(t.rank() == 1 ? 1 : t.dim(0), t.rank() == 1 ? t.dim(0) : t.dim(1));
  for (std::size_t i = 0; i < m.v.size(); ++i) m.v[i] = t.data()[i];
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Mat add(const Mat& a, const Mat& b) {
  Mat c = a;
  for (std::size_t i = 0; i < c.v.size(); ++i) c.v[i] += b.v[i];
  return c;
}

inline Mat add_row(const Mat& a, const Mat& row) {
  Mat c = a;
  for (std::size_t i = 0; i < c.rows; ++i)
    for (std::size_t j = 0; j < c.cols; ++j) c(i, j) += row.v[j];
  return c;
}

inline std::vector<double> softmax(const std::vector<double>& x) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double e : x) mx = std::max(mx, e);
  std::vector<double> out(x.size());
  double total = 0;
  for (std::size_t i = 0; i < x.size(); ++i) total += out[i] = std::exp(x[i] - mx);
  for (auto& e : out) e /= total;
  return out;
}

// Mean first, then variance around it.
inline Mat layer_norm(const Mat& x, const Mat& gain, const Mat& bias, double eps) {
  Mat out(x.rows, x.cols);
  for (std::size_t r = 0; r < x.rows; ++r) {
    double mu = 0;
    for (std::size_t c = 0; c < x.cols; ++c) mu += x(r, c);
    mu /= double(x.cols);
    double var = 0;
    for (std::size_t c = 0; c < x.cols; ++c) var += (x(r, c) - mu) * (x(r, c) - mu);
    var /= double(x.cols);
    for (std::size_t c = 0; c < x.cols; ++c)
      out(r, c) = (x(r, c) - mu) / std::sqrt(var + eps) * gain.v[c] + bias.v[c];
  }
  return out;
}

inline Mat relu(Mat a) {
  for (auto& e : a.v) e = e > 0 ? e : 0.0;
  return a;
}

using Visible = std::function<bool(std::size_t query, std::size_t key)>;

// Per-head loop over explicit q/k/v projections. `rel` (may be null) holds
// 2*clip+1 key offset rows of head width.
inline Mat attention(const Mat& xq, const Mat& xkv, const Mat& wq, const Mat& wk, const Mat& wv,
                     const Mat& wo, std::size_t heads, const Mat* rel, std::size_t clip,
                     const Visible& visible) {
  const Mat q = matmul(xq, wq), k = matmul(xkv, wk), v = matmul(xkv, wv);
  const std::size_t d = q.cols, dh = d / heads;
  Mat concat(xq.rows, d);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < xq.rows; ++i) {
      std::vector<double> logits;
      std::vector<std::size_t> keys;
      for (std::size_t j = 0; j < xkv.rows; ++j) {
        if (!visible(i, j)) continue;
        long off = long(j) - long(i);
        off = std::clamp(off, -long(clip), long(clip));
        double s = 0;
        for (std::size_t c = 0; c < dh; ++c) {
          double key = k(j, h * dh + c);
          if (rel) key += (*rel)(std::size_t(off + long(clip)), c);
          s += q(i, h * dh + c) * key;
        }
        logits.push_back(s / std::sqrt(double(dh)));
        keys.push_back(j);
      }
      const auto p = softmax(logits);
      for (std::size_t n = 0; n < keys.size(); ++n)
        for (std::size_t c = 0; c < dh; ++c) concat(i, h * dh + c) += p[n] * v(keys[n], h * dh + c);
    }
  }
  return matmul(concat, wo);
}

// Logits of a single-unit relative-position encoder-decoder for one pair,
// read from a model whose encoder layers each hold exactly one unit with a
// fusion weight of one. `src` must already end with eos; `tgt_in` starts
// with bos. Returns [tgt_in.size(), vocab].
inline Mat single_unit_transformer(const mute::model::Model& m, const std::vector<int32_t>& src,
                                   const std::vector<int32_t>& tgt_in) {
  const auto& cfg = m.config();
  const double eps = double(mute::nn::kNormEps);
  const double sd = std::sqrt(double(cfg.width));
  auto P = [&](const std::string& name) { return from_tensor(m.find(name)); };
  auto embed = [&](const std::string& table, const std::vector<int32_t>& ids) {
    const Mat t = P(table);
    Mat x(ids.size(), t.cols);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t c = 0; c < t.cols; ++c) x(i, c) = t(std::size_t(ids[i]), c) * sd;
    return x;
  };
  auto ffn = [&](const Mat& s, const std::string& p) {
    return add_row(matmul(relu(add_row(matmul(s, P(p + ".w1")), P(p + ".b1"))), P(p + ".w2")),
                   P(p + ".b2"));
  };
  auto norm = [&](const Mat& x, const std::string& p) {
    return layer_norm(x, P(p + ".gain"), P(p + ".bias"), eps);
  };
  const Visible all = [](std::size_t, std::size_t) { return true; };
  const Visible causal = [](std::size_t i, std::size_t j) { return j <= i; };

  Mat x = embed("src_embedding", src);
  for (std::size_t l = 0; l < cfg.enc_layers; ++l) {
    const std::string u = "enc." + std::to_string(l) + ".unit.0";
    const Mat rel = P(u + ".relpos");
    const Mat a = attention(x, x, P(u + ".attn.wq"), P(u + ".attn.wk"), P(u + ".attn.wv"),
                            P(u + ".attn.wo"), cfg.heads, &rel, cfg.relpos_clip, all);
    const Mat s = norm(add(x, a), u + ".norm1");
    x = norm(add(s, ffn(s, u + ".ffn")), u + ".norm2");
  }
  Mat y = embed("tgt_embedding", tgt_in);
  for (std::size_t l = 0; l < cfg.dec_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    const Mat rel = P(p + ".relpos");
    const Mat a = attention(y, y, P(p + ".self.wq"), P(p + ".self.wk"), P(p + ".self.wv"),
                            P(p + ".self.wo"), cfg.heads, &rel, cfg.relpos_clip, causal);
    const Mat s = norm(add(y, a), p + ".norm1");
    const Mat c = attention(s, x, P(p + ".cross.wq"), P(p + ".cross.wk"), P(p + ".cross.wv"),
                            P(p + ".cross.wo"), cfg.heads, nullptr, 0, all);
    const Mat cs = norm(add(s, c), p + ".norm2");
    y = norm(add(cs, ffn(cs, p + ".ffn")), p + ".norm3");
  }
  return add_row(matmul(y, P("out.weight")), P("out.bias"));
}

}  // namespace oracle
