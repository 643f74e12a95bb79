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

#include "numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace mute::num {

namespace {

using MatR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const MatR>;
using MutMap = Eigen::Map<MatR>;

Shape leading(const Shape& s) { return Shape(s.begin(), s.end() - 2); }

bool is_suffix(const Shape& whole, const Shape& part) {
  if (part.size() > whole.size()) return false;
  return std::equal(part.rbegin(), part.rend(), whole.rbegin());
}

void check_broadcast(const char* op, const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape() || is_suffix(a.shape(), b.shape()), ErrorKind::Dimension,
          std::string(op) + ": cannot broadcast " + shape_str(b.shape()) + " onto " +
              shape_str(a.shape()));
}

// Parent gradient buffer, or nullptr when that parent needs none.
std::vector<Real>* parent_grad(Node& out, std::size_t i) {
  Node& p = *out.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() >= 2 && b.rank() >= 2, ErrorKind::Dimension,
          "matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const std::size_t p = a.dim(a.rank() - 2), q = a.dim(a.rank() - 1);
  const std::size_t q2 = b.dim(b.rank() - 2), r = b.dim(b.rank() - 1);
  const Shape la = leading(a.shape()), lb = leading(b.shape());
  require(q == q2 && (la == lb || la.empty() || lb.empty()), ErrorKind::Dimension,
          "matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const Shape lead = la.empty() ? lb : la;
  const std::size_t batch = shape_numel(lead);
  const std::size_t sa = la.empty() ? 0 : p * q;
  const std::size_t sb = lb.empty() ? 0 : q * r;

  Shape out_shape = lead;
  out_shape.push_back(p);
  out_shape.push_back(r);
  std::vector<Real> out(batch * p * r);
  const Real* ad = a.data().data();
  const Real* bd = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    MutMap(out.data() + i * p * r, p, r).noalias() =
        ConstMap(ad + i * sa, p, q) * ConstMap(bd + i * sb, q, r);
  }
  return make_result("matmul", out_shape, std::move(out), {a, b},
                     [p, q, r, batch, sa, sb](Node& o) {
                       const Real* g = o.grad.data();
                       const Real* ad = o.parents[0]->data.data();
                       const Real* bd = o.parents[1]->data.data();
                       auto* ga = parent_grad(o, 0);
                       auto* gb = parent_grad(o, 1);
                       for (std::size_t i = 0; i < batch; ++i) {
                         ConstMap gi(g + i * p * r, p, r);
                         if (ga)
                           MutMap(ga->data() + i * sa, p, q).noalias() +=
                               gi * ConstMap(bd + i * sb, q, r).transpose();
                         if (gb)
                           MutMap(gb->data() + i * sb, q, r).noalias() +=
                               ConstMap(ad + i * sa, p, q).transpose() * gi;
                       }
                     });
}

namespace {

enum class Binary { Add, Sub, Mul };

// b broadcasts over a as m-element blocks; m == n is the elementwise case.
template <typename F>
void over_blocks(std::size_t n, std::size_t m, F&& f) {
  for (std::size_t base = 0; base < n; base += m)
    for (std::size_t j = 0; j < m; ++j) f(base + j, j);
}

Tensor binary(const char* name, Binary kind, const Tensor& a, const Tensor& b) {
  check_broadcast(name, a, b);
  const std::size_t n = a.numel(), m = b.numel();
  std::vector<Real> out(n);
  const Real* ad = a.data().data();
  const Real* bd = b.data().data();
  Real* od = out.data();
  switch (kind) {
    case Binary::Add: over_blocks(n, m, [&](std::size_t i, std::size_t j) { od[i] = ad[i] + bd[j]; }); break;
    case Binary::Sub: over_blocks(n, m, [&](std::size_t i, std::size_t j) { od[i] = ad[i] - bd[j]; }); break;
    case Binary::Mul: over_blocks(n, m, [&](std::size_t i, std::size_t j) { od[i] = ad[i] * bd[j]; }); break;
  }
  return make_result(name, a.shape(), std::move(out), {a, b}, [kind, n, m](Node& o) {
    auto* ga = parent_grad(o, 0);
    auto* gb = parent_grad(o, 1);
    const Real* g = o.grad.data();
    const Real* ad = o.parents[0]->data.data();
    const Real* bd = o.parents[1]->data.data();
    if (ga) {
      Real* gad = ga->data();
      if (kind == Binary::Mul)
        over_blocks(n, m, [&](std::size_t i, std::size_t j) { gad[i] += g[i] * bd[j]; });
      else
        for (std::size_t i = 0; i < n; ++i) gad[i] += g[i];
    }
    if (gb) {
      Real* gbd = gb->data();
      switch (kind) {
        case Binary::Add: over_blocks(n, m, [&](std::size_t i, std::size_t j) { gbd[j] += g[i]; }); break;
        case Binary::Sub: over_blocks(n, m, [&](std::size_t i, std::size_t j) { gbd[j] -= g[i]; }); break;
        case Binary::Mul: over_blocks(n, m, [&](std::size_t i, std::size_t j) { gbd[j] += g[i] * ad[i]; }); break;
      }
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", Binary::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", Binary::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", Binary::Mul, a, b); }

Tensor scale(const Tensor& x, Real factor) {
  std::vector<Real> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return make_result("scale", x.shape(), std::move(out), {x}, [factor](Node& o) {
    auto& gx = o.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += factor * o.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  std::vector<Real> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > Real(0) ? v : Real(0);
  return make_result("relu", x.shape(), std::move(out), {x}, [](Node& o) {
    Real* gx = o.parents[0]->grad_buffer().data();
    const Real* xd = o.parents[0]->data.data();
    const Real* g = o.grad.data();
    const std::size_t n = o.grad.size();
    const Real factor = testing::gradient_fault() ? Real(2) : Real(1);
    for (std::size_t i = 0; i < n; ++i) gx[i] += xd[i] > Real(0) ? factor * g[i] : Real(0);
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require(axis < x.rank(), ErrorKind::Contract,
          "softmax axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::size_t len = x.dim(axis);
  std::vector<Real> out(x.numel());
  const auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xd[base + k * inner]);
      Real total = 0;
      for (std::size_t k = 0; k < len; ++k) {
        const Real e = std::exp(xd[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= total;
    }
  }
  return make_result("softmax", x.shape(), std::move(out), {x},
                     [outer, inner, len](Node& o) {
                       auto& gx = o.parents[0]->grad_buffer();
                       const auto& y = o.data;
                       for (std::size_t a = 0; a < outer; ++a) {
                         for (std::size_t in = 0; in < inner; ++in) {
                           const std::size_t base = a * len * inner + in;
                           Real dot = 0;
                           for (std::size_t k = 0; k < len; ++k)
                             dot += o.grad[base + k * inner] * y[base + k * inner];
                           for (std::size_t k = 0; k < len; ++k) {
                             const std::size_t idx = base + k * inner;
                             gx[idx] += y[idx] * (o.grad[idx] - dot);
                           }
                         }
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  require(x.rank() >= 1, ErrorKind::Dimension, "layer_norm needs rank >= 1");
  const std::size_t d = x.dim(x.rank() - 1);
  require(gain.shape() == Shape{d} && bias.shape() == Shape{d}, ErrorKind::Dimension,
          "layer_norm gain/bias must be [" + std::to_string(d) + "], got " +
              shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  require(eps > Real(0), ErrorKind::Contract, "layer_norm eps must be positive");
  const std::size_t rows = x.numel() / d;
  std::vector<Real> out(x.numel());
  std::vector<Real> xhat(x.numel());
  std::vector<Real> inv_std(rows);
  const auto xd = x.data();
  const auto gd = gain.data();
  const auto bd = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = xd.data() + r * d;
    Real mu = 0;
    for (std::size_t k = 0; k < d; ++k) mu += row[k];
    mu /= Real(d);
    Real var = 0;
    for (std::size_t k = 0; k < d; ++k) var += (row[k] - mu) * (row[k] - mu);
    var /= Real(d);
    const Real is = Real(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t k = 0; k < d; ++k) {
      const Real h = (row[k] - mu) * is;
      xhat[r * d + k] = h;
      out[r * d + k] = h * gd[k] + bd[k];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [d, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& o) {
        auto* gx = parent_grad(o, 0);
        auto* gg = parent_grad(o, 1);
        auto* gb = parent_grad(o, 2);
        const auto& gain = o.parents[1]->data;
        std::vector<Real> dh(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const Real* g = o.grad.data() + r * d;
          const Real* h = xhat.data() + r * d;
          Real mean_dh = 0, mean_dh_h = 0;
          for (std::size_t k = 0; k < d; ++k) {
            dh[k] = g[k] * gain[k];
            mean_dh += dh[k];
            mean_dh_h += dh[k] * h[k];
            if (gg) (*gg)[k] += g[k] * h[k];
            if (gb) (*gb)[k] += g[k];
          }
          mean_dh /= Real(d);
          mean_dh_h /= Real(d);
          if (gx)
            for (std::size_t k = 0; k < d; ++k)
              (*gx)[r * d + k] += inv_std[r] * (dh[k] - mean_dh - h[k] * mean_dh_h);
        }
      });
}

Tensor sum(const Tensor& x) {
  Real total = 0;
  for (Real v : x.data()) total += v;
  return make_result("sum", {1}, {total}, {x}, [](Node& o) {
    auto& gx = o.parents[0]->grad_buffer();
    for (auto& v : gx) v += o.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), Real(1) / Real(x.numel())); }

Tensor reshape(const Tensor& x, const Shape& shape) {
  require(shape_numel(shape) == x.numel(), ErrorKind::Dimension,
          "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  std::vector<Real> out(x.data().begin(), x.data().end());
  return make_result("reshape", shape, std::move(out), {x}, [](Node& o) {
    auto& gx = o.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
  });
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  require(table.rank() == 2, ErrorKind::Dimension, "embedding table must be rank 2");
  require(!ids.empty(), ErrorKind::Contract, "embedding lookup with no ids");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<std::int64_t> index(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab)
      fail(ErrorKind::Input, "token id " + std::to_string(ids[i]) +
                                 " outside vocabulary of size " + std::to_string(vocab));
    index[i] = ids[i];
  }
  (void)d;
  return gather_rows(table, index);
}

Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> index, const Tensor& fill) {
  require(x.rank() == 2, ErrorKind::Dimension, "gather_rows needs a rank-2 tensor");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  bool uses_fill = false;
  for (auto i : index) {
    if (i >= static_cast<std::int64_t>(rows))
      fail(ErrorKind::Contract, "gather_rows index " + std::to_string(i) + " out of range");
    uses_fill = uses_fill || i < 0;
  }
  if (uses_fill)
    require(fill.defined() && fill.shape() == Shape{d}, ErrorKind::Dimension,
            "gather_rows fill vector must be [" + std::to_string(d) + "]");
  std::vector<Real> out(index.size() * d);
  const auto xd = x.data();
  for (std::size_t r = 0; r < index.size(); ++r) {
    const Real* src = index[r] < 0 ? fill.data().data() : xd.data() + index[r] * d;
    std::copy(src, src + d, out.begin() + r * d);
  }
  std::vector<Tensor> parents{x};
  if (uses_fill) parents.push_back(fill);
  std::vector<std::int64_t> idx(index.begin(), index.end());
  return make_result("gather_rows", {index.size(), d}, std::move(out), std::move(parents),
                     [d, idx = std::move(idx), uses_fill](Node& o) {
                       auto* gx = parent_grad(o, 0);
                       auto* gf = uses_fill ? parent_grad(o, 1) : nullptr;
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         std::vector<Real>* dst = idx[r] < 0 ? gf : gx;
                         if (!dst) continue;
                         const std::size_t base = idx[r] < 0 ? 0 : idx[r] * d;
                         for (std::size_t k = 0; k < d; ++k)
                           (*dst)[base + k] += o.grad[r * d + k];
                       }
                     });
}

Tensor weighted_sum(std::span<const Tensor> xs, const Tensor& w, std::size_t offset,
                    std::size_t stride) {
  require(!xs.empty(), ErrorKind::Contract, "weighted_sum of an empty list");
  require(offset + (xs.size() - 1) * stride < w.numel(), ErrorKind::Dimension,
          "weighted_sum weights " + shape_str(w.shape()) + " too small for " +
              std::to_string(xs.size()) + " inputs");
  const Shape& shape = xs[0].shape();
  for (const auto& x : xs)
    require(x.shape() == shape, ErrorKind::Dimension,
            "weighted_sum inputs differ: " + shape_str(shape) + " vs " + shape_str(x.shape()));
  std::vector<Real> out(xs[0].numel(), Real(0));
  const auto wd = w.data();
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const Real c = wd[offset + j * stride];
    const auto xd = xs[j].data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c * xd[i];
  }
  std::vector<Tensor> parents(xs.begin(), xs.end());
  parents.push_back(w);
  const std::size_t count = xs.size();
  return make_result("weighted_sum", shape, std::move(out), std::move(parents),
                     [count, offset, stride](Node& o) {
                       const auto& wd = o.parents[count]->data;
                       auto* gw = parent_grad(o, count);
                       for (std::size_t j = 0; j < count; ++j) {
                         const std::size_t wi = offset + j * stride;
                         const auto& xd = o.parents[j]->data;
                         if (gw) {
                           Real dot = 0;
                           for (std::size_t i = 0; i < xd.size(); ++i) dot += o.grad[i] * xd[i];
                           (*gw)[wi] += dot;
                         }
                         if (auto* gx = parent_grad(o, j))
                           for (std::size_t i = 0; i < xd.size(); ++i)
                             (*gx)[i] += wd[wi] * o.grad[i];
                       }
                     });
}

Tensor dropout(const Tensor& x, Real rate, Rng& rng) {
  require(rate >= Real(0) && rate < Real(1), ErrorKind::Contract,
          "dropout rate must lie in [0, 1)");
  if (rate == Real(0)) return x;
  const Real keep_scale = Real(1) / (Real(1) - rate);
  std::vector<Real> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < rate ? Real(0) : keep_scale;
  std::vector<Real> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * mask[i];
  return make_result("dropout", x.shape(), std::move(out), {x},
                     [mask = std::move(mask)](Node& o) {
                       auto& gx = o.parents[0]->grad_buffer();
                       for (std::size_t i = 0; i < o.grad.size(); ++i)
                         gx[i] += mask[i] * o.grad[i];
                     });
}

Tensor smoothed_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                              Real eps) {
  require(logits.rank() == 2, ErrorKind::Dimension, "cross entropy logits must be [N, V]");
  const std::size_t rows = logits.dim(0), vocab = logits.dim(1);
  require(targets.size() == rows, ErrorKind::Dimension,
          "cross entropy: " + std::to_string(targets.size()) + " targets for " +
              std::to_string(rows) + " rows");
  require(eps >= Real(0) && eps <= Real(1), ErrorKind::Contract,
          "label smoothing must lie in [0, 1]");
  std::size_t counted = 0;
  for (auto t : targets) {
    if (t < 0) continue;
    if (static_cast<std::size_t>(t) >= vocab)
      fail(ErrorKind::Input, "target id " + std::to_string(t) + " outside vocabulary");
    ++counted;
  }
  require(counted > 0, ErrorKind::Contract, "cross entropy over an all-padding batch");

  const auto ld = logits.data();
  std::vector<Real> probs(rows * vocab, Real(0));
  const Real off = eps / Real(vocab);
  Real total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0) continue;
    const Real* row = ld.data() + r * vocab;
    const Real mx = *std::max_element(row, row + vocab);
    Real z = 0;
    for (std::size_t v = 0; v < vocab; ++v) z += std::exp(row[v] - mx);
    const Real log_z = mx + std::log(z);
    Real loss = 0;
    for (std::size_t v = 0; v < vocab; ++v) {
      const Real logp = row[v] - log_z;
      probs[r * vocab + v] = std::exp(logp);
      const Real q = off + (static_cast<std::int32_t>(v) == targets[r] ? Real(1) - eps : Real(0));
      if (q > Real(0)) loss -= q * logp;
    }
    total += loss;
  }
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  return make_result(
      "smoothed_cross_entropy", {1}, {total / Real(counted)}, {logits},
      [vocab, eps, off, counted, probs = std::move(probs), tgt = std::move(tgt)](Node& o) {
        auto& gx = o.parents[0]->grad_buffer();
        const Real g = o.grad[0] / Real(counted);
        for (std::size_t r = 0; r < tgt.size(); ++r) {
          if (tgt[r] < 0) continue;
          for (std::size_t v = 0; v < vocab; ++v) {
            const Real q = off + (static_cast<std::int32_t>(v) == tgt[r] ? Real(1) - eps : Real(0));
            gx[r * vocab + v] += g * (probs[r * vocab + v] - q);
          }
        }
      });
}

}  // namespace mute::num
