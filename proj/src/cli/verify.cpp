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

#include "cli/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

#include "analysis/analysis.hpp"
#include "model/model.hpp"
#include "nn/blocks.hpp"
#include "numerics/grad_check.hpp"
#include "numerics/ops.hpp"
#include "shuffle/shuffle.hpp"
#include "train/trainer.hpp"

namespace mute::cli {

namespace {

using num::Tensor;

// Collects named checks; the suite passes when all of them do.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    ++total_;
    if (!ok) failures_.push_back(what);
  }
  SuiteResult result(const std::string& name) const {
    SuiteResult r{name, failures_.empty(), {}};
    if (failures_.empty()) {
      r.detail = std::to_string(total_) + " checks";
    } else {
      r.detail = std::to_string(failures_.size()) + "/" + std::to_string(total_) + " failed: ";
      for (std::size_t i = 0; i < failures_.size(); ++i) r.detail += (i ? "; " : "") + failures_[i];
    }
    return r;
  }

 private:
  std::size_t total_ = 0;
  std::vector<std::string> failures_;
};

std::string num_str(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

Tensor random_tensor(const num::Shape& shape, Rng& rng, double scale = 1.0) {
  std::vector<Real> v(num::shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(scale * rng.normal());
  return Tensor::from(shape, std::move(v), true);
}

model::ModelConfig small_config(layer::LayerMode mode, std::size_t units) {
  model::ModelConfig c;
  c.width = 8;
  c.ffn_width = 16;
  c.heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.units = units;
  c.mode = mode;
  c.relpos_clip = 2;
  c.src_vocab = 9;
  c.tgt_vocab = 9;
  c.max_len = 16;
  return c;
}

tasks::Batch small_batch() {
  std::vector<tasks::Pair> pairs = {{{3, 5, 4}, {4, 5, 3}}, {{6, 7}, {7, 6}}};
  return tasks::make_batch(pairs);
}

void check_grad(Checks& c, const std::string& what, const std::function<Tensor()>& f,
                std::vector<Tensor> wrt, Real tol) {
  const auto r = num::grad_check(f, wrt);
  c.expect(r.passed(tol), what + " rel err " + num_str(r.max_rel_error));
}

SuiteResult suite_grad() {
  Checks c;
  Rng rng(11);
  {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
    check_grad(c, "matmul", [&] { return num::sum(num::matmul(a, b)); }, {a, b}, Real(1e-6));
  }
  {
    Tensor x = random_tensor({4, 6}, rng), g = random_tensor({6}, rng), b = random_tensor({6}, rng);
    Tensor w = random_tensor({4, 6}, rng);
    check_grad(c, "layer_norm",
               [&] { return num::sum(num::mul(num::layer_norm(x, g, b, nn::kNormEps), w)); },
               {x, g, b}, Real(1e-6));
  }
  {
    Tensor x = random_tensor({5, 6}, rng), w1 = random_tensor({6, 7}, rng);
    Tensor w2 = random_tensor({7, 3}, rng);
    check_grad(c, "relu ffn",
               [&] { return num::sum(num::matmul(num::relu(num::matmul(x, w1)), w2)); },
               {x, w1, w2}, Real(1e-6));
  }
  {
    Tensor q = random_tensor({6, 4}, rng), k = random_tensor({6, 4}, rng);
    Tensor v = random_tensor({6, 4}, rng), w = random_tensor({6, 4}, rng);
    nn::RelPosTable rel{random_tensor({5, 2}, rng), 2};
    const auto mask = nn::key_padding_mask(2, 3, 3, {3, 2});
    check_grad(c, "relative attention",
               [&] {
                 return num::sum(num::mul(
                     nn::attention_core(q, k, v, 2, &rel, {2, 3, 3}, mask), w));
               },
               {q, k, v, rel.table}, Real(1e-6));
  }
  {
    Tensor logits = random_tensor({4, 5}, rng);
    const std::vector<std::int32_t> t = {1, -1, 4, 0};
    check_grad(c, "smoothed cross entropy",
               [&] { return num::smoothed_cross_entropy(logits, t, Real(0.1)); }, {logits},
               Real(1e-6));
  }
  {
    Rng init(5);
    Tensor m = shuffle::init_matrix(3, init);
    check_grad(c, "shuffle penalty", [&] { return shuffle::penalty(m); }, {m}, Real(1e-6));
  }
  for (auto mode : {layer::LayerMode::SeqBiased, layer::LayerMode::Plain}) {
    model::Model m(small_config(mode, 2), 3);
    const tasks::Batch batch = small_batch();
    const auto targets = model::loss_targets(batch);
    std::vector<Tensor> params;
    for (const auto& p : m.parameters()) params.push_back(p.tensor);
    const model::ForwardOptions eval;
    check_grad(c, std::string("model (") + layer::mode_name(mode) + ")",
               [&] {
                 return model::loss_with_penalty(model::batch_logits(m, batch, eval), targets,
                                                 m.config(), m.shuffle_matrices())
                     .total;
               },
               params, Real(1e-4));
  }
  return c.result("grad");
}

bool is_permutation(const std::vector<std::size_t>& p) {
  std::vector<std::size_t> s(p);
  std::sort(s.begin(), s.end());
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] != i) return false;
  return true;
}

SuiteResult suite_shuffle() {
  Checks c;
  Rng rng(17);
  for (std::size_t trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(7);
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t(0));
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    Tensor hard = shuffle::permutation_matrix(p);
    const Real pen = shuffle::penalty_value(hard.data(), n);
    c.expect(std::abs(pen) <= Real(1e-12), "penalty of a permutation " + num_str(pen));
    c.expect(shuffle::to_hard_permutation(hard) == p, "hard permutation round trip");
  }
  for (std::size_t n : {2, 4, 6}) {
    Tensor u = Tensor::full({n, n}, Real(1) / Real(n));
    const Real expect = Real(2 * n) * (Real(1) - Real(1) / std::sqrt(Real(n)));
    c.expect(std::abs(shuffle::penalty_value(u.data(), n) - expect) <= Real(1e-12),
             "uniform penalty closed form");
  }
  for (std::size_t trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(7);
    Tensor m = random_tensor({n, n}, rng);
    for (std::size_t i = 0; i < n; ++i) m.mutable_data()[i * n + rng.below(n)] = Real(1) + rng.uniform();
    try {
      shuffle::project(m);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Projection) continue;
      throw;
    }
    bool ok = true;
    for (std::size_t r = 0; r < n; ++r) {
      Real sum = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const Real v = m.data()[r * n + k];
        ok = ok && v >= 0;
        sum += v;
      }
      ok = ok && std::abs(sum - 1) <= Real(1e-12);
    }
    c.expect(ok, "projection contract");
    c.expect(is_permutation(shuffle::to_hard_permutation(m)), "hard permutation validity");
  }
  {
    Rng init(3);
    Tensor m = shuffle::init_matrix(4, init);
    const Real h = shuffle::hardness(m);
    c.expect(h > Real(0.7) && h < Real(0.76), "hardness of the initial matrix " + num_str(h));
  }
  return c.result("shuffle");
}

// Single-unit relative-position transformer assembled directly from the
// building blocks, bypassing the MUTE layer.
Tensor reference_logits(const model::Model& m, const tasks::Batch& batch) {
  const auto& cfg = m.config();
  const Real sd = std::sqrt(static_cast<Real>(cfg.width));
  const std::size_t B = batch.rows, n = batch.src_len, t = batch.tgt_len;
  Tensor x = num::scale(num::embedding(m.src_embedding(), batch.src), sd);
  const auto enc_mask = nn::key_padding_mask(B, n, n, batch.src_lengths);
  for (const auto& l : m.encoder_layers()) {
    const layer::Unit& u = l.units[0];
    const Tensor a = nn::relative_self_attention(x, u.attn, u.relpos, B, enc_mask);
    const Tensor s = nn::norm_forward(num::add(x, a), u.norm1);
    x = nn::norm_forward(num::add(s, nn::ffn_forward(s, u.ffn)), u.norm2);
  }
  Tensor y = num::scale(num::embedding(m.tgt_embedding(), batch.tgt_in), sd);
  const auto causal = nn::causal_mask(B, t);
  const auto cross = nn::key_padding_mask(B, t, n, batch.src_lengths);
  for (const auto& l : m.decoder_layers()) {
    const Tensor a = nn::relative_self_attention(y, l.self_attn, l.relpos, B, causal);
    const Tensor s = nn::norm_forward(num::add(y, a), l.norm1);
    const Tensor cr = nn::cross_attention(s, x, l.cross_attn, {B, t, n}, cross);
    const Tensor cs = nn::norm_forward(num::add(s, cr), l.norm2);
    y = nn::norm_forward(num::add(cs, nn::ffn_forward(cs, l.ffn)), l.norm3);
  }
  return num::add(num::matmul(y, m.output().weight), m.output().bias);
}

SuiteResult suite_equivalence() {
  Checks c;
  num::NoGradGuard no_grad;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    model::Model m(small_config(layer::LayerMode::Plain, 1), seed);
    const tasks::Batch batch = small_batch();
    const Tensor got = model::batch_logits(m, batch, {});
    const Tensor want = reference_logits(m, batch);
    Real worst = 0;
    for (std::size_t i = 0; i < got.numel(); ++i)
      worst = std::max(worst, std::abs(got.data()[i] - want.data()[i]));
    c.expect(worst <= Real(1e-12), "single-unit model vs reference, max diff " + num_str(worst));
  }
  {
    model::ModelConfig cfg = small_config(layer::LayerMode::SeqBiased, 3);
    cfg.penalty_weight = 0;
    model::Model m(cfg, 2);
    const tasks::Batch batch = small_batch();
    const Tensor logits = model::batch_logits(m, batch, {});
    const auto targets = model::loss_targets(batch);
    const auto parts = model::loss_with_penalty(logits, targets, cfg, m.shuffle_matrices());
    const Real ce = num::smoothed_cross_entropy(logits, targets, cfg.label_smoothing).item();
    c.expect(parts.total.item() == ce, "zero penalty weight gives plain cross entropy");
  }
  return c.result("equivalence");
}

SuiteResult suite_determinism() {
  Checks c;
  const std::vector<std::vector<std::int32_t>> sources = {{3, 4, 5}, {8, 7, 6, 5}, {4}};
  for (Real p : {Real(0.5), Real(0.85), Real(1.0)}) {
    model::ModelConfig cfg = small_config(layer::LayerMode::SeqBiased, 3);
    cfg.sample_rate = p;
    const model::Model m(cfg, 4);
    c.expect(model::greedy_decode(m, sources, 6) == model::greedy_decode(m, sources, 6),
             "repeated greedy decode at p=" + num_str(p));
    num::NoGradGuard no_grad;
    Rng a(1), b(2);
    const Tensor ea = m.encode(sources[1], false, &a);
    const Tensor eb = m.encode(sources[1], false, &b);
    c.expect(std::equal(ea.data().begin(), ea.data().end(), eb.data().begin()),
             "evaluation encode ignores the noise stream at p=" + num_str(p));
  }
  {
    std::vector<Real> traces[2];
    for (auto& trace : traces) {
      model::Model m(small_config(layer::LayerMode::SeqBiased, 3), 9);
      train::TrainConfig tc;
      tc.seed = 21;
      train::Trainer trainer(m, tc);
      const tasks::Batch batch = small_batch();
      for (int s = 0; s < 3; ++s) trace.push_back(trainer.train_step(batch).loss);
    }
    c.expect(traces[0] == traces[1], "identical seeds give identical loss traces");
  }
  return c.result("determinism");
}

SuiteResult suite_diversity() {
  Checks c;
  const std::vector<Real> a = {1, 2, 3}, neg = {-1, -2, -3}, o1 = {1, 0, 0}, o2 = {0, 5, 0};
  c.expect(std::abs(analysis::diversity_score(a, a) - std::exp(Real(-1))) <= Real(1e-12),
           "identical vectors");
  c.expect(std::abs(analysis::diversity_score(o1, o2) - 1) <= Real(1e-12), "orthogonal vectors");
  c.expect(std::abs(analysis::diversity_score(a, neg) - std::exp(Real(1))) <= Real(1e-12),
           "antiparallel vectors");

  model::ModelConfig cfg = small_config(layer::LayerMode::Plain, 3);
  cfg.share_attention = true;
  cfg.share_ffn = true;
  const model::Model tied(cfg, 6);
  const std::vector<std::vector<std::int32_t>> probe = {{3, 4, 5}, {6, 7}};
  const auto rep = analysis::diversity_report(tied, probe);
  for (Real v : rep.grand_mean)
    c.expect(std::abs(v - std::exp(Real(-1))) <= Real(1e-12),
             "tied units score 1/e, got " + num_str(v));
  cfg.share_attention = cfg.share_ffn = false;
  const model::Model free(cfg, 6);
  const auto rep2 = analysis::diversity_report(free, probe);
  for (std::size_t k = 0; k < rep2.layers; ++k)
    for (std::size_t cat = 0; cat < analysis::kCategories; ++cat)
      for (std::size_t i = 0; i < rep2.units; ++i)
        for (std::size_t j = 0; j < rep2.units; ++j) {
          const Real s = rep2.score(k, analysis::Category(cat), i, j);
          c.expect(s >= std::exp(Real(-1)) - Real(1e-12) && s <= std::exp(Real(1)) + Real(1e-12),
                   "score range");
          c.expect(s == rep2.score(k, analysis::Category(cat), j, i), "score symmetry");
        }
  return c.result("diversity");
}

struct FaultScope {
  explicit FaultScope(bool on) : on_(on) {
    if (on_) num::testing::set_gradient_fault(true);
  }
  ~FaultScope() {
    if (on_) num::testing::set_gradient_fault(false);
  }
  bool on_;
};

}  // namespace

std::vector<std::string> verify_suite_names() {
  return {"grad", "shuffle", "equivalence", "determinism", "diversity"};
}

std::vector<SuiteResult> run_verify(const std::vector<std::string>& suites,
                                    bool inject_gradient_fault) {
  const auto names = suites.empty() ? verify_suite_names() : suites;
  for (const auto& n : names) {
    const auto all = verify_suite_names();
    require(std::find(all.begin(), all.end(), n) != all.end(), ErrorKind::Config,
            "unknown verify suite '" + n + "'");
  }
  FaultScope fault(inject_gradient_fault);
  std::vector<SuiteResult> out;
  for (const auto& n : names) {
    try {
      if (n == "grad") out.push_back(suite_grad());
      if (n == "shuffle") out.push_back(suite_shuffle());
      if (n == "equivalence") out.push_back(suite_equivalence());
      if (n == "determinism") out.push_back(suite_determinism());
      if (n == "diversity") out.push_back(suite_diversity());
    } catch (const std::exception& e) {
      out.push_back({n, false, std::string("error: ") + e.what()});
    }
  }
  return out;
}

}  // namespace mute::cli
