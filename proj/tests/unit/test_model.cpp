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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "model/checkpoint.hpp"
#include "model/model.hpp"
#include "numerics/grad_check.hpp"
#include "numerics/ops.hpp"
#include "shuffle/shuffle.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace mute;
using model::Model;
using model::ModelConfig;
using num::Tensor;
using testutil::values;

namespace {

ModelConfig small(layer::LayerMode mode, std::size_t units, std::size_t enc = 2) {
  ModelConfig c;
  c.width = 8;
  c.ffn_width = 16;
  c.heads = 2;
  c.enc_layers = enc;
  c.dec_layers = 2;
  c.units = units;
  c.mode = mode;
  c.relpos_clip = 2;
  c.src_vocab = c.tgt_vocab = 9;
  return c;
}

tasks::Batch toy_batch() {
  return tasks::make_batch({{{3, 4, 5, 6}, {3, 4, 5, 6}}, {{7, 8}, {8, 7}}, {{5}, {5}}});
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}


}  // namespace

TEST_CASE("parameters are named once in canonical order") {
  const Model m(small(layer::LayerMode::SeqBiased, 3), 1);
  std::set<std::string> names;
  for (const auto& p : m.parameters()) CHECK(names.insert(p.name).second);
  CHECK(names.count("enc.0.alpha") == 1);
  CHECK(names.count("enc.1.shuffle") == 1);
  CHECK(names.count("mask_embedding") == 1);
  CHECK(names.count("enc.1.unit.2.relpos") == 1);
  CHECK(m.parameters().front().name == "src_embedding");
  CHECK(m.parameters().back().name == "out.bias");
  CHECK(testutil::error_kind_of([&] { m.find("nope"); }) == ErrorKind::Format);

  const Model plain(small(layer::LayerMode::Plain, 3), 1);
  for (const auto& p : plain.parameters()) CHECK(p.name.find("shuffle") == std::string::npos);
  for (Real a : plain.find("enc.0.alpha").data()) CHECK(a == Real(1) / 3);

  ModelConfig shared = small(layer::LayerMode::Plain, 3);
  shared.share_attention = shared.share_ffn = true;
  const Model tied(shared, 1);
  CHECK(tied.parameters().size() < plain.parameters().size());
  CHECK(tied.encoder_layers()[0].units[0].attn.wq.node() ==
        tied.encoder_layers()[0].units[2].attn.wq.node());
}

TEST_CASE("config validation") {
  ModelConfig c = small(layer::LayerMode::Plain, 2);
  c.heads = 3;
  CHECK(testutil::error_kind_of([&] { c.validate(); }) == ErrorKind::Config);
  c = small(layer::LayerMode::Plain, 0);
  CHECK(testutil::error_kind_of([&] { c.validate(); }) == ErrorKind::Config);
  c = small(layer::LayerMode::Plain, 2);
  c.sample_rate = 1.5;
  CHECK(testutil::error_kind_of([&] { c.validate(); }) == ErrorKind::Config);
}

TEST_CASE("encode composes embedding and layer calls") {
  for (auto mode : {layer::LayerMode::Plain, layer::LayerMode::Biased, layer::LayerMode::SeqBiased}) {
    const Model m(small(mode, 3, 2), 2);
    const std::vector<std::int32_t> tokens = {3, 5, 4, 2};
    const Tensor enc = m.encode(tokens);
    CHECK(enc.shape() == num::Shape{4, 8});

    Tensor x = num::scale(num::embedding(m.src_embedding(), tokens), std::sqrt(Real(8)));
    layer::ForwardContext ctx;
    ctx.lengths = {4};
    ctx.mask = nn::key_padding_mask(1, 4, 4, {4});
    ctx.mask_embedding = m.mask_embedding();
    for (const auto& l : m.encoder_layers()) x = layer::mute_layer_forward(x, l, ctx);
    CHECK(testutil::max_abs_diff(enc.data(), x.data()) <= 1e-12);
  }
  const Model m(small(layer::LayerMode::Plain, 1), 2);
  const std::vector<std::int32_t> bad = {3, 9};
  CHECK(testutil::error_kind_of([&] { m.encode(bad); }) == ErrorKind::Input);
}

TEST_CASE("single-unit plain model equals a reference transformer") {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    Model m(small(layer::LayerMode::Plain, 1), seed);
    for (const auto& l : m.encoder_layers()) l.alpha.node()->data[0] = 1;
    const tasks::Batch batch = toy_batch();
    num::NoGradGuard g;
    const Tensor logits = model::batch_logits(m, batch, {});
    for (std::size_t b = 0; b < batch.rows; ++b) {
      const std::vector<std::int32_t> src(batch.src.begin() + b * batch.src_len,
                                          batch.src.begin() + b * batch.src_len + batch.src_lengths[b]);
      const std::vector<std::int32_t> tin(batch.tgt_in.begin() + b * batch.tgt_len,
                                          batch.tgt_in.begin() + b * batch.tgt_len + batch.tgt_lengths[b]);
      const auto want = oracle::single_unit_transformer(m, src, tin);
      for (std::size_t i = 0; i < want.v.size(); ++i)
        CHECK(std::abs(logits.data()[b * batch.tgt_len * 9 + i] - want.v[i]) <= 1e-12);
    }
  }
}

TEST_CASE("decoder is causal and single-step attention is trivial") {
  const Model m(small(layer::LayerMode::SeqBiased, 2), 3);
  num::NoGradGuard g;
  const auto src = model::SeqBatch::single(std::vector<std::int32_t>{3, 4, 2});
  const Tensor enc = m.encode(src, {});
  const std::vector<std::int32_t> y = {1, 5, 6, 7};
  const Tensor full = m.decode(model::SeqBatch::single(y), enc, src, {});
  for (std::size_t t = 0; t + 1 < y.size(); ++t) {
    auto edited = y;
    for (std::size_t i = t + 1; i < y.size(); ++i) edited[i] = 8;
    const Tensor other = m.decode(model::SeqBatch::single(edited), enc, src, {});
    for (std::size_t i = 0; i < (t + 1) * 8; ++i) CHECK(full.data()[i] == other.data()[i]);
  }
  const std::vector<std::int32_t> bos = {1};
  const Tensor one = m.decode(model::SeqBatch::single(bos), enc, src, {});
  for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(one.data()[i] - full.data()[i]) <= 1e-12);
  const std::vector<std::int32_t> oov = {1, 12};
  CHECK(testutil::error_kind_of([&] { m.decode(model::SeqBatch::single(oov), enc, src, {}); }) ==
        ErrorKind::Input);
}

TEST_CASE("loss with penalty") {
  const std::vector<std::int32_t> t = {4, 7, 9, -1};
  const Tensor uniform = Tensor::zeros({4, 20});
  ModelConfig c = small(layer::LayerMode::Plain, 1);
  c.label_smoothing = 0;
  c.tgt_vocab = 20;
  CHECK(std::abs(model::loss_with_penalty(uniform, t, c, {}).total.item() - std::log(20.0)) <=
        1e-12);
  CHECK(std::abs(std::log(20.0) - 2.9957) < 1e-4);

  Model m(small(layer::LayerMode::SeqBiased, 4), 4);
  auto mats = m.shuffle_matrices();
  REQUIRE(mats.size() == 2);
  const auto eye = shuffle::permutation_matrix(std::vector<std::size_t>{0, 1, 2, 3});
  std::copy(eye.data().begin(), eye.data().end(), mats[0].mutable_data().begin());
  std::fill(mats[1].mutable_data().begin(), mats[1].mutable_data().end(), Real(0.25));
  const tasks::Batch batch = toy_batch();
  const Tensor logits = model::batch_logits(m, batch, {});
  const auto targets = model::loss_targets(batch);
  const Real ce = num::smoothed_cross_entropy(logits, targets, m.config().label_smoothing).item();
  const auto parts = model::loss_with_penalty(logits, targets, m.config(), m.shuffle_matrices());
  CHECK(std::abs(parts.total.item() - (ce + 0.4)) <= 1e-12);
  CHECK(std::abs(parts.penalty_sum - 4.0) <= 1e-12);
  CHECK(parts.ce == ce);

  ModelConfig zero = m.config();
  zero.penalty_weight = 0;
  CHECK(model::loss_with_penalty(logits, targets, zero, m.shuffle_matrices()).total.item() == ce);

  const std::vector<std::int32_t> none(logits.dim(0), -1);
  CHECK(testutil::error_kind_of([&] {
          model::loss_with_penalty(logits, none, m.config(), m.shuffle_matrices());
        }) == ErrorKind::Contract);
}

TEST_CASE("pad positions never reach the loss") {
  Rng rng(5);
  const std::vector<std::int32_t> t = {3, 4, -1, 5, -1, -1};
  ModelConfig c = small(layer::LayerMode::Plain, 1);
  const Tensor a = testutil::random_tensor({6, 9}, rng, false);
  std::vector<Real> edited = values(a);
  for (std::size_t r : {2u, 4u, 5u})
    for (std::size_t v = 0; v < 9; ++v) edited[r * 9 + v] = Real(rng.uniform(-50, 50));
  const Tensor b = Tensor::from({6, 9}, edited);
  CHECK(model::loss_with_penalty(a, t, c, {}).total.item() ==
        model::loss_with_penalty(b, t, c, {}).total.item());
}

TEST_CASE("loss does not depend on batch order") {
  const Model m(small(layer::LayerMode::SeqBiased, 3), 6);
  const std::vector<tasks::Pair> pairs = {{{3, 4, 5, 6}, {3, 4, 5, 6}}, {{7, 8}, {8, 7}}, {{5}, {5}}};
  const std::vector<tasks::Pair> rev(pairs.rbegin(), pairs.rend());
  num::NoGradGuard g;
  auto loss_of = [&](const std::vector<tasks::Pair>& p) {
    const auto batch = tasks::make_batch(p);
    return model::loss_with_penalty(model::batch_logits(m, batch, {}), model::loss_targets(batch),
                                    m.config(), m.shuffle_matrices())
        .total.item();
  };
  CHECK(std::abs(loss_of(pairs) - loss_of(rev)) <= 1e-12);
}

TEST_CASE("output distribution rows sum to one") {
  const Model m(small(layer::LayerMode::Biased, 2), 7);
  num::NoGradGuard g;
  const Tensor p = num::softmax(model::batch_logits(m, toy_batch(), {}), 1);
  for (std::size_t r = 0; r < p.dim(0); ++r) {
    double total = 0;
    for (std::size_t v = 0; v < 9; ++v) total += p.data()[r * 9 + v];
    CHECK(std::abs(total - 1) <= 1e-12);
  }
}

TEST_CASE("greedy decoding") {
  Model m(small(layer::LayerMode::SeqBiased, 2), 8);
  const std::vector<std::vector<std::int32_t>> src = {{5, 5, 5}, {3, 4}};
  const auto first = model::greedy_decode(m, src, 6);
  CHECK(model::greedy_decode(m, src, 6) == first);

  auto bias = m.output().bias.node()->data.data();
  std::fill(bias, bias + 9, Real(0));
  bias[5] = 1e6;
  std::vector<bool> finished;
  auto out = model::greedy_decode(m, src, 3, &finished);
  CHECK(out[0] == src[0]);
  CHECK(out[1].size() == 3);
  CHECK_FALSE(finished[0]);

  bias[5] = 0;
  bias[tasks::kEos] = 1e6;
  out = model::greedy_decode(m, src, 3, &finished);
  CHECK(out[0].empty());
  CHECK(finished[0]);

  CHECK(model::argmax(std::vector<Real>{1, 3, 3, 2}) == 1);
}

TEST_CASE("end-to-end gradient check on a two-token batch") {
  ModelConfig c = small(layer::LayerMode::SeqBiased, 2, 1);
  c.dropout = 0;
  Model m(c, 9);
  const tasks::Batch batch = tasks::make_batch({{{4}, {6}}});
  const auto targets = model::loss_targets(batch);
  std::vector<Tensor> params;
  for (const auto& p : m.parameters()) params.push_back(p.tensor);
  const auto r = num::grad_check(
      [&] {
        return model::loss_with_penalty(model::batch_logits(m, batch, {}), targets, m.config(),
                                        m.shuffle_matrices())
            .total;
      },
      params);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("checkpoint round trip") {
  testutil::TempDir dir("ckpt");
  const Model m(small(layer::LayerMode::SeqBiased, 3), 10);
  model::Checkpoint ck;
  ck.config_text = "width = 8\n";
  ck.step = 42;
  ck.rng_states["data"] = "123 456";
  ck.blocks = model::export_parameters(m);
  ck.blocks.push_back({"adam.m/src_embedding", {2}, {0.5, -0.25}});
  model::save_checkpoint(dir.str("a.ckpt"), ck);

  const auto back = model::load_checkpoint(dir.str("a.ckpt"));
  CHECK(back.step == 42);
  CHECK(back.config_text == ck.config_text);
  CHECK(back.rng_states == ck.rng_states);
  REQUIRE(back.blocks.size() == ck.blocks.size());
  for (std::size_t i = 0; i < ck.blocks.size(); ++i) {
    CHECK(back.blocks[i].name == ck.blocks[i].name);
    CHECK(back.blocks[i].shape == ck.blocks[i].shape);
    CHECK(back.blocks[i].values == ck.blocks[i].values);
  }
  Model fresh(small(layer::LayerMode::SeqBiased, 3), 99);
  model::import_parameters(fresh, back);
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    CHECK(values(fresh.parameters()[i].tensor) == values(m.parameters()[i].tensor));
  CHECK(std::filesystem::directory_iterator(dir.path()) != std::filesystem::directory_iterator());
  for (const auto& e : std::filesystem::directory_iterator(dir.path()))
    CHECK(e.path().extension() == ".ckpt");
}

TEST_CASE("damaged checkpoints are rejected") {
  testutil::TempDir dir("ckpt_bad");
  const Model m(small(layer::LayerMode::Plain, 2), 11);
  model::Checkpoint ck;
  ck.blocks = model::export_parameters(m);
  model::save_checkpoint(dir.str("good.ckpt"), ck);
  const auto bytes = read_bytes(dir.str("good.ckpt"));

  auto magic = bytes;
  magic[0] = 'X';
  write_bytes(dir.str("magic.ckpt"), magic);
  CHECK(testutil::error_kind_of([&] { model::load_checkpoint(dir.str("magic.ckpt")); }) ==
        ErrorKind::Format);

  auto version = bytes;
  version[4] = 7;
  write_bytes(dir.str("version.ckpt"), version);
  CHECK(testutil::error_kind_of([&] { model::load_checkpoint(dir.str("version.ckpt")); }) ==
        ErrorKind::Format);

  for (std::size_t cut : {bytes.size() - 1, bytes.size() - 10, bytes.size() / 2, std::size_t(6)}) {
    write_bytes(dir.str("short.ckpt"), {bytes.begin(), bytes.begin() + long(cut)});
    CHECK(testutil::error_kind_of([&] { model::load_checkpoint(dir.str("short.ckpt")); }) ==
          ErrorKind::Format);
  }
  CHECK(testutil::error_kind_of([&] { model::load_checkpoint(dir.str("absent.ckpt")); }) ==
        ErrorKind::Io);

  Model target(small(layer::LayerMode::Plain, 2), 12);
  model::Checkpoint extra = ck;
  extra.blocks.push_back({"enc.0.bogus", {1}, {1.0}});
  CHECK(testutil::error_kind_of([&] { model::import_parameters(target, extra); }) ==
        ErrorKind::Format);
  model::Checkpoint missing = ck;
  missing.blocks.pop_back();
  CHECK(testutil::error_kind_of([&] { model::import_parameters(target, missing); }) ==
        ErrorKind::Format);
  model::Checkpoint reshaped = ck;
  reshaped.blocks[0].shape = {reshaped.blocks[0].values.size()};
  CHECK(testutil::error_kind_of([&] { model::import_parameters(target, reshaped); }) ==
        ErrorKind::Format);
}

TEST_CASE("every parameter receives gradient in training mode") {
  ModelConfig c = small(layer::LayerMode::SeqBiased, 4);
  c.dropout = 0;
  Model m(c, 13);
  const tasks::Batch batch = tasks::make_batch(
      {{{3, 4, 5, 6, 7, 8}, {8, 7, 6, 5, 4, 3}}, {{4, 4, 5, 6, 3}, {3, 6, 5, 4, 4}}});
  Rng noise(21), drop(22);
  model::ForwardOptions opts;
  opts.training = true;
  opts.noise_rng = &noise;
  opts.dropout_rng = &drop;
  opts.switch_policy = layer::SwitchPolicy::ForceOn;
  num::backward(model::loss_with_penalty(model::batch_logits(m, batch, opts),
                                          model::loss_targets(batch), m.config(),
                                          m.shuffle_matrices())
                    .total);
  for (const auto& p : m.parameters()) {
    double norm = 0;
    for (Real g : p.tensor.grad()) norm += std::abs(g);
    INFO(p.name);
    CHECK(norm > 0);
  }
}
