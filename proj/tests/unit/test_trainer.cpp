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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "shuffle/shuffle.hpp"
#include "support/helpers.hpp"
#include "train/trainer.hpp"

using namespace mute;
using num::Tensor;
using testutil::values;

namespace {

model::ModelConfig tiny_model(layer::LayerMode mode = layer::LayerMode::SeqBiased) {
  model::ModelConfig c;
  c.width = 16;
  c.ffn_width = 32;
  c.heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.units = 3;
  c.mode = mode;
  c.src_vocab = c.tgt_vocab = 13;
  return c;
}

tasks::TaskSpec tiny_task() {
  tasks::TaskSpec t;
  t.vocab = 10;
  t.min_len = 3;
  t.max_len = 6;
  t.seed = 5;
  return t;
}

train::TrainConfig tiny_train(std::size_t steps) {
  train::TrainConfig c;
  c.max_steps = steps;
  c.batch_tokens = 64;
  c.warmup_steps = 20;
  c.log_interval = 10;
  c.checkpoint_interval = 100;
  c.eval_interval = 50;
  c.train_size = 300;
  c.eval_size = 20;
  c.seed = 17;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST_CASE("adam first step moves each coordinate by about lr") {
  Tensor p = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  std::vector<Tensor> params = {p};
  auto state = train::make_adam(params, 0.9, 0.998, 1e-9);
  p.node()->grad = std::vector<Real>{0.3, -7.0, 1e-3};
  train::adam_step(params, state, 0.01);
  CHECK(std::abs(p.data()[0] - (1.0 - 0.01)) <= 1e-8);
  CHECK(std::abs(p.data()[1] - (-2.0 + 0.01)) <= 1e-8);
  CHECK(std::abs(p.data()[2] - (0.5 - 0.01)) <= 1e-6);
  CHECK(state.step == 1);
}

TEST_CASE("adam leaves a zero-gradient parameter in place") {
  Tensor p = Tensor::from({2}, {0.25, 4.0}, true);
  std::vector<Tensor> params = {p};
  auto state = train::make_adam(params, 0.9, 0.998, 1e-9);
  for (int i = 0; i < 3; ++i) {
    p.node()->grad = std::vector<Real>{0.0, 0.0};
    train::adam_step(params, state, 0.1);
  }
  CHECK(values(p) == std::vector<Real>{0.25, 4.0});
}

TEST_CASE("adam matches a hand recurrence") {
  const double b1 = 0.9, b2 = 0.998, eps = 1e-9, lr = 0.05;
  Tensor p = Tensor::from({1}, {1.0}, true);
  std::vector<Tensor> params = {p};
  auto state = train::make_adam(params, b1, b2, eps);
  double x = 1.0, m = 0, v = 0;
  const double grads[] = {1.0, -1.0, 0.5};
  for (int t = 1; t <= 3; ++t) {
    const double g = grads[t - 1];
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    p.node()->grad = std::vector<Real>{g};
    train::adam_step(params, state, lr);
    CHECK(std::abs(p.data()[0] - x) <= 1e-12);
  }
}

TEST_CASE("adam rejects a non-finite gradient without side effects") {
  Tensor p = Tensor::from({2}, {1.0, 2.0}, true);
  std::vector<Tensor> params = {p};
  auto state = train::make_adam(params, 0.9, 0.998, 1e-9);
  p.node()->grad = std::vector<Real>{0.5, 0.5};
  train::adam_step(params, state, 0.1);
  const auto before = values(p);
  const auto m = state.m, v = state.v;
  p.node()->grad = std::vector<Real>{0.5, std::nan("")};
  CHECK(testutil::error_kind_of([&] { train::adam_step(params, state, 0.1); }) ==
        ErrorKind::Numeric);
  CHECK(values(p) == before);
  CHECK(state.m == m);
  CHECK(state.v == v);
  CHECK(state.step == 1);
}

TEST_CASE("learning rate warms up then decays") {
  const std::size_t warmup = 400;
  double prev = 0;
  for (std::uint64_t s = 1; s <= warmup; ++s) {
    const double lr = train::learning_rate(s, 64, warmup, 2.0);
    CHECK(lr > prev);
    prev = lr;
  }
  CHECK(std::abs(prev - 2.0 / std::sqrt(64.0 * 400.0)) <= 1e-15);
  for (std::uint64_t s = warmup + 1; s <= 3000; s += 7) {
    const double lr = train::learning_rate(s, 64, warmup, 2.0);
    CHECK(lr < prev);
    prev = lr;
  }
  CHECK(train::learning_rate(1, 64, warmup, 2.0) ==
        doctest::Approx(2.0 / 8.0 / std::pow(400.0, 1.5)).epsilon(1e-12));
}

TEST_CASE("gradient clipping") {
  Tensor a = Tensor::zeros({2}, true), b = Tensor::zeros({1}, true);
  std::vector<Tensor> params = {a, b};
  a.node()->grad = std::vector<Real>{3.0, 0.0};
  b.node()->grad = std::vector<Real>{4.0};
  CHECK(train::clip_gradients(params, 10.0) == doctest::Approx(5.0));
  CHECK(a.grad()[0] == 3.0);
  CHECK(train::clip_gradients(params, 1.0) == doctest::Approx(5.0));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(b.grad()[0] == doctest::Approx(0.8));
}

TEST_CASE("named streams are independent of each other") {
  auto s = train::Streams::from_seed(3);
  auto t = train::Streams::from_seed(3);
  for (int i = 0; i < 1000; ++i) s.noise.next_u64();
  CHECK(s.data.next_u64() == t.data.next_u64());
  CHECK(s.dropout.next_u64() == t.dropout.next_u64());
  auto u = train::Streams::from_seed(4);
  CHECK(u.data.next_u64() != train::Streams::from_seed(3).data.next_u64());
  CHECK(train::Streams::from_seed(3).data.next_u64() !=
        train::Streams::from_seed(3).noise.next_u64());
}

TEST_CASE("a step leaves shuffle matrices projected") {
  model::Model m(tiny_model(), 1);
  auto cfg = tiny_train(5);
  train::Trainer trainer(m, cfg);
  const auto pairs = train::training_pairs(tiny_task(), 16);
  const auto batch = tasks::make_batch(pairs);
  for (int i = 0; i < 5; ++i) trainer.train_step(batch);
  for (const auto& s : m.shuffle_matrices()) {
    const std::size_t n = s.dim(0);
    for (std::size_t r = 0; r < n; ++r) {
      double row = 0, col = 0;
      for (std::size_t c = 0; c < n; ++c) {
        row += s.data()[r * n + c];
        col += s.data()[c * n + r];
        CHECK(s.data()[r * n + c] >= 0);
        CHECK(s.data()[r * n + c] <= 1 + 1e-12);
      }
      // Rows are normalized last; columns only approximately.
      CHECK(std::abs(row - 1) <= 1e-12);
      CHECK(std::abs(col - 1) <= 1e-3);
    }
  }
}

TEST_CASE("overfitting one batch lowers the loss") {
  model::Model m(tiny_model(), 2);
  train::Trainer trainer(m, tiny_train(50));
  const auto batch = tasks::make_batch(train::training_pairs(tiny_task(), 8));
  const double first = trainer.train_step(batch).loss;
  double last = first;
  for (int i = 1; i < 50; ++i) last = trainer.train_step(batch).loss;
  CHECK(last < first);
  CHECK(trainer.step() == 50);
}

TEST_CASE("identical seeds give identical training traces") {
  auto run = [] {
    model::Model m(tiny_model(), train::init_seed(17));
    return train::run_training(m, tiny_train(40), tiny_task(), {});
  };
  const auto a = run(), b = run();
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(a.log[i].penalty_sum == b.log[i].penalty_sum);
  }
  CHECK(a.final_metrics.token_accuracy == b.final_metrics.token_accuracy);
}

TEST_CASE("resuming reproduces the uninterrupted run") {
  testutil::TempDir dir("resume");
  auto cfg = tiny_train(200);
  cfg.target_token_acc = 1.0;  // turns periodic evaluation on; not reached by this model
  {
    model::Model m(tiny_model(), train::init_seed(cfg.seed));
    train::RunOptions o;
    o.out_dir = dir.str("full");
    train::run_training(m, cfg, tiny_task(), o);
  }
  auto half = cfg;
  half.max_steps = 100;
  {
    model::Model m(tiny_model(), train::init_seed(cfg.seed));
    train::RunOptions o;
    o.out_dir = dir.str("split");
    train::run_training(m, half, tiny_task(), o);
  }
  {
    const auto ckpt = model::load_checkpoint(dir.str("split") + "/final.ckpt");
    CHECK(ckpt.step == 100);
    model::Model m(tiny_model(), 999);
    train::RunOptions o;
    o.out_dir = dir.str("split");
    o.resume = &ckpt;
    train::run_training(m, cfg, tiny_task(), o);
  }
  const std::filesystem::path full = dir.str("full"), split = dir.str("split");
  for (const char* name : {"metrics.log", "eval.log", "shuffle.log"}) {
    INFO(name);
    CHECK(!slurp(full / name).empty());
    CHECK(slurp(full / name) == slurp(split / name));
  }
  CHECK(line_count(slurp(full / "metrics.log")) == 21);

  // Resuming into a directory that already holds later steps trims them first.
  const auto mid = model::load_checkpoint((full / "step_100.ckpt").string());
  model::Model m(tiny_model(), 7);
  train::RunOptions o;
  o.out_dir = full.string();
  o.resume = &mid;
  train::run_training(m, cfg, tiny_task(), o);
  for (const char* name : {"metrics.log", "eval.log", "shuffle.log"})
    CHECK(slurp(full / name) == slurp(split / name));
}

TEST_CASE("evaluation metrics") {
  const auto data = train::evaluation_pairs(tiny_task(), 50);
  const train::DecodeFn oracle = [&](const auto& sources, std::vector<bool>& finished) {
    std::vector<std::vector<std::int32_t>> out;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      out.push_back(data[i].target);
      finished[i] = true;
    }
    return out;
  };
  const auto perfect = train::evaluate(oracle, data);
  CHECK(perfect.token_accuracy == 1.0);
  CHECK(perfect.exact_match == 1.0);
  CHECK(perfect.sequences == 50);

  const train::DecodeFn unfinished = [&](const auto& sources, std::vector<bool>& finished) {
    auto out = oracle(sources, finished);
    std::fill(finished.begin(), finished.end(), false);
    return out;
  };
  const auto partial = train::evaluate(unfinished, data);
  CHECK(partial.exact_match == 0.0);
  CHECK(partial.token_accuracy < 1.0);
  CHECK(partial.exact_match <= partial.token_accuracy);

  CHECK(testutil::error_kind_of([&] { train::evaluate(oracle, {}); }) == ErrorKind::Contract);
}

TEST_CASE("random guessing scores one in twenty") {
  tasks::TaskSpec t = tiny_task();
  t.vocab = 20;
  const auto data = train::evaluation_pairs(t, 2000);
  Rng rng(77);
  const train::DecodeFn guess = [&](const auto& sources, std::vector<bool>& finished) {
    std::vector<std::vector<std::int32_t>> out;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      std::vector<std::int32_t> h;
      for (std::size_t k = 0; k < data[i].target.size(); ++k)
        h.push_back(tasks::kFirstContent + std::int32_t(rng.below(20)));
      out.push_back(h);
      finished[i] = rng.below(20) == 0;
    }
    return out;
  };
  const auto m = train::evaluate(guess, data);
  CHECK(m.tokens >= 10000);
  CHECK(std::abs(m.token_accuracy - 0.05) <= 0.01);
  CHECK(m.exact_match <= m.token_accuracy);
}

TEST_CASE("training configuration validation") {
  auto c = tiny_train(10);
  c.batch_tokens = 0;
  CHECK(testutil::error_kind_of([&] { c.validate(); }) == ErrorKind::Config);
  c = tiny_train(10);
  c.beta2 = 1.0;
  CHECK(testutil::error_kind_of([&] { c.validate(); }) == ErrorKind::Config);
}
