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
#include <functional>

#include "numerics/grad_check.hpp"
#include "numerics/ops.hpp"
#include "support/helpers.hpp"
#include "support/oracles.hpp"

using namespace mute;
using num::Tensor;
using testutil::random_tensor;
using testutil::values;

TEST_CASE("matmul small cases") {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor m = Tensor::from({2, 2}, {2, 3, 4, 5});
  CHECK(values(num::matmul(eye, m)) == std::vector<Real>{2, 3, 4, 5});
  CHECK(num::matmul(Tensor::from({1, 1}, {2}), Tensor::from({1, 1}, {3})).item() == 6);
}

TEST_CASE("matmul agrees with a triple loop") {
  Rng rng(11);
  for (std::size_t p = 1; p <= 8; p += 3)
    for (std::size_t q = 1; q <= 8; q += 2)
      for (std::size_t r = 1; r <= 8; r += 3) {
        const Tensor a = random_tensor({p, q}, rng), b = random_tensor({q, r}, rng);
        const auto want = oracle::matmul(oracle::from_tensor(a), oracle::from_tensor(b));
        std::vector<Real> w(want.v.begin(), want.v.end());
        CHECK(testutil::max_abs_diff(num::matmul(a, b).data(), w) <= 1e-12);
      }
}

TEST_CASE("matmul batched and broadcast") {
  Rng rng(12);
  const Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({4, 5}, rng);
  const Tensor c = num::matmul(a, b);
  CHECK(c.shape() == num::Shape{2, 3, 5});
  for (std::size_t n = 0; n < 2; ++n) {
    oracle::Mat an(3, 4);
    for (std::size_t i = 0; i < 12; ++i) an.v[i] = a.data()[n * 12 + i];
    const auto want = oracle::matmul(an, oracle::from_tensor(b));
    for (std::size_t i = 0; i < 15; ++i) CHECK(std::abs(c.data()[n * 15 + i] - want.v[i]) <= 1e-12);
  }
}

TEST_CASE("matmul shape mismatch names both shapes") {
  try {
    num::matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL("no error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Dimension);
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
}

TEST_CASE("softmax values") {
  const Tensor s = num::softmax(Tensor::from({3}, {1, 2, 3}), 0);
  CHECK(s.at(0) == doctest::Approx(0.09003).epsilon(1e-4));
  CHECK(s.at(1) == doctest::Approx(0.24473).epsilon(1e-4));
  CHECK(s.at(2) == doctest::Approx(0.66524).epsilon(1e-4));
  // direct evaluation
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(std::abs(s.at(0) - std::exp(1.0) / z) <= 1e-15);

  const Tensor h = num::softmax(Tensor::from({2}, {0, 0}), 0);
  CHECK(values(h) == std::vector<Real>{0.5, 0.5});
  const Tensor a = num::softmax(Tensor::from({2}, {0, 1}), 0);
  for (Real c : {-50.0, 3.5, 700.0}) {
    const Tensor b = num::softmax(Tensor::from({2}, {c, c + 1}), 0);
    CHECK(testutil::max_abs_diff(a.data(), b.data()) <= 1e-15);
  }
}

TEST_CASE("softmax rows sum to one on either axis") {
  Rng rng(13);
  const Tensor x = random_tensor({4, 6}, rng, false, -20, 20);
  for (std::size_t axis : {0u, 1u}) {
    const Tensor s = num::softmax(x, axis);
    const std::size_t outer = axis == 0 ? 6 : 4, inner = axis == 0 ? 4 : 6;
    for (std::size_t o = 0; o < outer; ++o) {
      double total = 0;
      for (std::size_t i = 0; i < inner; ++i) {
        const Real v = axis == 0 ? s.data()[i * 6 + o] : s.data()[o * 6 + i];
        CHECK(v >= 0);
        CHECK(v <= 1);
        total += v;
      }
      CHECK(std::abs(total - 1) <= 1e-12);
    }
  }
}

TEST_CASE("layer norm") {
  const Tensor g = Tensor::full({3}, 1), b = Tensor::zeros({3});
  CHECK(values(num::layer_norm(Tensor::full({1, 3}, 7), g, b, 1e-6)) == std::vector<Real>(3, 0));
  const Tensor r = num::layer_norm(Tensor::from({1, 2}, {1, -1}), Tensor::full({2}, 1),
                                   Tensor::zeros({2}), 1e-15);
  CHECK(std::abs(r.at(0) - 1) <= 1e-12);
  CHECK(std::abs(r.at(1) + 1) <= 1e-12);

  Rng rng(14);
  const Tensor x = random_tensor({5, 7}, rng, false, -3, 3);
  const Tensor gain = random_tensor({7}, rng), bias = random_tensor({7}, rng);
  const auto want = oracle::layer_norm(oracle::from_tensor(x), oracle::from_tensor(gain),
                                       oracle::from_tensor(bias), 1e-6);
  std::vector<Real> w(want.v.begin(), want.v.end());
  CHECK(testutil::max_abs_diff(num::layer_norm(x, gain, bias, 1e-6).data(), w) <= 1e-12);
}

TEST_CASE("elementwise ops") {
  CHECK(values(num::relu(Tensor::from({3}, {-1, 0, 2}))) == std::vector<Real>{0, 0, 2});
  const Tensor x = Tensor::from({2}, {1.5, -2});
  CHECK(values(num::add(x, Tensor::zeros({2}))) == values(x));
  CHECK(values(num::scale(Tensor::from({2}, {1, 2}), 0.5)) == std::vector<Real>{0.5, 1.0});
  CHECK(values(num::sub(x, x)) == std::vector<Real>{0, 0});
  CHECK(values(num::mul(x, x)) == std::vector<Real>{2.25, 4});
  // trailing-suffix broadcast
  const Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(values(num::add(m, Tensor::from({2}, {10, 20}))) == std::vector<Real>{11, 22, 13, 24});
  CHECK(testutil::error_kind_of([&] { num::add(m, Tensor::zeros({3})); }) ==
        ErrorKind::Dimension);
}

TEST_CASE("backward basics") {
  Rng rng(15);
  const Tensor x = random_tensor({4}, rng);
  num::backward(num::sum(num::mul(x, x)));
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(x.grad()[i] - 2 * x.at(i)) <= 1e-15);

  const Tensor y = random_tensor({3}, rng);
  const Tensor c = Tensor::scalar(2, true);
  num::backward(num::scale(c, 3));
  CHECK(y.grad() == std::vector<Real>(3, 0));
  CHECK_FALSE(y.has_grad());

  CHECK(testutil::error_kind_of([&] { num::backward(num::mul(y, y)); }) == ErrorKind::Contract);
}

TEST_CASE("backward through a matmul-relu-sum chain") {
  Rng rng(16);
  const Tensor w = random_tensor({4, 3}, rng, false);
  Tensor x = random_tensor({2, 4}, rng);
  const auto r = num::grad_check(
      [&](const Tensor& v) { return num::sum(num::relu(num::matmul(v, w))); }, x);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("a tensor used twice accumulates both paths") {
  Rng rng(17);
  Tensor x = random_tensor({3}, rng);
  const auto r = num::grad_check(
      [](const Tensor& v) { return num::sum(num::add(num::mul(v, v), num::scale(v, 3))); }, x);
  CHECK(r.max_rel_error < 1e-6);
  x.zero_grad();
  num::backward(num::sum(num::add(num::mul(x, x), num::scale(x, 3))));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(x.grad()[i] - (2 * x.at(i) + 3)) <= 1e-14);
}

TEST_CASE("relative error") {
  CHECK(num::relative_error(2.0, 1.0) == 0.5);
  CHECK(num::relative_error(-1.0, 1.0) == 2.0);
  CHECK(num::relative_error(0.0, 0.0) == 0.0);
  // Below the floor the difference is measured against the floor.
  CHECK(num::relative_error(3e-9, 1e-9) == doctest::Approx(2e-3));
  CHECK(num::relative_error(0.0, 5e-7) == doctest::Approx(0.5));
}

TEST_CASE("grad_check examples") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  CHECK(num::grad_check([](const Tensor& v) { return num::sum(num::mul(v, v)); }, x)
            .max_rel_error < 1e-8);
  CHECK(num::grad_check([](const Tensor&) { return Tensor::scalar(4); }, x).max_rel_error == 0);

  num::testing::set_gradient_fault(true);
  Tensor pos = Tensor::from({3}, {0.5, 1, 2}, true);
  const auto bad = num::grad_check([](const Tensor& v) { return num::sum(num::relu(v)); }, pos);
  num::testing::set_gradient_fault(false);
  CHECK(bad.max_rel_error == doctest::Approx(0.5).epsilon(1e-6));
  CHECK_FALSE(bad.passed(1e-4));
}

TEST_CASE("grad_check rejects a nondeterministic function") {
  Rng noise(3);
  Tensor x = Tensor::from({2}, {1, 2}, true);
  const auto f = [&](const Tensor& v) {
    return num::scale(num::sum(v), Real(1 + noise.uniform()));
  };
  CHECK(testutil::error_kind_of([&] { num::grad_check(f, x); }) == ErrorKind::Contract);
}

TEST_CASE("every op passes grad_check at ten random points") {
  Rng rng(18);
  using Op = std::function<Tensor(const Tensor&)>;
  const Tensor w = random_tensor({4, 3}, rng, false);
  const Tensor gain = random_tensor({4}, rng, false), bias = random_tensor({4}, rng, false);
  const Tensor other = random_tensor({3, 4}, rng, false);
  const std::vector<std::int32_t> ids = {0, 2, 1, 2};
  const std::vector<std::int32_t> targets = {1, -1, 0};
  const std::vector<std::int64_t> rows = {2, -1, 0};
  const Tensor fill = random_tensor({4}, rng, false);
  const std::vector<std::pair<const char*, Op>> ops = {
      {"matmul left", [&](const Tensor& x) { return num::matmul(x, w); }},
      {"matmul right", [&](const Tensor& x) { return num::matmul(other, num::reshape(x, {4, 3})); }},
      {"add", [&](const Tensor& x) { return num::add(x, other); }},
      {"add broadcast", [&](const Tensor& x) { return num::add(other, num::reshape(x, {3, 4})); }},
      {"sub", [&](const Tensor& x) { return num::sub(other, x); }},
      {"mul", [&](const Tensor& x) { return num::mul(x, other); }},
      {"scale", [&](const Tensor& x) { return num::scale(x, -1.7); }},
      {"relu", [&](const Tensor& x) { return num::relu(x); }},
      {"softmax rows", [&](const Tensor& x) { return num::softmax(x, 1); }},
      {"softmax cols", [&](const Tensor& x) { return num::softmax(x, 0); }},
      {"layer norm", [&](const Tensor& x) { return num::layer_norm(x, gain, bias, 1e-6); }},
      {"mean", [&](const Tensor& x) { return num::mean(x); }},
      {"embedding", [&](const Tensor& x) { return num::embedding(x, ids); }},
      {"gather rows", [&](const Tensor& x) { return num::gather_rows(x, rows, fill); }},
      {"cross entropy",
       [&](const Tensor& x) { return num::smoothed_cross_entropy(x, targets, 0.1); }},
  };
  for (const auto& [name, op] : ops) {
    CAPTURE(name);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor x = random_tensor({3, 4}, rng);
      const Tensor probe = random_tensor(op(x).shape(), rng, false);
      const auto r = num::grad_check(
          [&](const Tensor& v) { return num::sum(num::mul(op(v), probe)); }, x);
      CHECK(r.max_rel_error < 1e-6);
    }
  }
}

TEST_CASE("weighted sum gradients reach weights and inputs") {
  Rng rng(19);
  std::vector<Tensor> xs = {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)};
  std::vector<Tensor> wrt = {xs[0], xs[1], random_tensor({2}, rng)};
  const Tensor probe = random_tensor({2, 3}, rng, false);
  const auto r = num::grad_check(
      [&] { return num::sum(num::mul(num::weighted_sum(xs, wrt[2]), probe)); }, wrt);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("smoothed cross entropy of uniform logits is log V") {
  const Tensor logits = Tensor::zeros({3, 20});
  const std::vector<std::int32_t> t = {4, 7, -1};
  CHECK(std::abs(num::smoothed_cross_entropy(logits, t, 0).item() - std::log(20.0)) <= 1e-12);
  CHECK(std::abs(num::smoothed_cross_entropy(logits, t, 0.1).item() - std::log(20.0)) <= 1e-12);
  const std::vector<std::int32_t> none = {-1, -1, -1};
  CHECK(testutil::error_kind_of([&] { num::smoothed_cross_entropy(logits, none, 0.1); }) ==
        ErrorKind::Contract);
}

TEST_CASE("dropout") {
  Rng rng(20);
  const Tensor x = Tensor::full({1000}, 1);
  CHECK(num::dropout(x, 0, rng).node() == x.node());
  const Tensor y = num::dropout(x, 0.25, rng);
  std::size_t zeros = 0;
  for (Real v : y.data()) {
    if (v == 0) ++zeros;
    else CHECK(std::abs(v - 1 / 0.75) <= 1e-15);
  }
  CHECK(zeros > 180);
  CHECK(zeros < 320);
}

TEST_CASE("no-grad guard stops recording") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y;
  {
    num::NoGradGuard g;
    CHECK_FALSE(num::grad_enabled());
    y = num::mul(x, x);
  }
  CHECK(num::grad_enabled());
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("tensor construction checks extents") {
  CHECK(testutil::error_kind_of([] { Tensor::from({2, 2}, {1, 2, 3}); }) == ErrorKind::Dimension);
  CHECK(num::shape_numel({2, 3, 4}) == 24);
}
