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
#include <vector>

#include "numerics/tensor.hpp"
#include "random.hpp"

namespace mute::num {

// Matrix product over the last two axes. Leading (batch) axes must match,
// or one operand may have none and is then reused for every batch entry.
Tensor matmul(const Tensor& a, const Tensor& b);

// Pointwise binary ops. `b` must have the same shape as `a`, or a shape equal
// to a trailing suffix of `a`'s shape (broadcast over leading axes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, Real factor);
Tensor relu(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);

// Normalizes over the last axis, then applies gain and bias of that width.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, const Shape& shape);

// Rows of `table` selected by `ids`; output shape [ids.size(), width].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);

// Row gather over a rank-2 tensor: output row r is x[index[r]], or the
// `fill` vector when index[r] < 0.
Tensor gather_rows(const Tensor& x, std::span<const std::int64_t> index,
                   const Tensor& fill = {});

// sum_j w.flat[offset + j * stride] * xs[j]; all xs share one shape.
Tensor weighted_sum(std::span<const Tensor> xs, const Tensor& w, std::size_t offset = 0,
                    std::size_t stride = 1);

// Inverted dropout. Returns `x` itself when rate == 0.
Tensor dropout(const Tensor& x, Real rate, Rng& rng);

// Label-smoothed cross entropy of logits [N, V] against `targets` (negative
// entries are ignored), averaged over the counted rows. The smoothed target
// puts 1 - eps on the gold id and eps / V on every id.
Tensor smoothed_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                              Real eps);

}  // namespace mute::num
