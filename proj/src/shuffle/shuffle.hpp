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

#include <span>
#include <vector>

#include "numerics/tensor.hpp"
#include "random.hpp"

namespace mute::shuffle {

using num::Tensor;

// Learnable [I, I] matrix: uniform 1/I plus jitter in [0, 0.01/I], projected.
Tensor init_matrix(std::size_t units, Rng& rng);

// G_i = sum_j M[j, i] * F_j, i.e. the stacked outputs left-multiplied by M^T.
std::vector<Tensor> permute_outputs(const Tensor& m, std::span<const Tensor> outputs);

// Clamp at zero, normalize columns, then normalize rows (one pass each), in
// place and outside the graph. Throws a projection failure when a row or
// column is entirely zero after clamping.
void project(Tensor& m);
void project_values(std::span<Real> values, std::size_t units);

// sum over rows and columns of (l1 - l2); zero exactly on permutation
// matrices among row-stochastic nonnegative ones. Differentiable; the l1
// term has subgradient 0 at zero entries.
Tensor penalty(const Tensor& m);
Real penalty_value(std::span<const Real> values, std::size_t units);

// max over rows of (1 - row maximum).
Real hardness(const Tensor& m);

// Permutation p (row i -> column p[i]) maximizing sum_i M[i, p[i]], by
// exhaustive search; ties go to the lexicographically smallest p.
std::vector<std::size_t> to_hard_permutation(const Tensor& m);

// Hard matrix with M[i, p[i]] = 1.
Tensor permutation_matrix(std::span<const std::size_t> p);

}  // namespace mute::shuffle
