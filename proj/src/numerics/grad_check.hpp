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
#include <functional>
#include <span>
#include <string>

#include "numerics/tensor.hpp"

namespace mute::num {

struct GradCheckResult {
  Real max_rel_error = 0;
  std::size_t worst_tensor = 0;  // index into the checked tensors
  std::size_t worst_index = 0;   // flat coordinate of the worst entry
  Real analytic = 0;             // values at the worst coordinate
  Real numeric = 0;
  std::size_t coordinates = 0;

  bool passed(Real tol) const { return max_rel_error < tol; }
};

// Central differences at h = 1e-5 carry about eps * |loss| / h of roundoff,
// so gradients below this floor are compared absolutely.
inline constexpr Real kRelativeErrorFloor = Real(1e-6);

// |a - n| / max(|a|, |n|, kRelativeErrorFloor) for one coordinate.
Real relative_error(Real analytic, Real numeric);

// Compares backward() against central differences for every coordinate of
// every tensor in `wrt`. `loss` must rebuild the graph from the current
// values on each call; it is evaluated twice before checking and the check
// is aborted with a contract error if the two values differ.
// With max_per_tensor > 0, larger tensors are checked on that many distinct
// coordinates drawn from sample_seed.
GradCheckResult grad_check(const std::function<Tensor()>& loss, std::span<Tensor> wrt,
                           Real h = Real(1e-5), std::size_t max_per_tensor = 0,
                           std::uint64_t sample_seed = 0);

// Single-input form: f(x) -> scalar.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                           Real h = Real(1e-5));

}  // namespace mute::num
