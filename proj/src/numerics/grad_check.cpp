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

#include "numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "random.hpp"

namespace mute::num {

Real relative_error(Real analytic, Real numeric) {
  const Real denom = std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const std::function<Tensor()>& loss, std::span<Tensor> wrt, Real h,
                           std::size_t max_per_tensor, std::uint64_t sample_seed) {
  require(h > Real(0), ErrorKind::Contract, "grad_check step must be positive");
  for (auto& t : wrt) {
    t.zero_grad();
    t.set_requires_grad(true);
  }
  const Tensor l0 = loss();
  require(l0.numel() == 1, ErrorKind::Contract, "grad_check needs a scalar function");
  const Real again = [&] {
    NoGradGuard guard;
    return loss().item();
  }();
  require(again == l0.item(), ErrorKind::Contract,
          "grad_check aborted: function is not deterministic (" + std::to_string(l0.item()) +
              " vs " + std::to_string(again) + ")");
  backward(l0);

  GradCheckResult result;
  NoGradGuard guard;
  for (std::size_t t = 0; t < wrt.size(); ++t) {
    std::vector<Real> analytic = wrt[t].grad();
    auto values = wrt[t].mutable_data();
    analytic.resize(values.size(), Real(0));
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t(0));
    if (max_per_tensor > 0 && coords.size() > max_per_tensor) {
      Rng rng(derive_seed(sample_seed, "grad_check." + std::to_string(t)));
      for (std::size_t k = 0; k < max_per_tensor; ++k)
        std::swap(coords[k], coords[k + rng.below(coords.size() - k)]);
      coords.resize(max_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const Real saved = values[i];
      values[i] = saved + h;
      const Real up = loss().item();
      values[i] = saved - h;
      const Real down = loss().item();
      values[i] = saved;
      const Real numeric = (up - down) / (Real(2) * h);
      const Real err = relative_error(analytic[i], numeric);
      ++result.coordinates;
      if (result.coordinates == 1 || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_tensor = t;
        result.worst_index = i;
        result.analytic = analytic[i];
        result.numeric = numeric;
      }
    }
  }
  return result;
}

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, Real h) {
  Tensor wrt[] = {x};
  return grad_check([&] { return f(x); }, wrt, h);
}

}  // namespace mute::num
