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

#include "shuffle/shuffle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "numerics/ops.hpp"

namespace mute::shuffle {

namespace {

std::size_t square_size(const Tensor& m) {
  require(m.rank() == 2 && m.dim(0) == m.dim(1), ErrorKind::Dimension,
          "shuffle matrix must be square, got " + num::shape_str(m.shape()));
  return m.dim(0);
}

}  // namespace

Tensor init_matrix(std::size_t units, Rng& rng) {
  require(units >= 1, ErrorKind::Config, "shuffle matrix needs at least one unit");
  const Real base = Real(1) / Real(units);
  std::vector<Real> values(units * units);
  for (auto& v : values) v = base + static_cast<Real>(rng.uniform(0.0, 0.01)) * base;
  Tensor m = Tensor::from({units, units}, std::move(values), true);
  project(m);
  return m;
}

std::vector<Tensor> permute_outputs(const Tensor& m, std::span<const Tensor> outputs) {
  const std::size_t units = square_size(m);
  require(outputs.size() == units, ErrorKind::Config,
          "shuffle matrix of size " + std::to_string(units) + " applied to " +
              std::to_string(outputs.size()) + " unit outputs");
  std::vector<Tensor> permuted;
  permuted.reserve(units);
  for (std::size_t i = 0; i < units; ++i)
    permuted.push_back(num::weighted_sum(outputs, m, i, units));
  return permuted;
}

void project_values(std::span<Real> values, std::size_t units) {
  require(values.size() == units * units, ErrorKind::Dimension,
          "shuffle matrix storage does not match its size");
  for (auto& v : values) v = std::max(v, Real(0));
  for (std::size_t j = 0; j < units; ++j) {
    Real col = 0;
    for (std::size_t i = 0; i < units; ++i) col += values[i * units + j];
    require(col > Real(0) && std::isfinite(col), ErrorKind::Projection,
            "shuffle matrix column " + std::to_string(j) + " is zero after clamping");
    for (std::size_t i = 0; i < units; ++i) values[i * units + j] /= col;
  }
  for (std::size_t i = 0; i < units; ++i) {
    Real row = 0;
    for (std::size_t j = 0; j < units; ++j) row += values[i * units + j];
    require(row > Real(0) && std::isfinite(row), ErrorKind::Projection,
            "shuffle matrix row " + std::to_string(i) + " is zero after clamping");
    for (std::size_t j = 0; j < units; ++j) values[i * units + j] /= row;
  }
}

void project(Tensor& m) { project_values(m.mutable_data(), square_size(m)); }

Real penalty_value(std::span<const Real> values, std::size_t units) {
  Real total = 0;
  for (std::size_t i = 0; i < units; ++i) {
    Real l1 = 0, sq = 0;
    for (std::size_t j = 0; j < units; ++j) {
      const Real v = values[i * units + j];
      l1 += std::abs(v);
      sq += v * v;
    }
    total += l1 - std::sqrt(sq);
  }
  for (std::size_t j = 0; j < units; ++j) {
    Real l1 = 0, sq = 0;
    for (std::size_t i = 0; i < units; ++i) {
      const Real v = values[i * units + j];
      l1 += std::abs(v);
      sq += v * v;
    }
    total += l1 - std::sqrt(sq);
  }
  return total;
}

Tensor penalty(const Tensor& m) {
  const std::size_t units = square_size(m);
  const Real value = penalty_value(m.data(), units);
  return num::make_result("shuffle_penalty", {1}, {value}, {m}, [units](num::Node& o) {
    const auto& v = o.parents[0]->data;
    auto& g = o.parents[0]->grad_buffer();
    std::vector<Real> row_norm(units, 0), col_norm(units, 0);
    for (std::size_t i = 0; i < units; ++i)
      for (std::size_t j = 0; j < units; ++j) {
        row_norm[i] += v[i * units + j] * v[i * units + j];
        col_norm[j] += v[i * units + j] * v[i * units + j];
      }
    for (auto& r : row_norm) r = std::sqrt(r);
    for (auto& c : col_norm) c = std::sqrt(c);
    for (std::size_t i = 0; i < units; ++i)
      for (std::size_t j = 0; j < units; ++j) {
        const Real x = v[i * units + j];
        const Real sign = x > 0 ? Real(1) : x < 0 ? Real(-1) : Real(0);
        Real d = Real(2) * sign;
        if (row_norm[i] > 0) d -= x / row_norm[i];
        if (col_norm[j] > 0) d -= x / col_norm[j];
        g[i * units + j] += o.grad[0] * d;
      }
  });
}

Real hardness(const Tensor& m) {
  const std::size_t units = square_size(m);
  const auto v = m.data();
  Real worst = 0;
  for (std::size_t i = 0; i < units; ++i) {
    const Real mx = *std::max_element(v.begin() + i * units, v.begin() + (i + 1) * units);
    worst = std::max(worst, Real(1) - mx);
  }
  return worst;
}

std::vector<std::size_t> to_hard_permutation(const Tensor& m) {
  const std::size_t units = square_size(m);
  require(units <= 8, ErrorKind::Unsupported,
          "hard permutation search supports at most 8 units, got " + std::to_string(units));
  const auto v = m.data();
  std::vector<std::size_t> perm(units);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::size_t> best = perm;
  Real best_score = -std::numeric_limits<Real>::infinity();
  do {
    Real score = 0;
    for (std::size_t i = 0; i < units; ++i) score += v[i * units + perm[i]];
    if (score > best_score) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Tensor permutation_matrix(std::span<const std::size_t> p) {
  const std::size_t units = p.size();
  std::vector<Real> values(units * units, Real(0));
  for (std::size_t i = 0; i < units; ++i) {
    require(p[i] < units, ErrorKind::Contract, "not a permutation");
    values[i * units + p[i]] = Real(1);
  }
  return Tensor::from({units, units}, std::move(values), true);
}

}  // namespace mute::shuffle
