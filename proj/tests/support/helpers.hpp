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

#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "numerics/tensor.hpp"
#include "random.hpp"

namespace testutil {

using mute::Real;
using mute::num::Tensor;

inline Tensor random_tensor(const mute::num::Shape& shape, mute::Rng& rng, bool grad = true,
                            double lo = -1, double hi = 1) {
  std::vector<Real> v(mute::num::shape_numel(shape));
  for (auto& e : v) e = Real(rng.uniform(lo, hi));
  return Tensor::from(shape, std::move(v), grad);
}

inline std::vector<Real> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline Real max_abs_diff(std::span<const Real> a, std::span<const Real> b) {
  REQUIRE(a.size() == b.size());
  Real worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

template <typename F>
mute::ErrorKind error_kind_of(F&& f) {
  try {
    f();
  } catch (const mute::Error& e) {
    return e.kind();
  }
  FAIL("expected a mute::Error");
  return mute::ErrorKind::Contract;
}

// Fresh scratch directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("mute_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& leaf = {}) const {
    return leaf.empty() ? path_.string() : (path_ / leaf).string();
  }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
