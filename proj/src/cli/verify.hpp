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

#include <string>
#include <vector>

namespace mute::cli {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// grad, shuffle, equivalence, determinism, diversity
std::vector<std::string> verify_suite_names();

// Runs the named suites (all when empty). With inject_gradient_fault the
// relu backward pass is deliberately corrupted for the duration of the run.
std::vector<SuiteResult> run_verify(const std::vector<std::string>& suites = {},
                                    bool inject_gradient_fault = false);

}  // namespace mute::cli
