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
#include <stdexcept>
#include <string>

namespace mute {

#ifdef MUTE_REAL_FLOAT
using Real = float;
#else
using Real = double;
#endif

enum class ErrorKind {
  Dimension,    // shape mismatch between operands
  Contract,     // precondition of an operation violated
  Config,       // invalid or inconsistent configuration
  Input,        // bad user data (e.g. out-of-vocabulary id)
  Format,       // malformed file contents
  Io,           // filesystem failure
  Numeric,      // non-finite values
  Projection,   // shuffle matrix projection failed
  Unsupported,  // size or feature outside the supported range
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace mute
