// Copyright 2026 The cfguard Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cfguard/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace cfguard::kernels {

extern const Ops kScalarOps;
#if defined(__x86_64__) || defined(_M_X64)
extern const Ops kAvx2Ops;
#endif
#if defined(__aarch64__)
extern const Ops kNeonOps;
#endif

namespace {

const Ops* Detect() {
  const char* forced = std::getenv("CFGUARD_SIMD");
  if (forced != nullptr) {
    const Ops* v = Variant(forced);
    if (v != nullptr) return v;
    return &kScalarOps;
  }
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    return &kAvx2Ops;
  }
#endif
#if defined(__aarch64__)
  return &kNeonOps;
#endif
  return &kScalarOps;
}

}  // namespace

const Ops& Active() {
  static const Ops* active = Detect();
  return *active;
}

const Ops* Variant(std::string_view name) {
  if (name == "scalar") return &kScalarOps;
#if defined(__x86_64__) || defined(_M_X64)
  if (name == "avx2" && __builtin_cpu_supports("avx2") &&
      __builtin_cpu_supports("fma")) {
    return &kAvx2Ops;
  }
#endif
#if defined(__aarch64__)
  if (name == "neon") return &kNeonOps;
#endif
  return nullptr;
}

}  // namespace cfguard::kernels
