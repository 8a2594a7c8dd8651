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

#ifndef CFGUARD_KERNELS_H_
#define CFGUARD_KERNELS_H_

#include <cstddef>
#include <span>
#include <string_view>

namespace cfguard::kernels {

// Dense double-precision reductions used by the metrics and training inner
// loops. Scalar reference implementations always exist; on x86-64 an AVX2
// variant is selected at runtime when the CPU supports it, on AArch64 a NEON
// variant. Set CFGUARD_SIMD=scalar in the environment to force the reference
// path. Variants agree with the reference to normal summation accuracy
// (tested at 1e-12 on unit-scale data), not bit-for-bit.

struct Ops {
  double (*sum)(std::span<const double>);
  double (*dot)(std::span<const double>, std::span<const double>);
  // Sum of squared deviations from mu.
  double (*sum_sq_dev)(std::span<const double>, double mu);
  // In-place clamp to [0, 1].
  void (*clip01)(std::span<double>);
  const char* name;
};

// Active implementation, chosen once per process.
const Ops& Active();

// Named implementation for equivalence tests: "scalar", "avx2", "neon".
// Returns nullptr if the variant is not compiled in or not runnable here.
const Ops* Variant(std::string_view name);

inline double Sum(std::span<const double> x) { return Active().sum(x); }
inline double Dot(std::span<const double> x, std::span<const double> y) {
  return Active().dot(x, y);
}
inline double SumSqDev(std::span<const double> x, double mu) {
  return Active().sum_sq_dev(x, mu);
}
inline void Clip01(std::span<double> x) { Active().clip01(x); }

}  // namespace cfguard::kernels

#endif  // CFGUARD_KERNELS_H_
