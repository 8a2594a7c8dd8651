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

#if defined(__aarch64__)

#include <arm_neon.h>

namespace cfguard::kernels {

namespace {

double SumNeon(std::span<const double> x) {
  size_t n = x.size();
  size_t i = 0;
  float64x2_t acc = vdupq_n_f64(0.0);
  for (; i + 2 <= n; i += 2) {
    acc = vaddq_f64(acc, vld1q_f64(x.data() + i));
  }
  double out = vaddvq_f64(acc);
  for (; i < n; ++i) out += x[i];
  return out;
}

double DotNeon(std::span<const double> x, std::span<const double> y) {
  size_t n = x.size();
  size_t i = 0;
  float64x2_t acc = vdupq_n_f64(0.0);
  for (; i + 2 <= n; i += 2) {
    acc = vfmaq_f64(acc, vld1q_f64(x.data() + i), vld1q_f64(y.data() + i));
  }
  double out = vaddvq_f64(acc);
  for (; i < n; ++i) out += x[i] * y[i];
  return out;
}

double SumSqDevNeon(std::span<const double> x, double mu) {
  size_t n = x.size();
  size_t i = 0;
  float64x2_t m = vdupq_n_f64(mu);
  float64x2_t acc = vdupq_n_f64(0.0);
  for (; i + 2 <= n; i += 2) {
    float64x2_t d = vsubq_f64(vld1q_f64(x.data() + i), m);
    acc = vfmaq_f64(acc, d, d);
  }
  double out = vaddvq_f64(acc);
  for (; i < n; ++i) {
    double d = x[i] - mu;
    out += d * d;
  }
  return out;
}

void Clip01Neon(std::span<double> x) {
  size_t n = x.size();
  size_t i = 0;
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(1.0);
  for (; i + 2 <= n; i += 2) {
    float64x2_t v = vld1q_f64(x.data() + i);
    vst1q_f64(x.data() + i, vminq_f64(vmaxq_f64(v, lo), hi));
  }
  for (; i < n; ++i) {
    if (x[i] < 0.0) x[i] = 0.0;
    if (x[i] > 1.0) x[i] = 1.0;
  }
}

}  // namespace

extern const Ops kNeonOps;
const Ops kNeonOps = {SumNeon, DotNeon, SumSqDevNeon, Clip01Neon, "neon"};

}  // namespace cfguard::kernels

#endif  // __aarch64__
