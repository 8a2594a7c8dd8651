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

// Compiled with -mavx2 -mfma; only reachable after a runtime cpuid check.

#include "cfguard/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

namespace cfguard::kernels {

namespace {

double HSum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

double SumAvx2(std::span<const double> x) {
  size_t n = x.size();
  size_t i = 0;
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x.data() + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x.data() + i + 4));
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i];
  return HSum(_mm256_add_pd(acc0, acc1)) + tail;
}

double DotAvx2(std::span<const double> x, std::span<const double> y) {
  size_t n = x.size();
  size_t i = 0;
  __m256d acc = _mm256_setzero_pd();
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(x.data() + i),
                          _mm256_loadu_pd(y.data() + i), acc);
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += x[i] * y[i];
  return HSum(acc) + tail;
}

double SumSqDevAvx2(std::span<const double> x, double mu) {
  size_t n = x.size();
  size_t i = 0;
  __m256d m = _mm256_set1_pd(mu);
  __m256d acc = _mm256_setzero_pd();
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x.data() + i), m);
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double tail = 0.0;
  for (; i < n; ++i) {
    double d = x[i] - mu;
    tail += d * d;
  }
  return HSum(acc) + tail;
}

void Clip01Avx2(std::span<double> x) {
  size_t n = x.size();
  size_t i = 0;
  __m256d lo = _mm256_setzero_pd();
  __m256d hi = _mm256_set1_pd(1.0);
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x.data() + i);
    v = _mm256_min_pd(_mm256_max_pd(v, lo), hi);
    _mm256_storeu_pd(x.data() + i, v);
  }
  for (; i < n; ++i) {
    if (x[i] < 0.0) x[i] = 0.0;
    if (x[i] > 1.0) x[i] = 1.0;
  }
}

}  // namespace

extern const Ops kAvx2Ops;
const Ops kAvx2Ops = {SumAvx2, DotAvx2, SumSqDevAvx2, Clip01Avx2, "avx2"};

}  // namespace cfguard::kernels

#endif  // x86-64
