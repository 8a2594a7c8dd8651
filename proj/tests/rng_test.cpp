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

#include "cfguard/rng.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "doctest.h"

using cfguard::Rng;

TEST_CASE("output is a pure function of key and counter") {
  Rng a(42);
  Rng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.NextU64() == b.NextU64());

  Rng c(42);
  CHECK(c.NextU64() == Rng::Finalize(42 + 1 * Rng::kGoldenGamma));
  CHECK(c.NextU64() == Rng::Finalize(42 + 2 * Rng::kGoldenGamma));
}

TEST_CASE("substreams decorrelate by label and index") {
  Rng root(7);
  CHECK(root.Substream("fdw").key() != root.Substream("forest").key());
  CHECK(root.Substream("fdw").key() == root.Substream("fdw").key());
  CHECK(root.Substream(uint64_t{0}).key() != root.Substream(uint64_t{1}).key());
  // Deriving a substream does not advance the parent.
  CHECK(root.counter() == 0);
}

TEST_CASE("NextDouble covers [0,1)") {
  Rng rng(3);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = rng.NextDouble();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    sum += x;
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("NextIndex stays in range and is roughly uniform") {
  Rng rng(5);
  std::array<int, 7> counts{};
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    uint64_t idx = rng.NextIndex(7);
    REQUIRE(idx < 7);
    ++counts[idx];
  }
  for (int c : counts) {
    CHECK(std::abs(c - n / 7) < n / 7 / 10);
  }
}

TEST_CASE("NextGaussian has unit scale") {
  Rng rng(9);
  const int n = 50000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double g = rng.NextGaussian();
    sum += g;
    sum_sq += g * g;
  }
  double mean = sum / n;
  CHECK(std::abs(mean) < 0.02);
  CHECK(sum_sq / n - mean * mean == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("NextCategorical matches the target distribution") {
  std::vector<double> p = {0.5, 0.2, 0.3};
  Rng rng(11);
  std::array<int, 3> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[rng.NextCategorical(p)];
  for (size_t i = 0; i < p.size(); ++i) {
    CHECK(static_cast<double>(counts[i]) / n ==
          doctest::Approx(p[i]).epsilon(0.03));
  }
}
