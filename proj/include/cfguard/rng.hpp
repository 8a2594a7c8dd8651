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

#ifndef CFGUARD_RNG_H_
#define CFGUARD_RNG_H_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

namespace cfguard {

// Counter-based 64-bit generator. Output i of a stream with key K is
// splitmix64_finalize(K + (i + 1) * GOLDEN_GAMMA), so the sequence is a pure
// function of (key, counter) and identical on every platform.
//
// Stream splitting: substream(label) derives a child key by finalizing the
// parent key combined with an FNV-1a hash of the label. All randomized code
// paths take their entropy from substreams of one master seed.
class Rng {
 public:
  explicit Rng(uint64_t key) : key_(key) {}

  static constexpr uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ull;

  static constexpr uint64_t Finalize(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static constexpr uint64_t HashLabel(std::string_view label) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a offset basis
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

  uint64_t key() const { return key_; }
  uint64_t counter() const { return counter_; }

  Rng Substream(std::string_view label) const {
    return Rng(Finalize(key_ ^ HashLabel(label)));
  }

  Rng Substream(uint64_t index) const {
    return Rng(Finalize(key_ + (index + 1) * 0x9e3779b97f4a7c16ull));
  }

  uint64_t NextU64() { return Finalize(key_ + (++counter_) * kGoldenGamma); }

  // Uniform in [0, 1), 53-bit resolution.
  double NextDouble() {
    return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [0, n) without modulo bias (Lemire reduction; accepting the
  // negligible 2^-64 bias of the single-multiply variant for determinism).
  uint64_t NextIndex(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(NextU64()) * n) >> 64);
  }

  // Box-Muller; consumes exactly two outputs per call.
  double NextGaussian() {
    double u1 = NextDouble();
    double u2 = NextDouble();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Draws an index from an (unnormalized is not allowed) probability vector
  // by inverse-CDF walk. The final bucket absorbs rounding slack.
  size_t NextCategorical(std::span<const double> p) {
    double u = NextDouble();
    double acc = 0.0;
    for (size_t i = 0; i + 1 < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return i;
    }
    return p.empty() ? 0 : p.size() - 1;
  }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace cfguard

#endif  // CFGUARD_RNG_H_
