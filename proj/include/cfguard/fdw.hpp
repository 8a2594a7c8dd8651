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

#ifndef CFGUARD_FDW_H_
#define CFGUARD_FDW_H_

#include <array>
#include <span>
#include <string>
#include <vector>

#include "cfguard/dataset.hpp"
#include "cfguard/metrics.hpp"
#include "json.hpp"

namespace cfguard {

// Fair data reweighting: turn the baseline model's sliced averages into a
// resampled, example-weighted training set.
//
// lambda is the example weight attached to every sampled copy; beta is the
// sampling sharpness of the softmax over slice losses (beta = 0 is uniform,
// large beta concentrates on the worst slice).

struct FdwArm {
  double lambda = 0.25;
  double beta = 50.0;
};

struct FdwHarmConfig {
  FdwArm safe;
  FdwArm unsafe;

  const FdwArm& ForGt(Label gt) const {
    return gt == Label::kSafe ? safe : unsafe;
  }
  FdwArm& ForGt(Label gt) { return gt == Label::kSafe ? safe : unsafe; }
};

struct FdwConfig {
  std::array<FdwHarmConfig, 4> per_harm;

  const FdwHarmConfig& ForHarm(HarmKind h) const {
    return per_harm[static_cast<size_t>(h)];
  }
  FdwHarmConfig& ForHarm(HarmKind h) {
    return per_harm[static_cast<size_t>(h)];
  }

  static FdwConfig FromJson(const nlohmann::json& doc);
  nlohmann::ordered_json ToJson() const;
};

// Slice loss: SA itself on the Safe side (high score on safe text is the
// failure mode), 1 - SA on the Unsafe side.
struct SliceLoss {
  SliceKey slice;
  Label gt = Label::kSafe;
  double loss = 0.0;
};

// One SliceLoss per slice present in the SA table for `gt`. Throws when the
// table side is empty.
std::vector<SliceLoss> SliceLosses(const SlicedAverages& sa, Label gt);

// Max-stabilized softmax over beta * loss; aligned with `losses`, sums to 1.
std::vector<double> SamplingDistribution(std::span<const SliceLoss> losses,
                                         double beta);

struct DrawRecord {
  std::string arm;  // "safe" | "unsafe"
  std::string slice;
  std::string source_id;
  std::string new_id;
};

struct ResampleResult {
  Dataset dataset;
  std::vector<DrawRecord> provenance;
  std::vector<std::string> warnings;
};

// Appendix-style resampling: the base copy of `train` keeps weight 1, then
// per gt arm N = |train| slice-first draws with replacement are appended as
// fresh records carrying weight lambda_gt. Slices without gt-matching train
// examples are dropped from the softmax support; an entirely empty gt class
// skips that arm with a warning. Deterministic given seed; the per-(harm,gt)
// RNG substream is documented in rng.hpp.
ResampleResult Resample(const Dataset& train, HarmKind harm,
                        const SlicedAverages& sa_baseline,
                        const FdwHarmConfig& config, uint64_t seed);

void WriteProvenanceJsonl(const std::vector<DrawRecord>& records,
                          const std::filesystem::path& path);

}  // namespace cfguard

#endif  // CFGUARD_FDW_H_
