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

#ifndef CFGUARD_METRICS_H_
#define CFGUARD_METRICS_H_

#include <compare>
#include <map>
#include <optional>
#include <span>
#include <string>

#include "cfguard/dataset.hpp"
#include "json.hpp"

namespace cfguard {

// Threshold-agnostic fairness metrics. All functions are pure; `scores` is
// always aligned with dataset.examples() by index.

struct SliceKey {
  std::string category;
  std::string subgroup;
  auto operator<=>(const SliceKey&) const = default;
};

struct SliceStat {
  double mean = 0.0;
  size_t n = 0;

  bool operator==(const SliceStat&) const = default;
};

using SliceMap = std::map<SliceKey, SliceStat>;

// Mean model score per (category, subgroup) slice, conditioned on the ground
// truth for one harm. Slices with zero examples are absent, never zero.
struct SlicedAverages {
  SliceMap safe;
  SliceMap unsafe;

  const SliceMap& ForGt(Label gt) const {
    return gt == Label::kSafe ? safe : unsafe;
  }
};

struct AcvEntry {
  double acv = 0.0;
  std::optional<double> acv_safe;    // absent when no Safe-labeled sets
  std::optional<double> acv_unsafe;  // absent when no Unsafe-labeled sets
  size_t n_sets = 0;
  size_t n_singletons_excluded = 0;
};

struct EvalMetrics {
  double au_prc_test = 0.0;
  double au_prc_cf = 0.0;
  double acv = 0.0;
};

// Baseline vs. remediated deltas; a percentage is null when its reference
// value is zero.
struct MetricsComparison {
  EvalMetrics baseline;
  EvalMetrics remediated;
  std::optional<double> pct_au_prc_test;
  std::optional<double> pct_au_prc_cf;
  std::optional<double> pct_acv;
};

// Population variance (divide by n) of bounded model scores. Throws for
// fewer than two scores.
double CounterfactualVariance(std::span<const double> scores);

// Mean counterfactual variance over all non-singleton sets, plus the same
// conditioned on the sets' ground truth for `harm`.
AcvEntry Acv(const Dataset& dataset, std::span<const double> scores,
             HarmKind harm);

SlicedAverages ComputeSlicedAverages(const Dataset& dataset,
                                     std::span<const double> scores,
                                     HarmKind harm);

// Max minus min SA across a category's subgroups. Throws with fewer than two
// subgroup slices present.
double MaxSaGap(const SlicedAverages& sa, Label gt, std::string_view category);

// Average-precision (step) form over descending unique score thresholds,
// Unsafe as the positive class. Throws when no positives exist.
double AuPrc(std::span<const double> scores, std::span<const Label> labels);

// (new - old) / old * 100; null when old == 0.
std::optional<double> PctDelta(double old_value, double new_value);

MetricsComparison Compare(const EvalMetrics& baseline,
                          const EvalMetrics& remediated);

nlohmann::ordered_json SaToJson(const SlicedAverages& sa);
SlicedAverages SaFromJson(const nlohmann::json& doc);

}  // namespace cfguard

#endif  // CFGUARD_METRICS_H_
