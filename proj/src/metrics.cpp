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

#include "cfguard/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

#include "cfguard/kernels.hpp"

namespace cfguard {

double CounterfactualVariance(std::span<const double> scores) {
  if (scores.size() < 2) {
    throw ValidationError("singleton counterfactual set");
  }
  double n = static_cast<double>(scores.size());
  double mean = kernels::Sum(scores) / n;
  return kernels::SumSqDev(scores, mean) / n;
}

AcvEntry Acv(const Dataset& dataset, std::span<const double> scores,
             HarmKind harm) {
  AcvEntry entry;
  double total = 0.0;
  double total_safe = 0.0;
  double total_unsafe = 0.0;
  size_t n_safe = 0;
  size_t n_unsafe = 0;

  std::vector<double> set_scores;
  for (const auto& [set_id, members] : dataset.cf_sets()) {
    if (members.size() < 2) {
      ++entry.n_singletons_excluded;
      continue;
    }
    set_scores.clear();
    for (size_t idx : members) set_scores.push_back(scores[idx]);
    double var = CounterfactualVariance(set_scores);
    total += var;
    ++entry.n_sets;
    // Members share labels, so the first member's label is the set's gt.
    Label gt = dataset.examples()[members.front()].label(harm);
    if (gt == Label::kSafe) {
      total_safe += var;
      ++n_safe;
    } else {
      total_unsafe += var;
      ++n_unsafe;
    }
  }
  if (entry.n_sets == 0) {
    throw ValidationError("no counterfactual sets");
  }
  entry.acv = total / static_cast<double>(entry.n_sets);
  if (n_safe > 0) entry.acv_safe = total_safe / static_cast<double>(n_safe);
  if (n_unsafe > 0) {
    entry.acv_unsafe = total_unsafe / static_cast<double>(n_unsafe);
  }
  return entry;
}

SlicedAverages ComputeSlicedAverages(const Dataset& dataset,
                                     std::span<const double> scores,
                                     HarmKind harm) {
  std::map<SliceKey, std::pair<double, size_t>> sums[2];
  for (size_t i = 0; i < dataset.examples().size(); ++i) {
    const Example& e = dataset.examples()[i];
    if (!e.identity) continue;  // unsliced examples appear in no slice
    int gt = e.label(harm) == Label::kSafe ? 0 : 1;
    auto& [sum, n] = sums[gt][{e.identity->category, e.identity->subgroup}];
    sum += scores[i];
    ++n;
  }
  SlicedAverages sa;
  for (int gt = 0; gt < 2; ++gt) {
    SliceMap& out = gt == 0 ? sa.safe : sa.unsafe;
    for (const auto& [key, acc] : sums[gt]) {
      out[key] = SliceStat{acc.first / static_cast<double>(acc.second),
                           acc.second};
    }
  }
  return sa;
}

double MaxSaGap(const SlicedAverages& sa, Label gt,
                std::string_view category) {
  double lo = 1.0;
  double hi = 0.0;
  size_t count = 0;
  for (const auto& [key, stat] : sa.ForGt(gt)) {
    if (key.category != category) continue;
    lo = std::min(lo, stat.mean);
    hi = std::max(hi, stat.mean);
    ++count;
  }
  if (count < 2) {
    throw ValidationError("insufficient slices");
  }
  return hi - lo;
}

double AuPrc(std::span<const double> scores, std::span<const Label> labels) {
  size_t positives = 0;
  for (Label l : labels) {
    if (l == Label::kUnsafe) ++positives;
  }
  if (positives == 0) {
    throw ValidationError("AU-PRC undefined: no positives");
  }

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&scores](size_t a, size_t b) {
    return scores[a] > scores[b];
  });

  double ap = 0.0;
  double recall_prev = 0.0;
  size_t tp = 0;
  size_t retrieved = 0;
  size_t i = 0;
  while (i < order.size()) {
    // All examples tied at one score enter together.
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == Label::kUnsafe) ++tp;
      ++retrieved;
      ++j;
    }
    double recall = static_cast<double>(tp) / static_cast<double>(positives);
    double precision =
        static_cast<double>(tp) / static_cast<double>(retrieved);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
    i = j;
  }
  return ap;
}

std::optional<double> PctDelta(double old_value, double new_value) {
  if (old_value == 0.0) return std::nullopt;
  return (new_value - old_value) / old_value * 100.0;
}

MetricsComparison Compare(const EvalMetrics& baseline,
                          const EvalMetrics& remediated) {
  MetricsComparison cmp;
  cmp.baseline = baseline;
  cmp.remediated = remediated;
  cmp.pct_au_prc_test = PctDelta(baseline.au_prc_test, remediated.au_prc_test);
  cmp.pct_au_prc_cf = PctDelta(baseline.au_prc_cf, remediated.au_prc_cf);
  cmp.pct_acv = PctDelta(baseline.acv, remediated.acv);
  return cmp;
}

nlohmann::ordered_json SaToJson(const SlicedAverages& sa) {
  nlohmann::ordered_json doc;
  for (Label gt : kBothLabels) {
    nlohmann::ordered_json per_gt;
    for (const auto& [key, stat] : sa.ForGt(gt)) {
      per_gt[key.category][key.subgroup] = {{"mean", stat.mean},
                                            {"n", stat.n}};
    }
    doc[std::string(ToString(gt))] = per_gt;
  }
  return doc;
}

SlicedAverages SaFromJson(const nlohmann::json& doc) {
  SlicedAverages sa;
  for (Label gt : kBothLabels) {
    const auto& per_gt = doc.at(std::string(ToString(gt)));
    SliceMap& out = gt == Label::kSafe ? sa.safe : sa.unsafe;
    for (auto& [category, subgroups] : per_gt.items()) {
      for (auto& [subgroup, stat] : subgroups.items()) {
        out[{category, subgroup}] = SliceStat{stat.at("mean").get<double>(),
                                              stat.at("n").get<size_t>()};
      }
    }
  }
  return sa;
}

}  // namespace cfguard
