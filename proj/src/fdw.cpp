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

#include "cfguard/fdw.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "cfguard/rng.hpp"

namespace cfguard {

FdwConfig FdwConfig::FromJson(const nlohmann::json& doc) {
  FdwConfig config;
  for (HarmKind h : kAllHarms) {
    std::string harm_key(ToString(h));
    if (!doc.contains(harm_key)) continue;
    for (Label gt : kBothLabels) {
      std::string gt_key(ToString(gt));
      if (!doc.at(harm_key).contains(gt_key)) continue;
      const auto& arm = doc.at(harm_key).at(gt_key);
      FdwArm& out = config.ForHarm(h).ForGt(gt);
      if (arm.contains("lambda")) out.lambda = arm.at("lambda").get<double>();
      if (arm.contains("beta")) out.beta = arm.at("beta").get<double>();
      if (out.lambda < 0.0 || out.beta < 0.0) {
        throw ValidationError("fdw " + harm_key + "/" + gt_key +
                              ": lambda and beta must be non-negative");
      }
    }
  }
  return config;
}

nlohmann::ordered_json FdwConfig::ToJson() const {
  nlohmann::ordered_json doc;
  for (HarmKind h : kAllHarms) {
    for (Label gt : kBothLabels) {
      const FdwArm& arm = ForHarm(h).ForGt(gt);
      doc[std::string(ToString(h))][std::string(ToString(gt))] = {
          {"lambda", arm.lambda}, {"beta", arm.beta}};
    }
  }
  return doc;
}

std::vector<SliceLoss> SliceLosses(const SlicedAverages& sa, Label gt) {
  const SliceMap& slices = sa.ForGt(gt);
  if (slices.empty()) {
    throw ValidationError("no sliced averages for gt=" +
                          std::string(ToString(gt)));
  }
  std::vector<SliceLoss> losses;
  losses.reserve(slices.size());
  for (const auto& [key, stat] : slices) {
    double loss = gt == Label::kSafe ? stat.mean : 1.0 - stat.mean;
    losses.push_back(SliceLoss{key, gt, loss});
  }
  return losses;
}

std::vector<double> SamplingDistribution(std::span<const SliceLoss> losses,
                                         double beta) {
  std::vector<double> p(losses.size());
  double m = -std::numeric_limits<double>::infinity();
  for (const SliceLoss& l : losses) m = std::max(m, beta * l.loss);
  double z = 0.0;
  for (size_t i = 0; i < losses.size(); ++i) {
    p[i] = std::exp(beta * losses[i].loss - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

ResampleResult Resample(const Dataset& train, HarmKind harm,
                        const SlicedAverages& sa_baseline,
                        const FdwHarmConfig& config, uint64_t seed) {
  ResampleResult result;
  std::vector<Example> out = train.examples();
  size_t n_draws = train.size();

  Rng harm_rng = Rng(seed).Substream("fdw").Substream(ToString(harm));
  for (Label gt : kBothLabels) {
    std::string gt_name(ToString(gt));
    std::vector<SliceLoss> losses;
    try {
      losses = SliceLosses(sa_baseline, gt);
    } catch (const ValidationError&) {
      result.warnings.push_back("fdw " + std::string(ToString(harm)) + "/" +
                                gt_name + ": no SA slices, arm skipped");
      continue;
    }

    // Partition gt-matching train examples by slice; slices without members
    // leave the softmax support up front.
    std::map<SliceKey, std::vector<size_t>> members;
    for (size_t i = 0; i < train.examples().size(); ++i) {
      const Example& e = train.examples()[i];
      if (e.identity && e.label(harm) == gt) {
        members[{e.identity->category, e.identity->subgroup}].push_back(i);
      }
    }
    std::vector<SliceLoss> supported;
    for (const SliceLoss& l : losses) {
      auto it = members.find(l.slice);
      if (it != members.end() && !it->second.empty()) supported.push_back(l);
    }
    if (supported.empty()) {
      result.warnings.push_back("fdw " + std::string(ToString(harm)) + "/" +
                                gt_name +
                                ": no sliced examples of this gt, arm skipped");
      continue;
    }
    std::vector<double> p = SamplingDistribution(supported,
                                                 config.ForGt(gt).beta);

    Rng rng = harm_rng.Substream(gt_name);
    double lambda = config.ForGt(gt).lambda;
    for (size_t n = 0; n < n_draws; ++n) {
      size_t slice_idx = rng.NextCategorical(p);
      const auto& pool = members.at(supported[slice_idx].slice);
      size_t src = pool[rng.NextIndex(pool.size())];

      Example copy = train.examples()[src];
      copy.id += "#fdw-" + gt_name + "-" + std::to_string(n);
      copy.weight = lambda;
      // Copies are training fodder only; keeping them in the source cf set
      // would repeat its subgroup. Counterfactual copies get a fresh
      // singleton set instead (inert for the variance metrics).
      copy.cf_set_id = copy.origin == Origin::kCounterfactual
                           ? std::optional<std::string>(copy.id)
                           : std::nullopt;
      result.provenance.push_back(DrawRecord{
          gt_name,
          supported[slice_idx].slice.category + "/" +
              supported[slice_idx].slice.subgroup,
          train.examples()[src].id, copy.id});
      out.push_back(std::move(copy));
    }
  }

  result.dataset = Dataset::FromExamples(std::move(out),
                                         train.feature_names(),
                                         train.taxonomy());
  return result;
}

void WriteProvenanceJsonl(const std::vector<DrawRecord>& records,
                          const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw ValidationError("cannot write provenance file: " + path.string());
  }
  for (const DrawRecord& r : records) {
    nlohmann::ordered_json rec = {{"arm", r.arm},
                                  {"slice", r.slice},
                                  {"source_id", r.source_id},
                                  {"new_id", r.new_id}};
    out << rec.dump() << '\n';
  }
}

}  // namespace cfguard
