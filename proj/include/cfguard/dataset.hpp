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

#ifndef CFGUARD_DATASET_H_
#define CFGUARD_DATASET_H_

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfguard/rewriter.hpp"
#include "cfguard/taxonomy.hpp"

namespace cfguard {

// One text item: identity annotation, per-harm binary labels, source-score
// feature vector (absent until a scorer fills it), example weight, and
// split/origin tags.
struct Example {
  std::string id;
  std::string text;
  std::optional<std::string> cf_set_id;
  std::optional<IdentityAnnotation> identity;
  std::array<Label, 4> labels = {Label::kSafe, Label::kSafe, Label::kSafe,
                                 Label::kSafe};
  // Ordered per the dataset's feature schema; nullopt = not yet scored.
  std::optional<std::vector<double>> features;
  double weight = 1.0;
  Split split = Split::kTrain;
  Origin origin = Origin::kOriginal;

  Label label(HarmKind h) const { return labels[static_cast<size_t>(h)]; }
  void set_label(HarmKind h, Label l) { labels[static_cast<size_t>(h)] = l; }

  bool operator==(const Example&) const = default;
};

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

class RuleRewriter;  // datagen.hpp

// Immutable validated collection of examples with a fixed feature schema
// (lexicographically sorted names) and counterfactual-set index.
class Dataset {
 public:
  Dataset() = default;

  // Validates every invariant: unique ids, schema-consistent [0,1] features,
  // taxonomy membership, cf-set label/split/category consistency.
  static Dataset FromExamples(std::vector<Example> examples,
                              std::vector<std::string> feature_names,
                              Taxonomy taxonomy);

  // One JSON object per line; feature schema inferred from the first record
  // carrying features and enforced on the rest. Errors name line and field.
  static Dataset LoadJsonl(const std::filesystem::path& path,
                           Taxonomy taxonomy = Taxonomy::Default());

  void SaveJsonl(const std::filesystem::path& path) const;

  const std::vector<Example>& examples() const { return examples_; }
  const std::vector<std::string>& feature_names() const {
    return feature_names_;
  }
  const Taxonomy& taxonomy() const { return taxonomy_; }
  // cf_set_id -> member indices into examples(), in example order.
  const std::map<std::string, std::vector<size_t>>& cf_sets() const {
    return cf_sets_;
  }
  size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }

  const Example* FindById(std::string_view id) const;
  std::optional<size_t> FeatureIndex(std::string_view name) const;

  // FNV-1a over the canonical JSONL serialization; stable across runs.
  uint64_t ContentHash() const;

 private:
  std::vector<Example> examples_;
  std::vector<std::string> feature_names_;
  Taxonomy taxonomy_;
  std::map<std::string, std::vector<size_t>> cf_sets_;
};

// Reassigns splits so that every counterfactual set lands in exactly one
// split. Deterministic given seed; unannotated examples assigned one by one.
Dataset SplitByCfSet(const Dataset& dataset, const SplitFractions& fractions,
                     uint64_t seed);

struct BalanceResult {
  Dataset dataset;
  size_t added = 0;
  size_t skipped = 0;  // rewriter rejections/failures, logged not fatal
  std::vector<std::string> warnings;
};

// Adds, for each original identity-bearing example, one counterfactual per
// missing subgroup of its category. Labels are propagated; features are left
// unset (a scorer must fill them before training).
BalanceResult CounterfactualBalance(const Dataset& dataset, Rewriter& rewriter);

}  // namespace cfguard

#endif  // CFGUARD_DATASET_H_
