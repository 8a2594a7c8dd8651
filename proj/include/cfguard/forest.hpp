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

#ifndef CFGUARD_FOREST_H_
#define CFGUARD_FOREST_H_

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfguard/dataset.hpp"
#include "json.hpp"

namespace cfguard {

// Small weighted random forest over source-model score features; one binary
// head per harm.

struct ForestConfig {
  int n_trees = 100;
  int max_depth = 8;
  int min_samples_leaf = 5;
  // Number of candidate features per split, or "sqrt".
  std::string features_per_split = "sqrt";
  uint64_t seed = 0;

  static ForestConfig FromJson(const nlohmann::json& doc);
  nlohmann::ordered_json ToJson() const;
};

struct TreeNode {
  int feature = -1;  // -1 = leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf: weighted Unsafe fraction
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double Predict(std::span<const double> features) const;
};

struct ForestHead {
  std::vector<Tree> trees;
  // Total weighted-Gini decrease per feature, accumulated during training.
  std::vector<double> split_gains;

  double Predict(std::span<const double> features) const;
};

// Feature-contribution percentages for one head. For a forest that never
// splits, `degenerate` is set and the percentages are all zero.
struct FeatureContributions {
  std::map<std::string, double> percentages;
  bool degenerate = false;
};

class ForestModel {
 public:
  ForestModel() = default;
  ForestModel(std::vector<std::string> feature_names, ForestConfig config)
      : feature_names_(std::move(feature_names)), config_(std::move(config)) {}

  void SetHead(HarmKind harm, ForestHead head, uint64_t dataset_hash);
  const ForestHead* head(HarmKind harm) const {
    const auto& h = heads_[static_cast<size_t>(harm)];
    return h ? &*h : nullptr;
  }

  const std::vector<std::string>& feature_names() const {
    return feature_names_;
  }
  const ForestConfig& config() const { return config_; }

  // Per-harm mean of leaf values across trees. Throws on schema mismatch or
  // a missing head.
  std::map<HarmKind, double> Predict(std::span<const double> features) const;
  double PredictHarm(HarmKind harm, std::span<const double> features) const;

  // Scores one harm for every example of a dataset (features required).
  std::vector<double> Score(HarmKind harm, const Dataset& dataset) const;

  FeatureContributions Contributions(HarmKind harm) const;

  nlohmann::ordered_json ToJson() const;
  static ForestModel FromJson(const nlohmann::json& doc);
  void Save(const std::filesystem::path& path) const;
  static ForestModel Load(const std::filesystem::path& path);

 private:
  std::vector<std::string> feature_names_;
  ForestConfig config_;
  std::array<std::optional<ForestHead>, 4> heads_;
  std::array<uint64_t, 4> dataset_hashes_ = {0, 0, 0, 0};
};

// Trains one binary head on the dataset's examples (all must carry features).
// Each tree is grown on a uniform-with-replacement bootstrap; splits maximize
// weighted-Gini decrease; ties break toward the lowest feature index, then
// the lowest threshold. Bit-identical for a fixed (dataset, config, seed)
// regardless of `threads`.
ForestHead TrainHead(const Dataset& dataset, HarmKind harm,
                     const ForestConfig& config, int threads = 1);

}  // namespace cfguard

#endif  // CFGUARD_FOREST_H_
