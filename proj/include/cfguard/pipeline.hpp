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

#ifndef CFGUARD_PIPELINE_H_
#define CFGUARD_PIPELINE_H_

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfguard/dataset.hpp"
#include "cfguard/fdw.hpp"
#include "cfguard/forest.hpp"
#include "cfguard/metrics.hpp"
#include "json.hpp"

namespace cfguard {

// Orchestrates the two-stage debiasing run: stage 1 trains a baseline on the
// original training examples and measures its sliced averages on the
// validation set; stage 2 reweights the counterfactualized training set with
// FDW and trains the remediated model. Both models are evaluated on the
// original and counterfactual test sets.

struct PipelineConfig {
  std::filesystem::path train;
  std::filesystem::path validation;
  std::filesystem::path test;
  std::filesystem::path cf_test;
  std::optional<std::filesystem::path> taxonomy_path;
  ForestConfig forest;
  FdwConfig fdw;
  uint64_t seed = 0;
  std::filesystem::path out_dir;
  int threads = 1;

  static PipelineConfig FromJsonFile(const std::filesystem::path& path);
  nlohmann::ordered_json ToJson() const;
};

struct RunArtifacts {
  ForestModel baseline;
  ForestModel remediated;
  std::map<HarmKind, SlicedAverages> sa_validation;
  std::vector<DrawRecord> provenance;
  std::map<HarmKind, MetricsComparison> comparison;
  std::map<HarmKind, FeatureContributions> contributions_baseline;
  std::map<HarmKind, FeatureContributions> contributions_remediated;
  std::map<HarmKind, AcvEntry> acv_baseline;    // on cf_test
  std::map<HarmKind, AcvEntry> acv_remediated;  // on cf_test
  uint64_t test_hash = 0;
  uint64_t cf_test_hash = 0;
  nlohmann::ordered_json report;
};

// Runs both stages and persists baseline.model.json, remediated.model.json,
// sa_validation.json, fdw_provenance.jsonl and report.json under
// config.out_dir. Stage failures abort with the stage name; artifacts
// written so far are left in place.
RunArtifacts RunTwoStage(const PipelineConfig& config);

// Re-runs evaluation only: rebuilds report.json content from already trained
// models and the config's datasets, without touching FDW or training.
nlohmann::ordered_json RebuildReport(
    const PipelineConfig& config, const ForestModel& baseline,
    const ForestModel& remediated,
    std::span<const std::string> fdw_warnings = {});

// Per-harm evaluation of one model on one dataset:
// {harm: {acv, acv_safe, acv_unsafe, sa, au_prc}}; the acv keys are null
// when the data has no counterfactual sets.
nlohmann::ordered_json EvalReport(const ForestModel& model,
                                  const Dataset& data);

struct SweepRow {
  double value = 0.0;
  std::optional<double> metric;
};

struct SweepTable {
  std::string param;
  std::string metric_name;
  std::vector<SweepRow> rows;

  void SaveCsv(const std::filesystem::path& path) const;
};

// One full stage-2 retrain of `harm` per lambda value (all else fixed,
// including the stage-1 baseline and its SA); metric is the percent change
// of gt-conditioned ACV on the CF test set vs. the stage-1 baseline.
SweepTable SweepLambda(const PipelineConfig& config, HarmKind harm, Label gt,
                       std::span<const double> values);

// Analogous beta sweep on the Unsafe arm; metric is the max SA gap of the
// remediated model over `category` subgroups (Unsafe side, CF test set).
SweepTable SweepBeta(const PipelineConfig& config, HarmKind harm,
                     const std::string& category,
                     std::span<const double> values);

struct SourceComparison {
  struct Row {
    std::string feature;
    double au_prc = 0.0;
  };
  struct PerHarm {
    std::vector<Row> features;
    std::string best_feature;
    double best_feature_au_prc = 0.0;
    double ensemble_au_prc = 0.0;
    std::optional<double> pct_improvement;
  };
  std::map<HarmKind, PerHarm> per_harm;

  void SaveCsv(const std::filesystem::path& path) const;
};

// AU-PRC of every raw feature used alone as the score, against the
// ensemble's AU-PRC, per harm.
SourceComparison CompareToSources(const Dataset& dataset,
                                  const ForestModel& model);

}  // namespace cfguard

#endif  // CFGUARD_PIPELINE_H_
