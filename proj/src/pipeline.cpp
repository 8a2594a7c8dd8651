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

#include "cfguard/pipeline.hpp"

#include <fstream>
#include <sstream>

#include "cfguard/rng.hpp"

namespace cfguard {

namespace {

using nlohmann::ordered_json;

std::string HashHex(uint64_t h) {
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

std::string Num(double v) { return nlohmann::json(v).dump(); }

struct LoadedData {
  Taxonomy taxonomy;
  Dataset train;           // counterfactualized training set
  Dataset train_original;  // origin=original subset, stage-1 input
  Dataset validation;
  Dataset test;
  Dataset cf_test;
};

LoadedData Load(const PipelineConfig& config) {
  LoadedData data;
  data.taxonomy = config.taxonomy_path ? Taxonomy::LoadJson(*config.taxonomy_path)
                                       : Taxonomy::Default();
  data.train = Dataset::LoadJsonl(config.train, data.taxonomy);
  data.validation = Dataset::LoadJsonl(config.validation, data.taxonomy);
  data.test = Dataset::LoadJsonl(config.test, data.taxonomy);
  data.cf_test = Dataset::LoadJsonl(config.cf_test, data.taxonomy);

  std::vector<Example> originals;
  for (const Example& e : data.train.examples()) {
    if (e.origin == Origin::kOriginal) originals.push_back(e);
  }
  data.train_original = Dataset::FromExamples(
      std::move(originals), data.train.feature_names(), data.taxonomy);
  return data;
}

struct Stage1 {
  ForestModel baseline;
  std::map<HarmKind, SlicedAverages> sa;
};

Stage1 RunStage1(const LoadedData& data, const PipelineConfig& config) {
  ForestConfig forest_config = config.forest;
  forest_config.seed = Rng(config.seed).Substream("baseline").key();

  Stage1 stage;
  stage.baseline = ForestModel(data.train.feature_names(), forest_config);
  uint64_t train_hash = data.train_original.ContentHash();
  for (HarmKind h : kAllHarms) {
    stage.baseline.SetHead(
        h, TrainHead(data.train_original, h, forest_config, config.threads),
        train_hash);
  }
  for (HarmKind h : kAllHarms) {
    std::vector<double> scores = stage.baseline.Score(h, data.validation);
    stage.sa[h] = ComputeSlicedAverages(data.validation, scores, h);
  }
  return stage;
}

struct Stage2Head {
  ForestHead head;
  uint64_t dataset_hash = 0;
  std::vector<DrawRecord> provenance;
  std::vector<std::string> warnings;
};

Stage2Head RunStage2Head(const LoadedData& data, const PipelineConfig& config,
                         HarmKind harm, const SlicedAverages& sa_baseline,
                         const FdwHarmConfig& fdw_config) {
  ResampleResult resampled = Resample(data.train, harm, sa_baseline,
                                      fdw_config, config.seed);
  ForestConfig forest_config = config.forest;
  forest_config.seed = Rng(config.seed).Substream("remediated").key();

  Stage2Head out;
  out.dataset_hash = resampled.dataset.ContentHash();
  out.head = TrainHead(resampled.dataset, harm, forest_config, config.threads);
  out.provenance = std::move(resampled.provenance);
  out.warnings = std::move(resampled.warnings);
  return out;
}

ordered_json ContributionsJson(const FeatureContributions& contributions) {
  ordered_json doc;
  for (const auto& [feature, pct] : contributions.percentages) {
    doc[feature] = pct;
  }
  return doc;
}

ordered_json ModelEvalJson(const AcvEntry* acv, const SlicedAverages& sa,
                           double au_prc_test, double au_prc_cf) {
  ordered_json doc;
  if (acv != nullptr) {
    doc["acv"] = acv->acv;
    doc["acv_safe"] = acv->acv_safe ? ordered_json(*acv->acv_safe) : nullptr;
    doc["acv_unsafe"] =
        acv->acv_unsafe ? ordered_json(*acv->acv_unsafe) : nullptr;
    doc["n_sets"] = acv->n_sets;
    doc["n_singletons_excluded"] = acv->n_singletons_excluded;
  } else {
    doc["acv"] = nullptr;
    doc["acv_safe"] = nullptr;
    doc["acv_unsafe"] = nullptr;
  }
  doc["sa"] = SaToJson(sa);
  doc["au_prc_test"] = au_prc_test;
  doc["au_prc_cf"] = au_prc_cf;
  return doc;
}

std::vector<Label> HarmLabels(const Dataset& data, HarmKind harm) {
  std::vector<Label> labels;
  labels.reserve(data.size());
  for (const Example& e : data.examples()) labels.push_back(e.label(harm));
  return labels;
}

ordered_json EvaluateModels(const LoadedData& data, RunArtifacts& artifacts) {
  ordered_json harms;
  for (HarmKind h : kAllHarms) {
    std::vector<Label> test_labels = HarmLabels(data.test, h);
    std::vector<Label> cf_labels = HarmLabels(data.cf_test, h);

    ordered_json per_model[2];
    EvalMetrics eval[2];
    const ForestModel* models[2] = {&artifacts.baseline,
                                    &artifacts.remediated};
    for (int m = 0; m < 2; ++m) {
      std::vector<double> test_scores = models[m]->Score(h, data.test);
      std::vector<double> cf_scores = models[m]->Score(h, data.cf_test);
      AcvEntry acv = Acv(data.cf_test, cf_scores, h);
      SlicedAverages sa = ComputeSlicedAverages(data.cf_test, cf_scores, h);
      eval[m].au_prc_test = AuPrc(test_scores, test_labels);
      eval[m].au_prc_cf = AuPrc(cf_scores, cf_labels);
      eval[m].acv = acv.acv;
      per_model[m] =
          ModelEvalJson(&acv, sa, eval[m].au_prc_test, eval[m].au_prc_cf);
      (m == 0 ? artifacts.acv_baseline : artifacts.acv_remediated)[h] = acv;
    }
    artifacts.comparison[h] = Compare(eval[0], eval[1]);
    artifacts.contributions_baseline[h] = artifacts.baseline.Contributions(h);
    artifacts.contributions_remediated[h] =
        artifacts.remediated.Contributions(h);

    const MetricsComparison& cmp = artifacts.comparison.at(h);
    ordered_json pct;
    pct["au_prc_test"] = cmp.pct_au_prc_test
                             ? ordered_json(*cmp.pct_au_prc_test)
                             : nullptr;
    pct["au_prc_cf"] =
        cmp.pct_au_prc_cf ? ordered_json(*cmp.pct_au_prc_cf) : nullptr;
    pct["acv"] = cmp.pct_acv ? ordered_json(*cmp.pct_acv) : nullptr;

    ordered_json harm_doc;
    harm_doc["baseline"] = per_model[0];
    harm_doc["remediated"] = per_model[1];
    harm_doc["pct_delta"] = pct;
    harm_doc["feature_contributions"] = {
        {"baseline", ContributionsJson(artifacts.contributions_baseline.at(h))},
        {"remediated",
         ContributionsJson(artifacts.contributions_remediated.at(h))}};
    harms[std::string(ToString(h))] = std::move(harm_doc);
  }
  return harms;
}

}  // namespace

PipelineConfig PipelineConfig::FromJsonFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open config file: " + path.string());
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config parse error in " + path.string() + ": " +
                          e.what());
  }
  PipelineConfig config;
  std::filesystem::path base = path.parent_path();
  auto resolve = [&base](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  config.train = resolve(doc.at("train").get<std::string>());
  config.validation = resolve(doc.at("validation").get<std::string>());
  config.test = resolve(doc.at("test").get<std::string>());
  config.cf_test = resolve(doc.at("cf_test").get<std::string>());
  if (doc.contains("taxonomy") && !doc.at("taxonomy").is_null()) {
    config.taxonomy_path = resolve(doc.at("taxonomy").get<std::string>());
  }
  if (doc.contains("forest")) {
    config.forest = ForestConfig::FromJson(doc.at("forest"));
  }
  if (doc.contains("fdw")) config.fdw = FdwConfig::FromJson(doc.at("fdw"));
  if (doc.contains("seed")) config.seed = doc.at("seed").get<uint64_t>();
  if (doc.contains("out")) config.out_dir = resolve(doc.at("out").get<std::string>());
  if (doc.contains("threads")) config.threads = doc.at("threads").get<int>();
  for (const auto& p : {config.train, config.validation, config.test,
                        config.cf_test}) {
    if (!std::filesystem::exists(p)) {
      throw ValidationError("config references missing file: " + p.string());
    }
  }
  return config;
}

nlohmann::ordered_json PipelineConfig::ToJson() const {
  ordered_json doc;
  doc["train"] = train.string();
  doc["validation"] = validation.string();
  doc["test"] = test.string();
  doc["cf_test"] = cf_test.string();
  doc["taxonomy"] = taxonomy_path ? ordered_json(taxonomy_path->string())
                                  : nullptr;
  doc["forest"] = forest.ToJson();
  doc["fdw"] = fdw.ToJson();
  doc["seed"] = seed;
  // out/threads are run-environment knobs, deliberately not echoed: reports
  // must be byte-identical across output locations and thread counts.
  return doc;
}

RunArtifacts RunTwoStage(const PipelineConfig& config) {
  auto stage_guard = [](const char* stage, auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(stage) + ": " + e.what());
    }
  };

  LoadedData data = stage_guard("load", [&] { return Load(config); });
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
  }

  RunArtifacts artifacts;
  artifacts.test_hash = data.test.ContentHash();
  artifacts.cf_test_hash = data.cf_test.ContentHash();

  Stage1 stage1 =
      stage_guard("stage 1 (baseline)", [&] { return RunStage1(data, config); });
  artifacts.baseline = stage1.baseline;
  artifacts.sa_validation = stage1.sa;
  std::vector<std::string> fdw_warnings;

  if (!config.out_dir.empty()) {
    artifacts.baseline.Save(config.out_dir / "baseline.model.json");
    ordered_json sa_doc;
    for (HarmKind h : kAllHarms) {
      sa_doc[std::string(ToString(h))] = SaToJson(stage1.sa.at(h));
    }
    std::ofstream out(config.out_dir / "sa_validation.json");
    out << sa_doc.dump(2) << '\n';
  }

  stage_guard("stage 2 (fdw + remediated)", [&] {
    artifacts.remediated =
        ForestModel(data.train.feature_names(), config.forest);
    for (HarmKind h : kAllHarms) {
      Stage2Head head = RunStage2Head(data, config, h, stage1.sa.at(h),
                                      config.fdw.ForHarm(h));
      artifacts.remediated.SetHead(h, std::move(head.head),
                                   head.dataset_hash);
      artifacts.provenance.insert(artifacts.provenance.end(),
                                  head.provenance.begin(),
                                  head.provenance.end());
      fdw_warnings.insert(fdw_warnings.end(), head.warnings.begin(),
                          head.warnings.end());
    }
    return 0;
  });

  if (!config.out_dir.empty()) {
    artifacts.remediated.Save(config.out_dir / "remediated.model.json");
    WriteProvenanceJsonl(artifacts.provenance,
                         config.out_dir / "fdw_provenance.jsonl");
  }

  stage_guard("evaluation", [&] {
    ordered_json harms = EvaluateModels(data, artifacts);
    artifacts.report["config"] = config.ToJson();
    artifacts.report["test_hash"] = HashHex(artifacts.test_hash);
    artifacts.report["cf_test_hash"] = HashHex(artifacts.cf_test_hash);
    artifacts.report["harms"] = std::move(harms);
    artifacts.report["fdw_warnings"] = fdw_warnings;
    return 0;
  });

  if (!config.out_dir.empty()) {
    std::ofstream out(config.out_dir / "report.json");
    out << artifacts.report.dump(2) << '\n';
  }
  return artifacts;
}

nlohmann::ordered_json RebuildReport(const PipelineConfig& config,
                                     const ForestModel& baseline,
                                     const ForestModel& remediated,
                                     std::span<const std::string> fdw_warnings) {
  LoadedData data = Load(config);
  RunArtifacts artifacts;
  artifacts.baseline = baseline;
  artifacts.remediated = remediated;
  ordered_json harms = EvaluateModels(data, artifacts);

  ordered_json report;
  report["config"] = config.ToJson();
  report["test_hash"] = HashHex(data.test.ContentHash());
  report["cf_test_hash"] = HashHex(data.cf_test.ContentHash());
  report["harms"] = std::move(harms);
  report["fdw_warnings"] =
      std::vector<std::string>(fdw_warnings.begin(), fdw_warnings.end());
  return report;
}

nlohmann::ordered_json EvalReport(const ForestModel& model,
                                  const Dataset& data) {
  ordered_json doc;
  for (HarmKind h : kAllHarms) {
    std::vector<double> scores = model.Score(h, data);
    SlicedAverages sa = ComputeSlicedAverages(data, scores, h);
    ordered_json harm_doc;
    try {
      AcvEntry acv = Acv(data, scores, h);
      harm_doc["acv"] = acv.acv;
      harm_doc["acv_safe"] =
          acv.acv_safe ? ordered_json(*acv.acv_safe) : nullptr;
      harm_doc["acv_unsafe"] =
          acv.acv_unsafe ? ordered_json(*acv.acv_unsafe) : nullptr;
    } catch (const ValidationError&) {
      harm_doc["acv"] = nullptr;
      harm_doc["acv_safe"] = nullptr;
      harm_doc["acv_unsafe"] = nullptr;
    }
    harm_doc["sa"] = SaToJson(sa);
    try {
      harm_doc["au_prc"] = AuPrc(scores, HarmLabels(data, h));
    } catch (const ValidationError&) {
      harm_doc["au_prc"] = nullptr;
    }
    doc[std::string(ToString(h))] = std::move(harm_doc);
  }
  return doc;
}

void SweepTable::SaveCsv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw ValidationError("cannot write sweep file: " + path.string());
  }
  out << param << ',' << metric_name << '\n';
  for (const SweepRow& row : rows) {
    out << Num(row.value) << ',' << (row.metric ? Num(*row.metric) : "null")
        << '\n';
  }
}

SweepTable SweepLambda(const PipelineConfig& config, HarmKind harm, Label gt,
                       std::span<const double> values) {
  if (values.empty()) {
    throw ValidationError("sweep requires at least one value");
  }
  LoadedData data = Load(config);
  Stage1 stage1 = RunStage1(data, config);

  std::vector<double> baseline_scores =
      stage1.baseline.Score(harm, data.cf_test);
  AcvEntry baseline_acv = Acv(data.cf_test, baseline_scores, harm);
  std::optional<double> baseline_gt = gt == Label::kSafe
                                          ? baseline_acv.acv_safe
                                          : baseline_acv.acv_unsafe;

  SweepTable table;
  table.param = std::string("lambda_") + std::string(ToString(gt));
  table.metric_name = std::string("pct_delta_acv_") + std::string(ToString(gt));
  for (double value : values) {
    FdwHarmConfig fdw_config = config.fdw.ForHarm(harm);
    fdw_config.ForGt(gt).lambda = value;
    Stage2Head head = RunStage2Head(data, config, harm, stage1.sa.at(harm),
                                    fdw_config);
    ForestModel remediated(data.train.feature_names(), config.forest);
    remediated.SetHead(harm, std::move(head.head), head.dataset_hash);
    AcvEntry acv = Acv(data.cf_test, remediated.Score(harm, data.cf_test),
                       harm);
    std::optional<double> remediated_gt =
        gt == Label::kSafe ? acv.acv_safe : acv.acv_unsafe;
    SweepRow row{value, std::nullopt};
    if (baseline_gt && remediated_gt) {
      row.metric = PctDelta(*baseline_gt, *remediated_gt);
    }
    table.rows.push_back(row);
  }
  return table;
}

SweepTable SweepBeta(const PipelineConfig& config, HarmKind harm,
                     const std::string& category,
                     std::span<const double> values) {
  if (values.empty()) {
    throw ValidationError("sweep requires at least one value");
  }
  LoadedData data = Load(config);
  Stage1 stage1 = RunStage1(data, config);

  SweepTable table;
  table.param = "beta";
  table.metric_name = "max_sa_gap_unsafe";
  for (double value : values) {
    FdwHarmConfig fdw_config = config.fdw.ForHarm(harm);
    fdw_config.unsafe.beta = value;
    Stage2Head head = RunStage2Head(data, config, harm, stage1.sa.at(harm),
                                    fdw_config);
    ForestModel remediated(data.train.feature_names(), config.forest);
    remediated.SetHead(harm, std::move(head.head), head.dataset_hash);
    SlicedAverages sa = ComputeSlicedAverages(
        data.cf_test, remediated.Score(harm, data.cf_test), harm);
    table.rows.push_back(
        SweepRow{value, MaxSaGap(sa, Label::kUnsafe, category)});
  }
  return table;
}

SourceComparison CompareToSources(const Dataset& dataset,
                                  const ForestModel& model) {
  SourceComparison comparison;
  for (HarmKind h : kAllHarms) {
    if (model.head(h) == nullptr) continue;
    std::vector<Label> labels = HarmLabels(dataset, h);
    SourceComparison::PerHarm per_harm;
    for (size_t f = 0; f < dataset.feature_names().size(); ++f) {
      std::vector<double> scores;
      scores.reserve(dataset.size());
      for (const Example& e : dataset.examples()) {
        if (!e.features) {
          throw ValidationError("example '" + e.id + "' has no features");
        }
        scores.push_back((*e.features)[f]);
      }
      double au_prc = AuPrc(scores, labels);
      per_harm.features.push_back({dataset.feature_names()[f], au_prc});
      if (au_prc > per_harm.best_feature_au_prc) {
        per_harm.best_feature_au_prc = au_prc;
        per_harm.best_feature = dataset.feature_names()[f];
      }
    }
    per_harm.ensemble_au_prc = AuPrc(model.Score(h, dataset), labels);
    per_harm.pct_improvement =
        PctDelta(per_harm.best_feature_au_prc, per_harm.ensemble_au_prc);
    comparison.per_harm[h] = std::move(per_harm);
  }
  return comparison;
}

void SourceComparison::SaveCsv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw ValidationError("cannot write comparison file: " + path.string());
  }
  out << "harm,scorer,au_prc,pct_improvement_over_best_source\n";
  for (const auto& [harm, per_harm] : per_harm) {
    for (const Row& row : per_harm.features) {
      out << ToString(harm) << ',' << row.feature << ',' << Num(row.au_prc)
          << ",\n";
    }
    out << ToString(harm) << ",ensemble," << Num(per_harm.ensemble_au_prc)
        << ','
        << (per_harm.pct_improvement ? Num(*per_harm.pct_improvement)
                                     : "null")
        << '\n';
  }
}

}  // namespace cfguard
