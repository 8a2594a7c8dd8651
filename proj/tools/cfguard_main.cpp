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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cfguard/datagen.hpp"
#include "cfguard/dataset.hpp"
#include "cfguard/fdw.hpp"
#include "cfguard/forest.hpp"
#include "cfguard/metrics.hpp"
#include "cfguard/pipeline.hpp"
#include "cfguard/taxonomy.hpp"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using cfguard::ValidationError;
using nlohmann::ordered_json;

struct Args {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  std::string data;
  std::string model;
  std::string param;
  std::string values;
  std::string harm;
  std::string gt;
  std::string category;
};

// Every command shares one flag vocabulary; commands validate the subset they
// need before doing any I/O.
void AddCommonFlags(CLI::App* cmd, Args* args) {
  cmd->add_option("--config", args->config, "JSON config file");
  cmd->add_option("--seed", args->seed, "master random seed");
  cmd->add_option("--out", args->out, "output directory");
  cmd->add_option("--threads", args->threads, "worker thread cap");
  cmd->add_option("--data", args->data, "input dataset (JSONL)");
  cmd->add_option("--model", args->model, "model file (JSON)");
  cmd->add_option("--param", args->param,
                  "sweep parameter: lambda_safe | lambda_unsafe | beta");
  cmd->add_option("--values", args->values, "comma-separated sweep values");
  cmd->add_option("--harm", args->harm, "harm: hate|toxicity|sexual|violence");
  cmd->add_option("--gt", args->gt, "ground truth arm: safe|unsafe");
  cmd->add_option("--category", args->category, "identity category");
}

uint64_t RequireSeed(const Args& args) {
  if (!args.seed) {
    throw ValidationError(
        "--seed is required for randomized commands (no time-based seeding)");
  }
  return *args.seed;
}

std::string Require(const std::string& value, const char* flag) {
  if (value.empty()) {
    throw ValidationError(std::string(flag) + " is required");
  }
  return value;
}

fs::path RequireOut(const Args& args) {
  fs::path out(Require(args.out, "--out"));
  fs::create_directories(out);
  return out;
}

fs::path RequireFile(const std::string& value, const char* flag) {
  fs::path p(Require(value, flag));
  if (!fs::exists(p)) {
    throw ValidationError(std::string(flag) + ": no such file: " + p.string());
  }
  return p;
}

nlohmann::json LoadConfigJson(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(RequireFile(path, "--config"));
  try {
    nlohmann::json doc;
    in >> doc;
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config parse error in " + path + ": " + e.what());
  }
}

std::vector<double> ParseValues(const std::string& csv) {
  std::vector<double> values;
  std::string token;
  std::istringstream in(Require(csv, "--values"));
  while (std::getline(in, token, ',')) {
    try {
      size_t used = 0;
      values.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw ValidationError("--values: not a number: '" + token + "'");
    }
  }
  if (values.empty()) throw ValidationError("--values: empty list");
  return values;
}

// Flags override the config file when both specify the same knob.
cfguard::PipelineConfig MakePipelineConfig(const Args& args) {
  cfguard::PipelineConfig config = cfguard::PipelineConfig::FromJsonFile(
      RequireFile(args.config, "--config"));
  if (args.seed) config.seed = *args.seed;
  if (config.seed == 0 && !args.seed) {
    throw ValidationError(
        "seed required: pass --seed or set \"seed\" in the config");
  }
  if (!args.out.empty()) config.out_dir = args.out;
  config.threads = args.threads;
  return config;
}

void SaveContributionsCsv(const cfguard::ForestModel& model,
                          const fs::path& path) {
  std::ofstream out(path);
  out << "harm,feature,percentage\n";
  for (cfguard::HarmKind h : cfguard::kAllHarms) {
    if (model.head(h) == nullptr) continue;
    for (const auto& [feature, pct] :
         model.Contributions(h).percentages) {
      out << cfguard::ToString(h) << ',' << feature << ','
          << nlohmann::json(pct).dump() << '\n';
    }
  }
}

int RunGenCorpus(const Args& args) {
  uint64_t seed = RequireSeed(args);
  fs::path out = RequireOut(args);
  nlohmann::json config = LoadConfigJson(args.config);
  size_t train_size = config.value("train_size", size_t{5000});
  size_t validation_size = config.value("validation_size", size_t{1200});
  size_t test_size = config.value("test_size", size_t{1200});
  cfguard::BiasSpec spec = config.contains("bias")
                               ? cfguard::BiasSpec::FromJson(config.at("bias"))
                               : cfguard::BiasSpec::Default();

  cfguard::CorpusBundle bundle = cfguard::MakePlantedBiasCorpus(
      seed, train_size, validation_size, test_size, spec);
  bundle.Save(out);
  std::cout << "gen-corpus: wrote " << bundle.train.size() << " train, "
            << bundle.validation.size() << " validation, "
            << bundle.test.size() << " test, " << bundle.cf_test.size()
            << " cf_test examples to " << out.string() << '\n';
  return 0;
}

int RunCounterfactualize(const Args& args) {
  fs::path data_path = RequireFile(args.data, "--data");
  fs::path out = RequireOut(args);
  nlohmann::json config = LoadConfigJson(args.config);
  cfguard::Taxonomy taxonomy =
      config.contains("taxonomy")
          ? cfguard::Taxonomy::LoadJson(config.at("taxonomy").get<std::string>())
          : cfguard::Taxonomy::Default();
  cfguard::TermLexicon lexicon =
      config.contains("lexicon")
          ? cfguard::TermLexicon::LoadJson(
                config.at("lexicon").get<std::string>())
          : cfguard::TermLexicon::Default();
  lexicon.Validate(taxonomy);

  cfguard::Dataset dataset = cfguard::Dataset::LoadJsonl(data_path, taxonomy);
  cfguard::RuleRewriter rewriter(lexicon);
  cfguard::BalanceResult result =
      cfguard::CounterfactualBalance(dataset, rewriter);
  result.dataset.SaveJsonl(out / "counterfactualized.jsonl");
  for (const std::string& w : result.warnings) std::cerr << w << '\n';
  std::cout << "counterfactualize: added " << result.added << ", skipped "
            << result.skipped << ", wrote "
            << (out / "counterfactualized.jsonl").string() << '\n';
  return 0;
}

int RunTrainBaseline(const Args& args) {
  uint64_t seed = RequireSeed(args);
  fs::path data_path = RequireFile(args.data, "--data");
  fs::path out = RequireOut(args);
  nlohmann::json config = LoadConfigJson(args.config);
  cfguard::ForestConfig forest_config =
      config.contains("forest")
          ? cfguard::ForestConfig::FromJson(config.at("forest"))
          : cfguard::ForestConfig{};
  forest_config.seed = seed;

  cfguard::Dataset dataset = cfguard::Dataset::LoadJsonl(data_path);
  cfguard::ForestModel model(dataset.feature_names(), forest_config);
  uint64_t hash = dataset.ContentHash();
  for (cfguard::HarmKind h : cfguard::kAllHarms) {
    model.SetHead(h, cfguard::TrainHead(dataset, h, forest_config,
                                        args.threads),
                  hash);
  }
  model.Save(out / "baseline.model.json");
  SaveContributionsCsv(model, out / "feature_contributions.csv");
  std::cout << "train-baseline: trained 4 heads on " << dataset.size()
            << " examples, wrote " << (out / "baseline.model.json").string()
            << '\n';
  return 0;
}

int RunDebias(const Args& args) {
  cfguard::PipelineConfig config = MakePipelineConfig(args);
  if (config.out_dir.empty()) throw ValidationError("--out is required");
  fs::create_directories(config.out_dir);
  cfguard::RunArtifacts artifacts = cfguard::RunTwoStage(config);
  const auto& hate = artifacts.comparison.at(cfguard::HarmKind::kHate);
  std::cout << "debias: artifacts in " << config.out_dir.string()
            << " (hate ACV " << hate.baseline.acv << " -> "
            << hate.remediated.acv << ")\n";
  return 0;
}

int RunEval(const Args& args) {
  fs::path model_path = RequireFile(args.model, "--model");
  fs::path data_path = RequireFile(args.data, "--data");
  fs::path out = RequireOut(args);
  cfguard::ForestModel model = cfguard::ForestModel::Load(model_path);
  cfguard::Dataset dataset = cfguard::Dataset::LoadJsonl(data_path);
  ordered_json report = cfguard::EvalReport(model, dataset);
  std::ofstream file(out / "report.json");
  file << report.dump(2) << '\n';
  std::cout << "eval: wrote " << (out / "report.json").string() << '\n';
  return 0;
}

int RunSweep(const Args& args) {
  cfguard::PipelineConfig config = MakePipelineConfig(args);
  std::vector<double> values = ParseValues(args.values);
  std::string param = Require(args.param, "--param");
  cfguard::HarmKind harm = cfguard::ParseHarmKind(Require(args.harm, "--harm"));
  fs::path out = RequireOut(args);

  cfguard::SweepTable table;
  if (param == "lambda_safe" || param == "lambda_unsafe" ||
      param == "lambda") {
    cfguard::Label gt;
    if (param == "lambda") {
      gt = cfguard::ParseLabel(Require(args.gt, "--gt"));
      param = std::string("lambda_") + std::string(cfguard::ToString(gt));
    } else {
      gt = cfguard::ParseLabel(param.substr(7));
    }
    table = cfguard::SweepLambda(config, harm, gt, values);
  } else if (param == "beta") {
    table = cfguard::SweepBeta(config, harm,
                               Require(args.category, "--category"), values);
  } else {
    throw ValidationError("--param: unknown parameter '" + param + "'");
  }
  fs::path csv = out / ("sweep_" + param + ".csv");
  table.SaveCsv(csv);
  std::cout << "sweep: " << table.rows.size() << " rows, wrote "
            << csv.string() << '\n';
  return 0;
}

int RunCompareSources(const Args& args) {
  fs::path model_path = RequireFile(args.model, "--model");
  fs::path data_path = RequireFile(args.data, "--data");
  fs::path out = RequireOut(args);
  cfguard::ForestModel model = cfguard::ForestModel::Load(model_path);
  cfguard::Dataset dataset = cfguard::Dataset::LoadJsonl(data_path);
  cfguard::SourceComparison comparison =
      cfguard::CompareToSources(dataset, model);
  comparison.SaveCsv(out / "compare_sources.csv");
  std::cout << "compare-sources: wrote "
            << (out / "compare_sources.csv").string() << '\n';
  return 0;
}

int RunReport(const Args& args) {
  cfguard::PipelineConfig config = MakePipelineConfig(args);
  fs::path out(Require(args.out, "--out"));
  cfguard::ForestModel baseline =
      cfguard::ForestModel::Load(out / "baseline.model.json");
  cfguard::ForestModel remediated =
      cfguard::ForestModel::Load(out / "remediated.model.json");

  // Keep the original run's resampling warnings when re-deriving the report.
  std::vector<std::string> warnings;
  fs::path report_path = out / "report.json";
  if (fs::exists(report_path)) {
    std::ifstream in(report_path);
    nlohmann::json old;
    in >> old;
    if (old.contains("fdw_warnings")) {
      warnings = old.at("fdw_warnings").get<std::vector<std::string>>();
    }
  }
  ordered_json report =
      cfguard::RebuildReport(config, baseline, remediated, warnings);
  std::ofstream file(report_path);
  file << report.dump(2) << '\n';
  std::cout << "report: rebuilt " << report_path.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Counterfactual fairness toolkit for safety-classifier ensembles"};
  app.require_subcommand(1);

  Args args;
  std::map<std::string, int (*)(const Args&)> handlers = {
      {"gen-corpus", RunGenCorpus},
      {"counterfactualize", RunCounterfactualize},
      {"train-baseline", RunTrainBaseline},
      {"debias", RunDebias},
      {"eval", RunEval},
      {"sweep", RunSweep},
      {"compare-sources", RunCompareSources},
      {"report", RunReport}};
  std::map<std::string, const char*> help = {
      {"gen-corpus", "generate the synthetic planted-bias corpus"},
      {"counterfactualize", "balance counterfactual sets in a dataset"},
      {"train-baseline", "train forest heads on a dataset"},
      {"debias", "run the two-stage debiasing pipeline"},
      {"eval", "evaluate a model on a dataset"},
      {"sweep", "retrain across lambda or beta values"},
      {"compare-sources", "AU-PRC of raw features vs. the ensemble"},
      {"report", "rebuild report.json from persisted models"}};
  for (const auto& [name, fn] : handlers) {
    AddCommonFlags(app.add_subcommand(name, help.at(name)), &args);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return handlers.at(command)(args);
  } catch (const ValidationError& e) {
    std::cerr << command << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << command << ": " << e.what() << '\n';
    return 2;
  }
}
