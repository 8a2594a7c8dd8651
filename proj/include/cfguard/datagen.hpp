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

#ifndef CFGUARD_DATAGEN_H_
#define CFGUARD_DATAGEN_H_

#include <map>
#include <memory>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "cfguard/dataset.hpp"
#include "cfguard/rewriter.hpp"
#include "json.hpp"

namespace cfguard {

// Surface terms per (category, subgroup); the first term of a subgroup is its
// primary term, used when injecting that subgroup into text. Matching is
// lowercase with word boundaries.
class TermLexicon {
 public:
  TermLexicon() = default;

  static TermLexicon Default();
  // JSON: {category: {subgroup: [terms...]}}.
  static TermLexicon LoadJson(const std::filesystem::path& path);
  nlohmann::ordered_json ToJson() const;

  void SetTerms(const std::string& category, const std::string& subgroup,
                std::vector<std::string> terms);
  const std::vector<std::string>* Terms(std::string_view category,
                                        std::string_view subgroup) const;
  const std::string& PrimaryTerm(const std::string& category,
                                 const std::string& subgroup) const;

  // Every subgroup of the taxonomy must have at least one term.
  void Validate(const Taxonomy& taxonomy) const;

 private:
  std::map<std::pair<std::string, std::string>, std::vector<std::string>>
      terms_;
};

// Deterministic lexical rewriter: swaps every seed-subgroup term for the
// target subgroup's primary term, preserving a leading capital. Rejects text
// containing no seed term. Purely lexical; surrounding context (venues,
// customs) is not adapted.
class RuleRewriter : public Rewriter {
 public:
  explicit RuleRewriter(TermLexicon lexicon) : lexicon_(std::move(lexicon)) {}

  RewriteResult Rewrite(const RewriteRequest& request) override;

 private:
  TermLexicon lexicon_;
};

// Client for an external rewriter service: POST {"prompt": str} to the
// endpoint, expect {"text": str}. The prompt is built from a per-category
// template file with {seed_subgroup}/{seed_sentence}/{counterfactual_subgroup}
// placeholders.
class HttpRewriter : public Rewriter {
 public:
  HttpRewriter(std::string host, int port, std::string path,
               std::filesystem::path prompt_dir);

  RewriteResult Rewrite(const RewriteRequest& request) override;

 private:
  std::string host_;
  int port_;
  std::string path_;
  std::filesystem::path prompt_dir_;
};

struct CritiqueDecision {
  bool keep = true;
  std::string reason;
};

// Judges whether a generated counterfactual is congruous with its original.
class Critic {
 public:
  virtual ~Critic() = default;
  virtual CritiqueDecision Judge(const Example& original,
                                 const Example& counterfactual) = 0;
};

class KeepAllCritic : public Critic {
 public:
  CritiqueDecision Judge(const Example&, const Example&) override {
    return {true, ""};
  }
};

struct CritiqueResult {
  Dataset dataset;
  size_t dropped = 0;
  std::vector<std::string> log;  // one line per drop (and per fail-open keep)
};

// Runs the critic over every counterfactual example. Critic transport
// failures keep the example and log a warning, so output size stays
// deterministic.
CritiqueResult CritiqueFilter(const Dataset& dataset, Critic& critic);

struct TemplateExpansion {
  std::string cf_set_id;
  std::vector<std::string> prompts;
};

// Substitutes each term into the single `<social_group>` placeholder; all
// outputs form one fresh counterfactual set. Throws if the placeholder is
// missing or repeated.
TemplateExpansion ExpandTemplate(std::string_view text_template,
                                 std::span<const std::string> terms);

// Per-feature recipe of the source-model simulator. A feature tracks one
// harm's ground truth: base score 0.2 (Safe) / 0.8 (Unsafe) scaled by
// `signal`, plus a per-(gt, category, subgroup) planted bias offset, plus
// Gaussian noise. Noise is keyed by (feature, cf set) so that members of a
// counterfactual set differ only through offsets, mirroring near-identical
// texts receiving near-identical source scores.
struct FeatureSpec {
  HarmKind harm = HarmKind::kHate;
  double signal = 0.8;
  double noise_sd = 0.1;
  // (gt, category, subgroup) -> additive offset.
  std::map<std::tuple<Label, std::string, std::string>, double> offsets;
};

struct BiasSpec {
  std::map<std::string, FeatureSpec> features;

  // Twelve simulated source attributes with one Safe-side bias on
  // identity_attack_sim (Race/Ethnicity, Black, +0.4) and one Unsafe-side
  // bias on threat_sim (Sexual Orientation, Heterosexual, -0.3).
  static BiasSpec Default();
  static BiasSpec FromJson(const nlohmann::json& doc);
  nlohmann::ordered_json ToJson() const;

  std::vector<std::string> FeatureNames() const;
};

// Fills in feature vectors for every example; deterministic given seed.
Dataset SimulateSources(const Dataset& dataset, const BiasSpec& spec,
                        uint64_t seed);

struct CorpusBundle {
  Dataset train;       // counterfactually balanced, features filled
  Dataset validation;  // original examples only
  Dataset test;        // original examples only
  Dataset cf_test;     // counterfactual expansion of test
  BiasSpec spec;
  uint64_t seed = 0;

  // train.jsonl, validation.jsonl, test.jsonl, cf_test.jsonl, metadata.json.
  void Save(const std::filesystem::path& dir) const;
};

// Synthetic fixture: balanced Safe/Unsafe labels per harm, identity
// annotations cycling over every taxonomy subgroup, counterfactual sets via
// the rule rewriter, features from SimulateSources. Throws (listing the
// empty slices) when `train_size` cannot populate every slice.
CorpusBundle MakePlantedBiasCorpus(uint64_t seed, size_t train_size,
                                   size_t validation_size, size_t test_size,
                                   const BiasSpec& spec = BiasSpec::Default(),
                                   const Taxonomy& taxonomy =
                                       Taxonomy::Default(),
                                   const TermLexicon& lexicon =
                                       TermLexicon::Default());

}  // namespace cfguard

#endif  // CFGUARD_DATAGEN_H_
