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

#include "cfguard/dataset.hpp"

#include <fstream>
#include <set>
#include <string>

#include "cfguard/datagen.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cfguard;
using cfguard::testutil::TempDir;

namespace {

void WriteLines(const std::filesystem::path& path,
                const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace

TEST_CASE("empty file loads as an empty dataset") {
  TempDir dir("dataset_empty");
  auto path = dir.path() / "empty.jsonl";
  WriteLines(path, {});
  Dataset d = Dataset::LoadJsonl(path);
  CHECK(d.empty());
  CHECK(d.feature_names().empty());
}

TEST_CASE("feature schema is inferred and enforced") {
  TempDir dir("dataset_schema");
  auto path = dir.path() / "data.jsonl";
  WriteLines(path, {
      R"({"id":"a","text":"x","cf_set_id":null,"identity":null,"labels":{"hate":"safe","toxicity":"safe","sexual":"safe","violence":"safe"},"features":{"a":0.2,"b":0.9},"split":"train","origin":"original"})",
      R"({"id":"b","text":"y","cf_set_id":null,"identity":null,"labels":{"hate":"safe","toxicity":"safe","sexual":"safe","violence":"safe"},"features":{"a":0.1},"split":"train","origin":"original"})",
  });
  CHECK_THROWS_WITH_AS(Dataset::LoadJsonl(path),
                       doctest::Contains("feature schema mismatch line 2"),
                       ValidationError);
}

TEST_CASE("cf set members must agree on labels") {
  TempDir dir("dataset_labels");
  auto path = dir.path() / "data.jsonl";
  WriteLines(path, {
      R"({"id":"a","text":"x","cf_set_id":"s1","identity":{"category":"Religion","subgroup":"Islam"},"labels":{"hate":"unsafe","toxicity":"safe","sexual":"safe","violence":"safe"},"features":null,"split":"train","origin":"original"})",
      R"({"id":"b","text":"y","cf_set_id":"s1","identity":{"category":"Religion","subgroup":"Hinduism"},"labels":{"hate":"safe","toxicity":"safe","sexual":"safe","violence":"safe"},"features":null,"split":"train","origin":"counterfactual"})",
  });
  CHECK_THROWS_WITH_AS(Dataset::LoadJsonl(path),
                       doctest::Contains("inconsistent labels in cf set"),
                       ValidationError);
}

TEST_CASE("feature values outside [0,1] are rejected") {
  TempDir dir("dataset_range");
  auto path = dir.path() / "data.jsonl";
  WriteLines(path, {
      R"({"id":"a","text":"x","cf_set_id":null,"identity":null,"labels":{"hate":"safe","toxicity":"safe","sexual":"safe","violence":"safe"},"features":{"a":1.2},"split":"train","origin":"original"})",
  });
  CHECK_THROWS_AS(Dataset::LoadJsonl(path), ValidationError);
}

TEST_CASE("duplicate ids are rejected") {
  std::vector<Example> examples(2);
  examples[0].id = "dup";
  examples[0].text = "x";
  examples[1].id = "dup";
  examples[1].text = "y";
  CHECK_THROWS_AS(
      Dataset::FromExamples(std::move(examples), {}, Taxonomy::Default()),
      ValidationError);
}

TEST_CASE("save then load round-trips field for field") {
  Dataset d = cfguard::testutil::RandomDataset(17, 200);
  TempDir dir("dataset_roundtrip");
  auto path = dir.path() / "data.jsonl";
  d.SaveJsonl(path);
  Dataset loaded = Dataset::LoadJsonl(path);
  REQUIRE(loaded.size() == d.size());
  for (size_t i = 0; i < d.size(); ++i) {
    CHECK(loaded.examples()[i] == d.examples()[i]);
  }
  CHECK(loaded.feature_names() == d.feature_names());
  CHECK(loaded.ContentHash() == d.ContentHash());
}

TEST_CASE("content hash is sensitive to any field change") {
  Dataset d = cfguard::testutil::RandomDataset(18, 50);
  std::vector<Example> tweaked(d.examples());
  tweaked[0].weight = 0.5;
  Dataset d2 = Dataset::FromExamples(std::move(tweaked), d.feature_names(),
                                     d.taxonomy());
  CHECK(d.ContentHash() != d2.ContentHash());
}

TEST_CASE("split_by_cf_set keeps every set in one split") {
  Dataset d = cfguard::testutil::RandomDataset(21, 400);

  SUBCASE("degenerate fractions put everything in train") {
    Dataset all_train = SplitByCfSet(d, {1.0, 0.0, 0.0}, 5);
    for (const Example& e : all_train.examples()) {
      CHECK(e.split == Split::kTrain);
    }
  }

  SUBCASE("assignment is deterministic and leak-free") {
    Dataset s1 = SplitByCfSet(d, {0.8, 0.1, 0.1}, 5);
    Dataset s2 = SplitByCfSet(d, {0.8, 0.1, 0.1}, 5);
    for (size_t i = 0; i < s1.size(); ++i) {
      CHECK(s1.examples()[i].split == s2.examples()[i].split);
    }
    for (const auto& [set_id, members] : s1.cf_sets()) {
      Split first = s1.examples()[members.front()].split;
      for (size_t idx : members) CHECK(s1.examples()[idx].split == first);
    }
    // Partition: same example count, every example in exactly one split.
    CHECK(s1.size() == d.size());
  }

  SUBCASE("invalid fractions are rejected") {
    CHECK_THROWS_AS(SplitByCfSet(d, {0.8, 0.1, 0.3}, 5), ValidationError);
    CHECK_THROWS_AS(SplitByCfSet(d, {-0.1, 1.0, 0.1}, 5), ValidationError);
  }
}

TEST_CASE("counterfactual_balance fills out each category") {
  RuleRewriter rewriter(TermLexicon::Default());

  SUBCASE("two-subgroup category adds exactly one counterfactual") {
    Dataset d = cfguard::testutil::MakeDataset(
        {{.id = "a",
          .category = "Sexual Orientation",
          .subgroup = "Heterosexual"}});
    std::vector<Example> ex(d.examples());
    ex[0].text = "straight people say this";
    d = Dataset::FromExamples(std::move(ex), {}, Taxonomy::Default());
    BalanceResult r = CounterfactualBalance(d, rewriter);
    CHECK(r.added == 1);
    CHECK(r.dataset.size() == 2);
    REQUIRE(r.dataset.cf_sets().size() == 1);
    CHECK(r.dataset.cf_sets().begin()->second.size() == 2);
  }

  SUBCASE("unannotated examples pass through untouched") {
    Dataset d = cfguard::testutil::MakeDataset({{.id = "a"}});
    BalanceResult r = CounterfactualBalance(d, rewriter);
    CHECK(r.added == 0);
    CHECK(r.dataset.size() == 1);
    CHECK(r.dataset.examples()[0] == d.examples()[0]);
  }

  SUBCASE("religion expands to six counterfactuals with equal labels") {
    Dataset d = cfguard::testutil::MakeDataset(
        {{.id = "a",
          .category = "Religion",
          .subgroup = "Islam",
          .hate = Label::kUnsafe}});
    std::vector<Example> ex(d.examples());
    ex[0].text = "My Muslim friend went to mosque";
    d = Dataset::FromExamples(std::move(ex), {}, Taxonomy::Default());
    BalanceResult r = CounterfactualBalance(d, rewriter);
    CHECK(r.added == 6);
    CHECK(r.dataset.size() == 7);
    std::set<std::string> subgroups;
    for (const Example& e : r.dataset.examples()) {
      CHECK(e.labels == d.examples()[0].labels);
      REQUIRE(e.identity.has_value());
      CHECK(subgroups.insert(e.identity->subgroup).second);
      if (e.origin == Origin::kCounterfactual) {
        CHECK_FALSE(e.features.has_value());
      }
    }
    CHECK(subgroups.size() == 7);
  }

  SUBCASE("rewriter rejections are skipped and logged") {
    Dataset d = cfguard::testutil::MakeDataset(
        {{.id = "a", .category = "Religion", .subgroup = "Islam"}});
    // "text for a" contains no religion term, so every rewrite is rejected.
    BalanceResult r = CounterfactualBalance(d, rewriter);
    CHECK(r.added == 0);
    CHECK(r.skipped == 6);
    CHECK(r.warnings.size() == 6);
  }
}
