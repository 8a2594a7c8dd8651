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

#ifndef CFGUARD_TESTS_TEST_UTIL_H_
#define CFGUARD_TESTS_TEST_UTIL_H_

#include <unistd.h>

#include <filesystem>
#include <string>
#include <vector>

#include "cfguard/dataset.hpp"
#include "cfguard/rng.hpp"

namespace cfguard::testutil {

struct ExampleSpec {
  std::string id;
  std::string cf_set;    // empty = none
  std::string category;  // empty = no identity
  std::string subgroup;
  Label hate = Label::kSafe;
  std::vector<double> features;  // empty = none
  double weight = 1.0;
  Split split = Split::kTrain;
  Origin origin = Origin::kOriginal;
};

inline Example MakeExample(const ExampleSpec& spec) {
  Example e;
  e.id = spec.id;
  e.text = "text for " + spec.id;
  if (!spec.cf_set.empty()) e.cf_set_id = spec.cf_set;
  if (!spec.category.empty()) {
    e.identity = IdentityAnnotation{spec.category, spec.subgroup};
  }
  e.set_label(HarmKind::kHate, spec.hate);
  if (!spec.features.empty()) e.features = spec.features;
  e.weight = spec.weight;
  e.split = spec.split;
  e.origin = spec.origin;
  return e;
}

inline Dataset MakeDataset(const std::vector<ExampleSpec>& specs,
                           std::vector<std::string> feature_names = {}) {
  std::vector<Example> examples;
  examples.reserve(specs.size());
  for (const auto& s : specs) examples.push_back(MakeExample(s));
  return Dataset::FromExamples(std::move(examples), std::move(feature_names),
                               Taxonomy::Default());
}

// Random dataset with counterfactual sets across the default taxonomy,
// suitable for metric property tests. Sets have 1..4 members; about one
// example in five lacks identity.
inline Dataset RandomDataset(uint64_t seed, size_t target_size) {
  Rng rng(seed);
  Taxonomy taxonomy = Taxonomy::Default();
  std::vector<Example> examples;
  size_t set_no = 0;
  while (examples.size() < target_size) {
    const auto& cat =
        taxonomy.categories()[rng.NextIndex(taxonomy.categories().size())];
    size_t max_members =
        std::min<size_t>(cat.subgroups.size(), 1 + rng.NextIndex(4));
    bool annotated = rng.NextDouble() > 0.2;
    Label gt = rng.NextDouble() < 0.5 ? Label::kSafe : Label::kUnsafe;
    std::string set_id = "set-" + std::to_string(set_no++);
    for (size_t m = 0; m < max_members; ++m) {
      Example e;
      e.id = set_id + "-" + std::to_string(m);
      e.text = "t";
      e.set_label(HarmKind::kHate, gt);
      e.set_label(HarmKind::kViolence,
                  rng.NextDouble() < 0.5 ? Label::kSafe : Label::kUnsafe);
      if (annotated) {
        e.cf_set_id = set_id;
        e.identity = IdentityAnnotation{cat.name, cat.subgroups[m]};
        e.origin = m == 0 ? Origin::kOriginal : Origin::kCounterfactual;
      } else {
        max_members = 1;
      }
      examples.push_back(std::move(e));
      if (!annotated) break;
    }
  }
  // Labels must agree within a set; violence was drawn per member, fix it up.
  std::map<std::string, Label> violence;
  for (Example& e : examples) {
    if (!e.cf_set_id) continue;
    auto [it, inserted] =
        violence.emplace(*e.cf_set_id, e.label(HarmKind::kViolence));
    e.set_label(HarmKind::kViolence, it->second);
  }
  return Dataset::FromExamples(std::move(examples), {}, taxonomy);
}

inline std::vector<double> RandomScores(uint64_t seed, size_t n) {
  Rng rng(seed);
  std::vector<double> scores(n);
  for (double& s : scores) s = rng.NextDouble();
  return scores;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("cfguard_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace cfguard::testutil

#endif  // CFGUARD_TESTS_TEST_UTIL_H_
