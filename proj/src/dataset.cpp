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

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "cfguard/rng.hpp"
#include "json.hpp"

namespace cfguard {

namespace {

using nlohmann::ordered_json;

std::string Slug(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      out.push_back('-');
    }
  }
  return out;
}

ordered_json ExampleToJson(const Example& e,
                           const std::vector<std::string>& feature_names) {
  ordered_json rec;
  rec["id"] = e.id;
  rec["text"] = e.text;
  rec["cf_set_id"] = e.cf_set_id ? ordered_json(*e.cf_set_id) : nullptr;
  if (e.identity) {
    rec["identity"] = {{"category", e.identity->category},
                       {"subgroup", e.identity->subgroup}};
  } else {
    rec["identity"] = nullptr;
  }
  ordered_json labels;
  for (HarmKind h : kAllHarms) {
    labels[std::string(ToString(h))] = std::string(ToString(e.label(h)));
  }
  rec["labels"] = labels;
  if (e.features) {
    ordered_json feats;
    for (size_t i = 0; i < feature_names.size(); ++i) {
      feats[feature_names[i]] = (*e.features)[i];
    }
    rec["features"] = feats;
  } else {
    rec["features"] = nullptr;
  }
  rec["weight"] = e.weight;
  rec["split"] = std::string(ToString(e.split));
  rec["origin"] = std::string(ToString(e.origin));
  return rec;
}

Example ExampleFromJson(const ordered_json& rec, size_t line,
                        std::vector<std::string>* feature_names,
                        bool* schema_known) {
  auto fail = [line](const std::string& what) -> ValidationError {
    return ValidationError(what + " line " + std::to_string(line));
  };
  Example e;
  try {
    e.id = rec.at("id").get<std::string>();
    e.text = rec.at("text").get<std::string>();
    if (!rec.at("cf_set_id").is_null()) {
      e.cf_set_id = rec.at("cf_set_id").get<std::string>();
    }
    if (!rec.at("identity").is_null()) {
      e.identity = IdentityAnnotation{
          rec.at("identity").at("category").get<std::string>(),
          rec.at("identity").at("subgroup").get<std::string>()};
    }
    const auto& labels = rec.at("labels");
    for (HarmKind h : kAllHarms) {
      e.set_label(h,
                  ParseLabel(labels.at(std::string(ToString(h)))
                                 .get<std::string>()));
    }
    if (!rec.at("features").is_null()) {
      const auto& feats = rec.at("features");
      std::vector<std::string> names;
      for (auto& [name, value] : feats.items()) names.push_back(name);
      std::sort(names.begin(), names.end());
      if (!*schema_known) {
        *feature_names = names;
        *schema_known = true;
      } else if (names != *feature_names) {
        throw fail("feature schema mismatch");
      }
      std::vector<double> values;
      values.reserve(names.size());
      for (const std::string& name : names) {
        double v = feats.at(name).get<double>();
        if (v < 0.0 || v > 1.0) {
          throw fail("feature '" + name + "' out of [0,1]");
        }
        values.push_back(v);
      }
      e.features = std::move(values);
    }
    if (rec.contains("weight")) e.weight = rec.at("weight").get<double>();
    e.split = ParseSplit(rec.at("split").get<std::string>());
    e.origin = ParseOrigin(rec.at("origin").get<std::string>());
  } catch (const nlohmann::json::exception& ex) {
    throw fail(std::string("bad record: ") + ex.what());
  }
  if (e.weight < 0.0) throw fail("negative weight");
  return e;
}

}  // namespace

Dataset Dataset::FromExamples(std::vector<Example> examples,
                              std::vector<std::string> feature_names,
                              Taxonomy taxonomy) {
  Dataset d;
  d.examples_ = std::move(examples);
  d.feature_names_ = std::move(feature_names);
  d.taxonomy_ = std::move(taxonomy);
  if (!std::is_sorted(d.feature_names_.begin(), d.feature_names_.end())) {
    std::sort(d.feature_names_.begin(), d.feature_names_.end());
  }

  std::unordered_set<std::string> ids;
  for (const Example& e : d.examples_) {
    if (!ids.insert(e.id).second) {
      throw ValidationError("duplicate example id '" + e.id + "'");
    }
    if (e.weight < 0.0) {
      throw ValidationError("negative weight for example '" + e.id + "'");
    }
    if (e.features && e.features->size() != d.feature_names_.size()) {
      throw ValidationError("feature vector size mismatch for example '" +
                            e.id + "'");
    }
    if (e.features) {
      for (double v : *e.features) {
        if (v < 0.0 || v > 1.0) {
          throw ValidationError("feature out of [0,1] for example '" + e.id +
                                "'");
        }
      }
    }
    if (e.identity) {
      d.taxonomy_.Validate(*e.identity, "example '" + e.id + "'");
    }
    if (e.origin == Origin::kCounterfactual && (!e.cf_set_id || !e.identity)) {
      throw ValidationError("counterfactual example '" + e.id +
                            "' missing cf_set_id or identity");
    }
  }

  for (size_t i = 0; i < d.examples_.size(); ++i) {
    const Example& e = d.examples_[i];
    if (e.cf_set_id) d.cf_sets_[*e.cf_set_id].push_back(i);
  }

  for (const auto& [set_id, members] : d.cf_sets_) {
    const Example& first = d.examples_[members.front()];
    std::set<std::string> subgroups;
    for (size_t idx : members) {
      const Example& e = d.examples_[idx];
      if (e.labels != first.labels) {
        throw ValidationError("inconsistent labels in cf set '" + set_id +
                              "'");
      }
      if (e.split != first.split) {
        throw ValidationError("cf set '" + set_id + "' straddles splits");
      }
      if (!e.identity) {
        throw ValidationError("cf set '" + set_id +
                              "' member '" + e.id + "' lacks identity");
      }
      if (e.identity->category != first.identity->category) {
        throw ValidationError("cf set '" + set_id + "' mixes categories");
      }
      if (!subgroups.insert(e.identity->subgroup).second) {
        throw ValidationError("cf set '" + set_id + "' repeats subgroup '" +
                              e.identity->subgroup + "'");
      }
    }
  }
  return d;
}

Dataset Dataset::LoadJsonl(const std::filesystem::path& path,
                           Taxonomy taxonomy) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open dataset file: " + path.string());
  }
  std::vector<Example> examples;
  std::vector<std::string> feature_names;
  bool schema_known = false;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json rec;
    try {
      rec = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("JSON parse error line " + std::to_string(line_no) +
                            ": " + e.what());
    }
    examples.push_back(
        ExampleFromJson(rec, line_no, &feature_names, &schema_known));
  }
  return FromExamples(std::move(examples), std::move(feature_names),
                      std::move(taxonomy));
}

void Dataset::SaveJsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw ValidationError("cannot write dataset file: " + path.string());
  }
  for (const Example& e : examples_) {
    out << ExampleToJson(e, feature_names_).dump() << '\n';
  }
}

const Example* Dataset::FindById(std::string_view id) const {
  for (const Example& e : examples_) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

std::optional<size_t> Dataset::FeatureIndex(std::string_view name) const {
  auto it = std::lower_bound(feature_names_.begin(), feature_names_.end(),
                             name);
  if (it != feature_names_.end() && *it == name) {
    return static_cast<size_t>(it - feature_names_.begin());
  }
  return std::nullopt;
}

uint64_t Dataset::ContentHash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](std::string_view s) {
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
  };
  for (const Example& e : examples_) {
    mix(ExampleToJson(e, feature_names_).dump());
    mix("\n");
  }
  return h;
}

Dataset SplitByCfSet(const Dataset& dataset, const SplitFractions& fractions,
                     uint64_t seed) {
  if (fractions.train < 0.0 || fractions.validation < 0.0 ||
      fractions.test < 0.0) {
    throw ValidationError("split fractions must be non-negative");
  }
  double total = fractions.train + fractions.validation + fractions.test;
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1");
  }

  Rng base = Rng(seed).Substream("split_by_cf_set");
  auto assign = [&](std::string_view unit_id) {
    double u = base.Substream(unit_id).NextDouble();
    if (u < fractions.train) return Split::kTrain;
    if (u < fractions.train + fractions.validation) return Split::kValidation;
    return Split::kTest;
  };

  std::vector<Example> examples = dataset.examples();
  for (Example& e : examples) {
    e.split = e.cf_set_id ? assign(*e.cf_set_id) : assign(e.id);
  }
  return Dataset::FromExamples(std::move(examples), dataset.feature_names(),
                               dataset.taxonomy());
}

BalanceResult CounterfactualBalance(const Dataset& dataset,
                                    Rewriter& rewriter) {
  BalanceResult result;
  std::vector<Example> examples = dataset.examples();

  // Subgroups already present per cf set, so rebalancing is idempotent.
  std::map<std::string, std::set<std::string>> present;
  for (const Example& e : examples) {
    if (e.cf_set_id && e.identity) {
      present[*e.cf_set_id].insert(e.identity->subgroup);
    }
  }

  std::vector<Example> added;
  for (Example& e : examples) {
    if (e.origin != Origin::kOriginal || !e.identity) continue;
    const Taxonomy::Category* category =
        dataset.taxonomy().FindCategory(e.identity->category);
    if (category == nullptr) continue;

    if (!e.cf_set_id) {
      e.cf_set_id = "cfset-" + e.id;
      present[*e.cf_set_id].insert(e.identity->subgroup);
    }
    for (const std::string& target : category->subgroups) {
      if (present[*e.cf_set_id].count(target) != 0) continue;
      RewriteRequest request{e.text, e.identity->category,
                             e.identity->subgroup, target};
      RewriteResult rewritten;
      try {
        rewritten = rewriter.Rewrite(request);
      } catch (const std::exception& ex) {
        rewritten.rejected = true;
        rewritten.rationale = ex.what();
      }
      if (rewritten.rejected) {
        ++result.skipped;
        result.warnings.push_back("skipped counterfactual of '" + e.id +
                                  "' -> " + target + ": " +
                                  rewritten.rationale);
        continue;
      }
      Example cf;
      cf.id = e.id + "#cf-" + Slug(target);
      cf.text = rewritten.text;
      cf.cf_set_id = e.cf_set_id;
      cf.identity = IdentityAnnotation{e.identity->category, target};
      cf.labels = e.labels;  // propagated
      cf.features = std::nullopt;
      cf.weight = 1.0;
      cf.split = e.split;
      cf.origin = Origin::kCounterfactual;
      present[*e.cf_set_id].insert(target);
      added.push_back(std::move(cf));
      ++result.added;
    }
  }

  examples.insert(examples.end(), std::make_move_iterator(added.begin()),
                  std::make_move_iterator(added.end()));
  result.dataset = Dataset::FromExamples(
      std::move(examples), dataset.feature_names(), dataset.taxonomy());
  return result;
}

}  // namespace cfguard
