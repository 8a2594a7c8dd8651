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

#include "cfguard/taxonomy.hpp"

#include <fstream>

#include "json.hpp"

namespace cfguard {

std::string_view ToString(HarmKind h) {
  switch (h) {
    case HarmKind::kHate:
      return "hate";
    case HarmKind::kToxicity:
      return "toxicity";
    case HarmKind::kSexual:
      return "sexual";
    case HarmKind::kViolence:
      return "violence";
  }
  return "?";
}

HarmKind ParseHarmKind(std::string_view s) {
  for (HarmKind h : kAllHarms) {
    if (s == ToString(h)) return h;
  }
  throw ValidationError("unknown harm kind: " + std::string(s));
}

std::string_view ToString(Label l) {
  return l == Label::kSafe ? "safe" : "unsafe";
}

Label ParseLabel(std::string_view s) {
  if (s == "safe") return Label::kSafe;
  if (s == "unsafe") return Label::kUnsafe;
  throw ValidationError("unknown label: " + std::string(s));
}

std::string_view ToString(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kValidation:
      return "validation";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Split ParseSplit(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "validation") return Split::kValidation;
  if (s == "test") return Split::kTest;
  throw ValidationError("unknown split: " + std::string(s));
}

std::string_view ToString(Origin o) {
  return o == Origin::kOriginal ? "original" : "counterfactual";
}

Origin ParseOrigin(std::string_view s) {
  if (s == "original") return Origin::kOriginal;
  if (s == "counterfactual") return Origin::kCounterfactual;
  throw ValidationError("unknown origin: " + std::string(s));
}

Taxonomy::Taxonomy(std::vector<Category> categories)
    : categories_(std::move(categories)) {
  for (const Category& c : categories_) {
    if (c.subgroups.empty()) {
      throw ValidationError("taxonomy category '" + c.name +
                            "' has no subgroups");
    }
  }
}

Taxonomy Taxonomy::Default() {
  return Taxonomy({
      {"Race/Ethnicity",
       {"Black", "Asian", "White", "LatinX", "Indigenous", "Biracial"}},
      {"Religion",
       {"Atheism", "Christianity", "Hinduism", "Islam", "Judaism", "Buddhism",
        "Others"}},
      {"Gender Identity", {"Male", "Female", "NonCisgender"}},
      {"Sexual Orientation", {"Heterosexual", "NonHeterosexual"}},
  });
}

Taxonomy Taxonomy::LoadJson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open taxonomy file: " + path.string());
  }
  nlohmann::ordered_json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("taxonomy parse error in " + path.string() + ": " +
                          e.what());
  }
  if (!doc.is_object()) {
    throw ValidationError("taxonomy file must be a JSON object");
  }
  std::vector<Category> categories;
  for (auto& [name, subgroups] : doc.items()) {
    Category c;
    c.name = name;
    if (!subgroups.is_array()) {
      throw ValidationError("taxonomy category '" + name +
                            "' must map to an array");
    }
    for (auto& s : subgroups) c.subgroups.push_back(s.get<std::string>());
    categories.push_back(std::move(c));
  }
  return Taxonomy(std::move(categories));
}

const Taxonomy::Category* Taxonomy::FindCategory(std::string_view name) const {
  for (const Category& c : categories_) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

bool Taxonomy::Contains(const IdentityAnnotation& identity) const {
  const Category* c = FindCategory(identity.category);
  if (c == nullptr) return false;
  for (const std::string& s : c->subgroups) {
    if (s == identity.subgroup) return true;
  }
  return false;
}

void Taxonomy::Validate(const IdentityAnnotation& identity,
                        std::string_view context) const {
  if (FindCategory(identity.category) == nullptr) {
    throw ValidationError(std::string(context) + ": unknown identity category '" +
                          identity.category + "'");
  }
  if (!Contains(identity)) {
    throw ValidationError(std::string(context) + ": subgroup '" +
                          identity.subgroup + "' not in category '" +
                          identity.category + "'");
  }
}

}  // namespace cfguard
