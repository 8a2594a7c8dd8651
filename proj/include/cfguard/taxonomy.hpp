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

#ifndef CFGUARD_TAXONOMY_H_
#define CFGUARD_TAXONOMY_H_

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cfguard {

// Raised for any schema, config, or input validation failure. Messages name
// the offending file/line/field where available.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class HarmKind { kHate, kToxicity, kSexual, kViolence };

inline constexpr std::array<HarmKind, 4> kAllHarms = {
    HarmKind::kHate, HarmKind::kToxicity, HarmKind::kSexual,
    HarmKind::kViolence};

std::string_view ToString(HarmKind h);
HarmKind ParseHarmKind(std::string_view s);

enum class Label { kSafe, kUnsafe };

std::string_view ToString(Label l);
Label ParseLabel(std::string_view s);

inline constexpr std::array<Label, 2> kBothLabels = {Label::kSafe,
                                                     Label::kUnsafe};

enum class Split { kTrain, kValidation, kTest };

std::string_view ToString(Split s);
Split ParseSplit(std::string_view s);

enum class Origin { kOriginal, kCounterfactual };

std::string_view ToString(Origin o);
Origin ParseOrigin(std::string_view s);

struct IdentityAnnotation {
  std::string category;
  std::string subgroup;

  bool operator==(const IdentityAnnotation&) const = default;
};

// Identity categories and their ordered subgroup lists. Immutable after
// construction.
class Taxonomy {
 public:
  struct Category {
    std::string name;
    std::vector<std::string> subgroups;
  };

  Taxonomy() = default;
  explicit Taxonomy(std::vector<Category> categories);

  // Race/Ethnicity, Religion, Gender Identity, Sexual Orientation with their
  // standard subgroup lists.
  static Taxonomy Default();

  // JSON map category -> ordered subgroup list.
  static Taxonomy LoadJson(const std::filesystem::path& path);

  const std::vector<Category>& categories() const { return categories_; }
  const Category* FindCategory(std::string_view name) const;
  bool Contains(const IdentityAnnotation& identity) const;

  // Throws ValidationError if the subgroup is not in the category's list.
  void Validate(const IdentityAnnotation& identity,
                std::string_view context) const;

 private:
  std::vector<Category> categories_;
};

}  // namespace cfguard

#endif  // CFGUARD_TAXONOMY_H_
