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

#include "cfguard/fdw.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "cfguard/rng.hpp"
#include "json.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cfguard;
using cfguard::testutil::MakeDataset;

TEST_CASE("slice losses mirror SA per ground truth") {
  SlicedAverages sa;
  sa.safe[{"Religion", "Islam"}] = {0.3, 5};
  sa.unsafe[{"Religion", "Islam"}] = {1.0, 4};
  sa.unsafe[{"Religion", "Judaism"}] = {0.2, 3};

  auto safe_losses = SliceLosses(sa, Label::kSafe);
  REQUIRE(safe_losses.size() == 1);
  CHECK(safe_losses[0].loss == doctest::Approx(0.3).epsilon(1e-12));

  auto unsafe_losses = SliceLosses(sa, Label::kUnsafe);
  REQUIRE(unsafe_losses.size() == 2);
  std::map<std::string, double> by_subgroup;
  for (const auto& l : unsafe_losses) by_subgroup[l.slice.subgroup] = l.loss;
  CHECK(by_subgroup["Islam"] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(by_subgroup["Judaism"] == doctest::Approx(0.8).epsilon(1e-12));

  SlicedAverages empty;
  CHECK_THROWS_AS(SliceLosses(empty, Label::kSafe), ValidationError);
}

namespace {

std::vector<SliceLoss> Losses(const std::vector<double>& values) {
  std::vector<SliceLoss> losses;
  for (size_t i = 0; i < values.size(); ++i) {
    losses.push_back(
        SliceLoss{{"c", "s" + std::to_string(i)}, Label::kSafe, values[i]});
  }
  return losses;
}

}  // namespace

TEST_CASE("sampling distribution is an exact softmax") {
  SUBCASE("beta zero is uniform") {
    auto p = SamplingDistribution(Losses({0.1, 0.9, 0.3, 0.6}), 0.0);
    for (double pi : p) CHECK(pi == doctest::Approx(0.25).epsilon(1e-12));
  }

  SUBCASE("two-point hand oracle") {
    auto p = SamplingDistribution(Losses({0.0, 1.0}), 1.0);
    double e = std::exp(1.0);
    CHECK(p[0] == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(e / (1.0 + e)).epsilon(1e-12));
  }

  SUBCASE("large beta concentrates on the argmax") {
    auto p = SamplingDistribution(Losses({0.2, 0.9, 0.5}), 500.0);
    CHECK(p[1] > 1.0 - 1e-12);
  }

  SUBCASE("matches direct evaluation on random cases") {
    Rng rng(4);
    for (int trial = 0; trial < 1000; ++trial) {
      size_t k = 1 + rng.NextIndex(8);
      std::vector<double> l(k);
      for (double& x : l) x = rng.NextDouble();
      double beta = rng.NextDouble() * 200.0;
      auto p = SamplingDistribution(Losses(l), beta);
      double z = 0.0;
      for (double x : l) z += std::exp(beta * x);
      double total = 0.0;
      for (size_t i = 0; i < k; ++i) {
        CHECK(std::abs(p[i] - std::exp(beta * l[i]) / z) < 1e-12);
        total += p[i];
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }

  SUBCASE("invariant to a constant loss shift") {
    std::vector<double> l = {0.12, 0.4, 0.77};
    auto p1 = SamplingDistribution(Losses(l), 35.0);
    for (double& x : l) x += 0.2;
    auto p2 = SamplingDistribution(Losses(l), 35.0);
    for (size_t i = 0; i < l.size(); ++i) {
      CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-12));
    }
  }

  SUBCASE("beta weakly raises the argmax probability") {
    std::vector<double> l = {0.1, 0.8, 0.4};
    double prev = 0.0;
    for (double beta : {0.0, 1.0, 5.0, 20.0, 100.0}) {
      auto p = SamplingDistribution(Losses(l), beta);
      CHECK(p[1] >= prev - 1e-12);
      prev = p[1];
    }
  }
}

namespace {

Dataset TwoSliceTrain() {
  using testutil::ExampleSpec;
  std::vector<ExampleSpec> specs;
  auto add = [&specs](const std::string& subgroup, Label hate, int copies) {
    for (int i = 0; i < copies; ++i) {
      specs.push_back(
          {.id = subgroup + "-" + std::string(cfguard::ToString(hate)) +
                 std::to_string(i),
           .category = "Sexual Orientation",
           .subgroup = subgroup,
           .hate = hate});
    }
  };
  add("Heterosexual", Label::kSafe, 6);
  add("NonHeterosexual", Label::kSafe, 6);
  add("Heterosexual", Label::kUnsafe, 4);
  add("NonHeterosexual", Label::kUnsafe, 4);
  specs.push_back({.id = "plain"});  // unsliced, base copy only
  return MakeDataset(specs);
}

SlicedAverages TwoSliceSa(double sa_het_safe, double sa_non_safe) {
  SlicedAverages sa;
  sa.safe[{"Sexual Orientation", "Heterosexual"}] = {sa_het_safe, 6};
  sa.safe[{"Sexual Orientation", "NonHeterosexual"}] = {sa_non_safe, 6};
  sa.unsafe[{"Sexual Orientation", "Heterosexual"}] = {0.9, 4};
  sa.unsafe[{"Sexual Orientation", "NonHeterosexual"}] = {0.7, 4};
  return sa;
}

}  // namespace

TEST_CASE("resample emits T plus N draws per arm") {
  Dataset train = TwoSliceTrain();
  FdwHarmConfig config{.safe = {0.5, 10.0}, .unsafe = {0.25, 10.0}};
  ResampleResult r =
      Resample(train, HarmKind::kHate, TwoSliceSa(0.3, 0.1), config, 123);

  CHECK(r.dataset.size() == 3 * train.size());
  CHECK(r.provenance.size() == 2 * train.size());
  CHECK(r.warnings.empty());

  size_t base = 0, safe_copies = 0, unsafe_copies = 0;
  for (const Example& e : r.dataset.examples()) {
    if (e.id.find("#fdw-safe-") != std::string::npos) {
      ++safe_copies;
      CHECK(e.weight == 0.5);
      CHECK(e.label(HarmKind::kHate) == Label::kSafe);
    } else if (e.id.find("#fdw-unsafe-") != std::string::npos) {
      ++unsafe_copies;
      CHECK(e.weight == 0.25);
      CHECK(e.label(HarmKind::kHate) == Label::kUnsafe);
    } else {
      ++base;
      CHECK(e.weight == 1.0);
    }
  }
  CHECK(base == train.size());
  CHECK(safe_copies == train.size());
  CHECK(unsafe_copies == train.size());

  // Every draw record points at a real example of the recorded slice and gt.
  for (const DrawRecord& rec : r.provenance) {
    const Example* src = train.FindById(rec.source_id);
    REQUIRE(src != nullptr);
    REQUIRE(src->identity.has_value());
    CHECK(rec.slice ==
          src->identity->category + "/" + src->identity->subgroup);
    CHECK(cfguard::ToString(src->label(HarmKind::kHate)) == rec.arm);
  }
}

TEST_CASE("resample is deterministic given the seed") {
  Dataset train = TwoSliceTrain();
  FdwHarmConfig config{.safe = {1.0, 50.0}, .unsafe = {1.0, 50.0}};
  SlicedAverages sa = TwoSliceSa(0.4, 0.15);
  ResampleResult a = Resample(train, HarmKind::kHate, sa, config, 9);
  ResampleResult b = Resample(train, HarmKind::kHate, sa, config, 9);
  CHECK(a.dataset.ContentHash() == b.dataset.ContentHash());
  REQUIRE(a.provenance.size() == b.provenance.size());
  for (size_t i = 0; i < a.provenance.size(); ++i) {
    CHECK(a.provenance[i].source_id == b.provenance[i].source_id);
  }
  ResampleResult c = Resample(train, HarmKind::kHate, sa, config, 10);
  CHECK(a.dataset.ContentHash() != c.dataset.ContentHash());
}

TEST_CASE("an empty ground-truth class skips that arm with a warning") {
  using testutil::ExampleSpec;
  std::vector<ExampleSpec> specs;
  for (int i = 0; i < 5; ++i) {
    specs.push_back({.id = "s" + std::to_string(i),
                     .category = "Sexual Orientation",
                     .subgroup = "Heterosexual"});
  }
  Dataset train = MakeDataset(specs);
  SlicedAverages sa;
  sa.safe[{"Sexual Orientation", "Heterosexual"}] = {0.2, 5};
  sa.unsafe[{"Sexual Orientation", "Heterosexual"}] = {0.8, 1};

  FdwHarmConfig config;
  ResampleResult r = Resample(train, HarmKind::kHate, sa, config, 3);
  CHECK(r.dataset.size() == 2 * train.size());  // safe arm only
  CHECK(r.warnings.size() == 1);
}

TEST_CASE("single-slice support draws everything from that slice") {
  Dataset train = TwoSliceTrain();
  // SA only mentions one slice, so the softmax support is that slice alone.
  SlicedAverages sa;
  sa.safe[{"Sexual Orientation", "Heterosexual"}] = {0.5, 6};
  sa.unsafe[{"Sexual Orientation", "Heterosexual"}] = {0.5, 4};
  FdwHarmConfig config{.safe = {1.0, 80.0}, .unsafe = {1.0, 80.0}};
  ResampleResult r = Resample(train, HarmKind::kHate, sa, config, 5);
  CHECK(r.dataset.size() == 3 * train.size());
  for (const DrawRecord& rec : r.provenance) {
    CHECK(rec.slice == "Sexual Orientation/Heterosexual");
  }
}

TEST_CASE("empirical slice frequencies follow the sampling distribution") {
  Dataset train = TwoSliceTrain();
  // beta tuned so the Safe arm favors Heterosexual about 3:1.
  double beta = std::log(3.0) / 0.2;
  SlicedAverages sa = TwoSliceSa(0.4, 0.2);
  FdwHarmConfig config{.safe = {1.0, beta}, .unsafe = {1.0, 0.0}};

  std::map<std::string, size_t> counts;
  size_t safe_draws = 0;
  // 21 examples per pass; ~100 passes gives a tight but honest bound.
  for (uint64_t seed = 0; seed < 2000; ++seed) {
    ResampleResult r = Resample(train, HarmKind::kHate, sa, config, seed);
    for (const DrawRecord& rec : r.provenance) {
      if (rec.arm != "safe") continue;
      ++counts[rec.slice];
      ++safe_draws;
    }
  }
  double het = static_cast<double>(counts["Sexual Orientation/Heterosexual"]) /
               safe_draws;
  CHECK(het == doctest::Approx(0.75).epsilon(0.02));
}

TEST_CASE("provenance log writes one JSONL line per draw") {
  Dataset train = TwoSliceTrain();
  FdwHarmConfig config;
  ResampleResult r =
      Resample(train, HarmKind::kHate, TwoSliceSa(0.3, 0.2), config, 1);
  testutil::TempDir dir("fdw_prov");
  auto path = dir.path() / "prov.jsonl";
  WriteProvenanceJsonl(r.provenance, path);
  std::ifstream in(path);
  std::string line;
  size_t lines = 0;
  while (std::getline(in, line)) {
    auto doc = nlohmann::json::parse(line);
    CHECK(doc.contains("arm"));
    CHECK(doc.contains("slice"));
    CHECK(doc.contains("source_id"));
    CHECK(doc.contains("new_id"));
    ++lines;
  }
  CHECK(lines == r.provenance.size());
}

TEST_CASE("config round-trips through the JSON wire format") {
  FdwConfig config;
  config.ForHarm(HarmKind::kHate).safe = {0.01, 75.0};
  config.ForHarm(HarmKind::kViolence).unsafe = {2.0, 5.0};
  nlohmann::ordered_json doc = config.ToJson();
  CHECK(doc.at("hate").at("safe").at("lambda") == 0.01);
  FdwConfig back = FdwConfig::FromJson(doc);
  CHECK(back.ForHarm(HarmKind::kHate).safe.lambda == 0.01);
  CHECK(back.ForHarm(HarmKind::kHate).safe.beta == 75.0);
  CHECK(back.ForHarm(HarmKind::kViolence).unsafe.lambda == 2.0);
}
