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

#include "cfguard/forest.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cfguard/metrics.hpp"
#include "cfguard/rng.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace cfguard;

namespace {

// n examples over two features: "signal" tracks the label, "noise" does not.
Dataset SignalNoiseData(uint64_t seed, size_t n, double flip_rate = 0.0) {
  Rng rng(seed);
  std::vector<Example> examples;
  for (size_t i = 0; i < n; ++i) {
    Example e;
    e.id = "e" + std::to_string(i);
    e.text = "t";
    bool unsafe = i % 2 == 1;
    double signal = unsafe ? 0.6 + 0.4 * rng.NextDouble()
                           : 0.4 * rng.NextDouble();
    if (rng.NextDouble() < flip_rate) signal = 1.0 - signal;
    e.features = std::vector<double>{rng.NextDouble(), signal};
    e.set_label(HarmKind::kHate, unsafe ? Label::kUnsafe : Label::kSafe);
    examples.push_back(std::move(e));
  }
  return Dataset::FromExamples(std::move(examples), {"noise", "signal"},
                               Taxonomy::Default());
}

std::vector<Label> HateLabels(const Dataset& d) {
  std::vector<Label> labels;
  for (const Example& e : d.examples()) labels.push_back(e.label(HarmKind::kHate));
  return labels;
}

}  // namespace

TEST_CASE("separable data trains to a perfect ranking") {
  Dataset d = SignalNoiseData(1, 200);
  ForestConfig config{.n_trees = 20, .seed = 3};
  ForestHead head = TrainHead(d, HarmKind::kHate, config);
  ForestModel model({"noise", "signal"}, config);
  model.SetHead(HarmKind::kHate, std::move(head), d.ContentHash());
  CHECK(AuPrc(model.Score(HarmKind::kHate, d), HateLabels(d)) == 1.0);
}

TEST_CASE("training is deterministic and thread-count independent") {
  Dataset d = SignalNoiseData(2, 300, 0.1);
  ForestConfig config{.n_trees = 16, .seed = 44};
  ForestHead a = TrainHead(d, HarmKind::kHate, config, 1);
  ForestHead b = TrainHead(d, HarmKind::kHate, config, 1);
  ForestHead c = TrainHead(d, HarmKind::kHate, config, 4);

  auto dump = [&config, &d](ForestHead h) {
    ForestModel m(d.feature_names(), config);
    m.SetHead(HarmKind::kHate, std::move(h), 0);
    return m.ToJson().dump();
  };
  std::string sa = dump(std::move(a));
  CHECK(sa == dump(std::move(b)));
  CHECK(sa == dump(std::move(c)));

  ForestConfig other = config;
  other.seed = 45;
  CHECK(sa != dump(TrainHead(d, HarmKind::kHate, other, 1)));
}

TEST_CASE("uniformly scaling weights does not change the model") {
  Dataset d = SignalNoiseData(3, 150, 0.15);
  std::vector<Example> doubled(d.examples());
  for (Example& e : doubled) e.weight *= 2.0;
  Dataset d2 = Dataset::FromExamples(std::move(doubled), d.feature_names(),
                                     d.taxonomy());
  ForestConfig config{.n_trees = 12, .seed = 7};
  auto dump = [&config, &d](ForestHead h) {
    ForestModel m(d.feature_names(), config);
    m.SetHead(HarmKind::kHate, std::move(h), 0);
    return m.ToJson().dump();
  };
  CHECK(dump(TrainHead(d, HarmKind::kHate, config)) ==
        dump(TrainHead(d2, HarmKind::kHate, config)));
}

TEST_CASE("zero-weight examples do not steer the split criterion") {
  // Independent oracle for the weighted-Gini split score: evaluate every
  // midpoint threshold by brute force and check that appending a zero-weight
  // example leaves the ranking of candidate splits unchanged.
  struct Point {
    double x;
    double w;
    bool unsafe;
  };
  std::vector<Point> points = {{0.1, 1.0, false}, {0.2, 2.0, false},
                               {0.45, 1.0, true}, {0.5, 0.5, false},
                               {0.8, 1.5, true},  {0.9, 1.0, true}};
  auto best_split = [](const std::vector<Point>& pts) {
    double total_w = 0.0, total_pos = 0.0;
    for (const auto& p : pts) {
      total_w += p.w;
      if (p.unsafe) total_pos += p.w;
    }
    auto gini = [](double pos, double w) {
      return w <= 0.0 ? 0.0 : 2.0 * pos * (w - pos) / w;
    };
    double best_score = -1.0, best_thr = 0.0;
    // Candidate thresholds come from carried examples only; a weightless
    // example contributes neither mass nor boundaries.
    std::vector<double> xs;
    for (const auto& p : pts) {
      if (p.w > 0.0) xs.push_back(p.x);
    }
    std::sort(xs.begin(), xs.end());
    for (size_t i = 0; i + 1 < xs.size(); ++i) {
      if (xs[i] == xs[i + 1]) continue;
      double thr = (xs[i] + xs[i + 1]) / 2.0;
      double lw = 0.0, lp = 0.0;
      for (const auto& p : pts) {
        if (p.x <= thr) {
          lw += p.w;
          if (p.unsafe) lp += p.w;
        }
      }
      double score = gini(total_pos, total_w) - gini(lp, lw) -
                     gini(total_pos - lp, total_w - lw);
      if (score > best_score + 1e-15) {
        best_score = score;
        best_thr = thr;
      }
    }
    return std::pair(best_score, best_thr);
  };

  auto [score, thr] = best_split(points);
  std::vector<Point> with_ghost = points;
  with_ghost.push_back({0.3, 0.0, true});
  auto [score2, thr2] = best_split(with_ghost);
  CHECK(thr == thr2);
  CHECK(score == doctest::Approx(score2).epsilon(1e-12));
}

TEST_CASE("prediction averages leaf values") {
  ForestModel model({"f"}, ForestConfig{.n_trees = 2});
  ForestHead head;
  Tree leaf_low, leaf_high;
  leaf_low.nodes.push_back(TreeNode{.feature = -1, .value = 0.0});
  leaf_high.nodes.push_back(TreeNode{.feature = -1, .value = 1.0});
  head.trees = {leaf_low, leaf_high};
  head.split_gains = {0.0};
  model.SetHead(HarmKind::kHate, head, 0);

  std::vector<double> x = {0.5};
  CHECK(model.PredictHarm(HarmKind::kHate, x) == 0.5);

  ForestHead constant;
  constant.trees = {leaf_low, leaf_low};
  constant.trees[0].nodes[0].value = 0.7;
  constant.trees[1].nodes[0].value = 0.7;
  constant.split_gains = {0.0};
  model.SetHead(HarmKind::kToxicity, constant, 0);
  CHECK(model.PredictHarm(HarmKind::kToxicity, x) == 0.7);

  CHECK_THROWS_AS(model.PredictHarm(HarmKind::kHate,
                                    std::vector<double>{0.1, 0.2}),
                  ValidationError);
  CHECK_THROWS_AS(model.PredictHarm(HarmKind::kSexual, x), ValidationError);
}

TEST_CASE("scores track a single informative feature") {
  // With labels that are a non-decreasing function of the one feature, every
  // leaf value is a mean of that function over an interval, intervals are
  // ordered, so each tree and hence the forest is exactly monotone. Noisy
  // labels break pointwise monotonicity (leaves average random draws), so
  // for those only the coarse trend is asserted.
  auto build = [](uint64_t seed, bool noisy) {
    Rng rng(seed);
    std::vector<Example> examples;
    for (size_t i = 0; i < 400; ++i) {
      Example e;
      e.id = "e" + std::to_string(i);
      e.text = "t";
      double x = rng.NextDouble();
      e.features = std::vector<double>{x};
      bool unsafe = noisy ? rng.NextDouble() < x : x > 0.55;
      e.set_label(HarmKind::kHate, unsafe ? Label::kUnsafe : Label::kSafe);
      examples.push_back(std::move(e));
    }
    return Dataset::FromExamples(std::move(examples), {"f"},
                                 Taxonomy::Default());
  };
  ForestConfig config{.n_trees = 40, .seed = 12};

  SUBCASE("deterministic monotone labels give monotone scores") {
    Dataset d = build(8, false);
    ForestModel model({"f"}, config);
    model.SetHead(HarmKind::kHate, TrainHead(d, HarmKind::kHate, config),
                  d.ContentHash());
    double prev = 0.0;
    for (int g = 0; g <= 100; ++g) {
      std::vector<double> x = {g / 100.0};
      double score = model.PredictHarm(HarmKind::kHate, x);
      CHECK(score >= 0.0);
      CHECK(score <= 1.0);
      CHECK(score >= prev);
      prev = score;
    }
    CHECK(prev == 1.0);
  }

  SUBCASE("noisy labels keep the coarse trend") {
    Dataset d = build(8, true);
    ForestModel model({"f"}, config);
    model.SetHead(HarmKind::kHate, TrainHead(d, HarmKind::kHate, config),
                  d.ContentHash());
    double thirds[3] = {0.0, 0.0, 0.0};
    for (int g = 0; g < 99; ++g) {
      std::vector<double> x = {g / 99.0};
      thirds[g / 33] += model.PredictHarm(HarmKind::kHate, x) / 33.0;
    }
    CHECK(thirds[0] + 0.1 < thirds[1]);
    CHECK(thirds[1] + 0.1 < thirds[2]);
  }
}

TEST_CASE("leaf values and gains stay in legal ranges") {
  Dataset d = SignalNoiseData(9, 250, 0.2);
  ForestConfig config{.n_trees = 10, .seed = 5};
  ForestHead head = TrainHead(d, HarmKind::kHate, config);
  for (const Tree& tree : head.trees) {
    for (const TreeNode& node : tree.nodes) {
      if (node.feature == -1) {
        CHECK(node.value >= 0.0);
        CHECK(node.value <= 1.0);
      } else {
        CHECK(node.feature < 2);
      }
    }
  }
  // Chosen splits never increase impurity, so accumulated gains are >= 0.
  for (double g : head.split_gains) CHECK(g >= 0.0);
}

TEST_CASE("feature contributions normalize to one hundred") {
  Dataset d = SignalNoiseData(10, 300, 0.1);
  ForestConfig config{.n_trees = 25, .seed = 2};
  ForestModel model({"noise", "signal"}, config);
  model.SetHead(HarmKind::kHate, TrainHead(d, HarmKind::kHate, config),
                d.ContentHash());
  FeatureContributions fc = model.Contributions(HarmKind::kHate);
  CHECK_FALSE(fc.degenerate);
  double total = 0.0;
  for (const auto& [name, pct] : fc.percentages) {
    CHECK(pct >= 0.0);
    total += pct;
  }
  CHECK(std::abs(total - 100.0) < 1e-6);
  CHECK(fc.percentages.at("signal") > fc.percentages.at("noise"));
}

TEST_CASE("a forest that never splits is flagged degenerate") {
  // min_samples_leaf larger than the dataset forces single-leaf trees.
  Dataset d = SignalNoiseData(11, 20);
  ForestConfig config{.n_trees = 5, .min_samples_leaf = 50, .seed = 1};
  ForestModel model({"noise", "signal"}, config);
  model.SetHead(HarmKind::kHate, TrainHead(d, HarmKind::kHate, config),
                d.ContentHash());
  FeatureContributions fc = model.Contributions(HarmKind::kHate);
  CHECK(fc.degenerate);
  for (const auto& [name, pct] : fc.percentages) CHECK(pct == 0.0);
}

TEST_CASE("training rejects degenerate inputs") {
  ForestConfig config{.n_trees = 2, .seed = 1};

  std::vector<Example> one_class;
  for (int i = 0; i < 10; ++i) {
    Example e;
    e.id = "e" + std::to_string(i);
    e.text = "t";
    e.features = std::vector<double>{0.1 * i};
    one_class.push_back(std::move(e));
  }
  Dataset d1 = Dataset::FromExamples(std::move(one_class), {"f"},
                                     Taxonomy::Default());
  CHECK_THROWS_WITH_AS(TrainHead(d1, HarmKind::kHate, config),
                       doctest::Contains("degenerate labels"),
                       ValidationError);

  std::vector<Example> weightless;
  for (int i = 0; i < 4; ++i) {
    Example e;
    e.id = "w" + std::to_string(i);
    e.text = "t";
    e.features = std::vector<double>{0.2 * i};
    e.weight = 0.0;
    e.set_label(HarmKind::kHate, i % 2 == 0 ? Label::kSafe : Label::kUnsafe);
    weightless.push_back(std::move(e));
  }
  Dataset d2 = Dataset::FromExamples(std::move(weightless), {"f"},
                                     Taxonomy::Default());
  CHECK_THROWS_AS(TrainHead(d2, HarmKind::kHate, config), ValidationError);

  Dataset no_features = cfguard::testutil::MakeDataset({{.id = "a"}});
  CHECK_THROWS_AS(TrainHead(no_features, HarmKind::kHate, config),
                  ValidationError);
}

TEST_CASE("model serialization round-trips") {
  Dataset d = SignalNoiseData(13, 200, 0.1);
  ForestConfig config{.n_trees = 8, .seed = 21};
  ForestModel model({"noise", "signal"}, config);
  for (HarmKind h : {HarmKind::kHate}) {
    model.SetHead(h, TrainHead(d, h, config), d.ContentHash());
  }
  cfguard::testutil::TempDir dir("forest_io");
  auto path = dir.path() / "model.json";
  model.Save(path);
  ForestModel loaded = ForestModel::Load(path);
  CHECK(loaded.ToJson() == model.ToJson());
  for (const Example& e : d.examples()) {
    CHECK(loaded.PredictHarm(HarmKind::kHate, *e.features) ==
          model.PredictHarm(HarmKind::kHate, *e.features));
  }
  CHECK(loaded.head(HarmKind::kToxicity) == nullptr);
}
