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
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>

#include "cfguard/rng.hpp"

namespace cfguard {

namespace {

constexpr char kFormatTag[] = "cfguard-forest-v1";
constexpr double kMinGiniGain = 1e-12;

std::string HashToHex(uint64_t h) {
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

uint64_t HexToHash(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is assigned by
// index so results are placement-deterministic.
void ParallelFor(size_t n, int threads, const std::function<void(size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  size_t n_workers = std::min<size_t>(static_cast<size_t>(threads), n);
  pool.reserve(n_workers);
  for (size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
}

struct TrainingData {
  size_t n = 0;
  size_t n_features = 0;
  double total_weight = 0.0;
  // Feature-major values, values[f][i].
  std::vector<std::vector<double>> values;
  std::vector<uint8_t> y;
  std::vector<double> w;
  // Per feature, all example indices sorted by (value, index).
  std::vector<std::vector<uint32_t>> sorted;
};

TrainingData Extract(const Dataset& dataset, HarmKind harm) {
  TrainingData data;
  data.n = dataset.size();
  data.n_features = dataset.feature_names().size();
  data.values.assign(data.n_features, std::vector<double>(data.n));
  data.y.resize(data.n);
  data.w.resize(data.n);

  double total_weight = 0.0;
  bool has_safe = false;
  bool has_unsafe = false;
  for (size_t i = 0; i < data.n; ++i) {
    const Example& e = dataset.examples()[i];
    if (!e.features) {
      throw ValidationError("example '" + e.id + "' has no features");
    }
    for (size_t f = 0; f < data.n_features; ++f) {
      data.values[f][i] = (*e.features)[f];
    }
    data.y[i] = e.label(harm) == Label::kUnsafe ? 1 : 0;
    data.w[i] = e.weight;
    total_weight += e.weight;
    (data.y[i] != 0 ? has_unsafe : has_safe) = true;
  }
  if (!has_safe || !has_unsafe) {
    throw ValidationError("degenerate labels: only one class present for " +
                          std::string(ToString(harm)));
  }
  if (total_weight <= 0.0) {
    throw ValidationError("zero total weight");
  }
  data.total_weight = total_weight;

  data.sorted.assign(data.n_features, {});
  for (size_t f = 0; f < data.n_features; ++f) {
    std::vector<uint32_t>& order = data.sorted[f];
    order.resize(data.n);
    std::iota(order.begin(), order.end(), 0u);
    const std::vector<double>& v = data.values[f];
    std::sort(order.begin(), order.end(), [&v](uint32_t a, uint32_t b) {
      if (v[a] != v[b]) return v[a] < v[b];
      return a < b;
    });
  }
  return data;
}

struct TreeBuilder {
  const TrainingData& data;
  const ForestConfig& config;
  Rng rng;
  // Bootstrap multiplicity per example; effective weight = w * count.
  std::vector<uint32_t> count;
  Tree tree;
  std::vector<double> gains;
  std::vector<uint32_t> feature_scratch;

  TreeBuilder(const TrainingData& d, const ForestConfig& c, Rng r)
      : data(d), config(c), rng(r), gains(d.n_features, 0.0) {
    count.assign(data.n, 0);
    for (size_t i = 0; i < data.n; ++i) {
      ++count[rng.NextIndex(data.n)];
    }
    feature_scratch.resize(data.n_features);
  }

  int FeaturesPerSplit() const {
    if (config.features_per_split == "sqrt") {
      return std::max(1, static_cast<int>(
                             std::sqrt(static_cast<double>(data.n_features))));
    }
    int m = std::stoi(config.features_per_split);
    return std::clamp(m, 1, static_cast<int>(data.n_features));
  }

  void Build() {
    // Root lists: sorted orders filtered to bootstrap-active examples.
    // Zero-weight examples are dropped outright so they cannot steer split
    // thresholds or leaf counts; they still occupy bootstrap draws above.
    std::vector<std::vector<uint32_t>> lists(data.n_features);
    for (size_t f = 0; f < data.n_features; ++f) {
      lists[f].reserve(data.n);
      for (uint32_t i : data.sorted[f]) {
        if (count[i] > 0 && data.w[i] > 0.0) lists[f].push_back(i);
      }
    }
    double w_total = 0.0;
    double w_pos = 0.0;
    uint64_t n_total = 0;
    for (size_t i = 0; i < data.n; ++i) {
      if (count[i] == 0 || data.w[i] <= 0.0) continue;
      double cw = data.w[i] * count[i];
      w_total += cw;
      if (data.y[i] != 0) w_pos += cw;
      n_total += count[i];
    }
    double root_value = w_total > 0.0 ? w_pos / w_total : 0.5;
    BuildNode(std::move(lists), n_total, w_total, w_pos, 0, root_value);
  }

  // Returns the node index. Children are built left first so the RNG stream
  // is consumed in a fixed DFS order.
  int BuildNode(std::vector<std::vector<uint32_t>> lists, uint64_t n_total,
                double w_total, double w_pos, int depth, double parent_value) {
    int node_idx = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    double value = w_total > 0.0 ? w_pos / w_total : parent_value;
    tree.nodes[node_idx].value = value;

    uint64_t msl = static_cast<uint64_t>(config.min_samples_leaf);
    if (depth >= config.max_depth || n_total < 2 * msl || w_pos <= 0.0 ||
        w_pos >= w_total) {
      return node_idx;
    }

    // Draw the candidate feature subset (partial Fisher-Yates), then scan in
    // ascending feature order so Gini ties resolve to the lowest index.
    std::iota(feature_scratch.begin(), feature_scratch.end(), 0u);
    int m = FeaturesPerSplit();
    for (int k = 0; k < m; ++k) {
      size_t j = k + rng.NextIndex(data.n_features - k);
      std::swap(feature_scratch[k], feature_scratch[j]);
    }
    std::sort(feature_scratch.begin(), feature_scratch.begin() + m);

    double parent_gini =
        w_total > 0.0 ? 2.0 * w_pos * (w_total - w_pos) / w_total : 0.0;
    double best_gain = kMinGiniGain;
    int best_feature = -1;
    double best_threshold = 0.0;

    for (int k = 0; k < m; ++k) {
      uint32_t f = feature_scratch[k];
      const std::vector<uint32_t>& order = lists[f];
      const std::vector<double>& v = data.values[f];
      double lw = 0.0;
      double lp = 0.0;
      uint64_t ln = 0;
      for (size_t pos = 0; pos + 1 < order.size(); ++pos) {
        uint32_t i = order[pos];
        double cw = data.w[i] * count[i];
        lw += cw;
        if (data.y[i] != 0) lp += cw;
        ln += count[i];
        double v_here = v[i];
        double v_next = v[order[pos + 1]];
        if (v_next <= v_here) continue;  // not a boundary between values
        if (ln < msl || n_total - ln < msl) continue;
        double rw = w_total - lw;
        double rp = w_pos - lp;
        double child_gini = 0.0;
        if (lw > 0.0) child_gini += 2.0 * lp * (lw - lp) / lw;
        if (rw > 0.0) child_gini += 2.0 * rp * (rw - rp) / rw;
        double gain = parent_gini - child_gini;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = v_here + 0.5 * (v_next - v_here);
        }
      }
    }

    if (best_feature < 0) {
      return node_idx;
    }
    gains[best_feature] += best_gain;

    const std::vector<double>& sv = data.values[best_feature];
    std::vector<std::vector<uint32_t>> left_lists(data.n_features);
    std::vector<std::vector<uint32_t>> right_lists(data.n_features);
    for (size_t f = 0; f < data.n_features; ++f) {
      for (uint32_t i : lists[f]) {
        (sv[i] <= best_threshold ? left_lists : right_lists)[f].push_back(i);
      }
      lists[f].clear();
      lists[f].shrink_to_fit();
    }
    double lw = 0.0;
    double lp = 0.0;
    uint64_t ln = 0;
    for (uint32_t i : left_lists[0]) {
      double cw = data.w[i] * count[i];
      lw += cw;
      if (data.y[i] != 0) lp += cw;
      ln += count[i];
    }

    tree.nodes[node_idx].feature = best_feature;
    tree.nodes[node_idx].threshold = best_threshold;
    int left = BuildNode(std::move(left_lists), ln, lw, lp, depth + 1, value);
    int right = BuildNode(std::move(right_lists), n_total - ln, w_total - lw,
                          w_pos - lp, depth + 1, value);
    tree.nodes[node_idx].left = left;
    tree.nodes[node_idx].right = right;
    return node_idx;
  }
};

}  // namespace

ForestConfig ForestConfig::FromJson(const nlohmann::json& doc) {
  ForestConfig config;
  if (doc.contains("n_trees")) config.n_trees = doc.at("n_trees").get<int>();
  if (doc.contains("max_depth")) {
    config.max_depth = doc.at("max_depth").get<int>();
  }
  if (doc.contains("min_samples_leaf")) {
    config.min_samples_leaf = doc.at("min_samples_leaf").get<int>();
  }
  if (doc.contains("features_per_split")) {
    const auto& fps = doc.at("features_per_split");
    config.features_per_split =
        fps.is_string() ? fps.get<std::string>()
                        : std::to_string(fps.get<int>());
  }
  if (doc.contains("seed")) config.seed = doc.at("seed").get<uint64_t>();
  if (config.n_trees < 1 || config.max_depth < 1 ||
      config.min_samples_leaf < 1) {
    throw ValidationError("forest config: counts must be >= 1");
  }
  return config;
}

nlohmann::ordered_json ForestConfig::ToJson() const {
  return {{"n_trees", n_trees},
          {"max_depth", max_depth},
          {"min_samples_leaf", min_samples_leaf},
          {"features_per_split", features_per_split},
          {"seed", seed}};
}

double Tree::Predict(std::span<const double> features) const {
  int idx = 0;
  while (nodes[idx].feature >= 0) {
    idx = features[nodes[idx].feature] <= nodes[idx].threshold
              ? nodes[idx].left
              : nodes[idx].right;
  }
  return nodes[idx].value;
}

double ForestHead::Predict(std::span<const double> features) const {
  double sum = 0.0;
  for (const Tree& t : trees) sum += t.Predict(features);
  return sum / static_cast<double>(trees.size());
}

ForestHead TrainHead(const Dataset& dataset, HarmKind harm,
                     const ForestConfig& config, int threads) {
  if (config.n_trees < 1 || config.max_depth < 1 ||
      config.min_samples_leaf < 1) {
    throw ValidationError("forest config: counts must be >= 1");
  }
  if (dataset.feature_names().empty()) {
    throw ValidationError("dataset has no feature schema");
  }
  TrainingData data = Extract(dataset, harm);

  ForestHead head;
  head.trees.resize(config.n_trees);
  std::vector<std::vector<double>> per_tree_gains(config.n_trees);

  Rng head_rng = Rng(config.seed).Substream("forest").Substream(ToString(harm));
  ParallelFor(static_cast<size_t>(config.n_trees), threads, [&](size_t t) {
    TreeBuilder builder(data, config, head_rng.Substream(t));
    builder.Build();
    head.trees[t] = std::move(builder.tree);
    per_tree_gains[t] = std::move(builder.gains);
  });

  // Summed in tree order so the totals do not depend on thread scheduling,
  // then divided by the total example weight so that uniformly rescaling all
  // weights leaves the stored gains unchanged.
  head.split_gains.assign(data.n_features, 0.0);
  for (const std::vector<double>& gains : per_tree_gains) {
    for (size_t f = 0; f < gains.size(); ++f) head.split_gains[f] += gains[f];
  }
  for (double& g : head.split_gains) g /= data.total_weight;
  return head;
}

void ForestModel::SetHead(HarmKind harm, ForestHead head,
                          uint64_t dataset_hash) {
  heads_[static_cast<size_t>(harm)] = std::move(head);
  dataset_hashes_[static_cast<size_t>(harm)] = dataset_hash;
}

double ForestModel::PredictHarm(HarmKind harm,
                                std::span<const double> features) const {
  if (features.size() != feature_names_.size()) {
    throw ValidationError("feature vector does not match model schema");
  }
  const ForestHead* h = head(harm);
  if (h == nullptr) {
    throw ValidationError("no trained head for " +
                          std::string(ToString(harm)));
  }
  return h->Predict(features);
}

std::map<HarmKind, double> ForestModel::Predict(
    std::span<const double> features) const {
  std::map<HarmKind, double> out;
  for (HarmKind h : kAllHarms) {
    if (head(h) != nullptr) out[h] = PredictHarm(h, features);
  }
  return out;
}

std::vector<double> ForestModel::Score(HarmKind harm,
                                       const Dataset& dataset) const {
  if (dataset.feature_names() != feature_names_) {
    throw ValidationError("dataset feature schema does not match model");
  }
  std::vector<double> scores;
  scores.reserve(dataset.size());
  for (const Example& e : dataset.examples()) {
    if (!e.features) {
      throw ValidationError("example '" + e.id + "' has no features");
    }
    scores.push_back(PredictHarm(harm, *e.features));
  }
  return scores;
}

FeatureContributions ForestModel::Contributions(HarmKind harm) const {
  const ForestHead* h = head(harm);
  if (h == nullptr) {
    throw ValidationError("no trained head for " +
                          std::string(ToString(harm)));
  }
  FeatureContributions out;
  double total = 0.0;
  for (double g : h->split_gains) total += g;
  for (size_t f = 0; f < feature_names_.size(); ++f) {
    out.percentages[feature_names_[f]] =
        total > 0.0 ? h->split_gains[f] / total * 100.0 : 0.0;
  }
  out.degenerate = total <= 0.0;
  return out;
}

nlohmann::ordered_json ForestModel::ToJson() const {
  nlohmann::ordered_json doc;
  doc["format"] = kFormatTag;
  doc["feature_names"] = feature_names_;
  doc["config"] = config_.ToJson();
  nlohmann::ordered_json heads;
  for (HarmKind h : kAllHarms) {
    const ForestHead* hd = head(h);
    if (hd == nullptr) continue;
    nlohmann::ordered_json trees = nlohmann::ordered_json::array();
    for (const Tree& t : hd->trees) {
      nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
      for (const TreeNode& n : t.nodes) {
        nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
      }
      trees.push_back(std::move(nodes));
    }
    heads[std::string(ToString(h))] = {
        {"dataset_hash", HashToHex(dataset_hashes_[static_cast<size_t>(h)])},
        {"split_gains", hd->split_gains},
        {"trees", std::move(trees)}};
  }
  doc["heads"] = std::move(heads);
  return doc;
}

ForestModel ForestModel::FromJson(const nlohmann::json& doc) {
  if (!doc.contains("format") || doc.at("format") != kFormatTag) {
    throw ValidationError("unrecognized model format tag");
  }
  ForestModel model(doc.at("feature_names").get<std::vector<std::string>>(),
                    ForestConfig::FromJson(doc.at("config")));
  for (HarmKind h : kAllHarms) {
    std::string key(ToString(h));
    if (!doc.at("heads").contains(key)) continue;
    const auto& head_doc = doc.at("heads").at(key);
    ForestHead head;
    head.split_gains = head_doc.at("split_gains").get<std::vector<double>>();
    for (const auto& tree_doc : head_doc.at("trees")) {
      Tree tree;
      for (const auto& node_doc : tree_doc) {
        TreeNode n;
        n.feature = node_doc.at(0).get<int>();
        n.threshold = node_doc.at(1).get<double>();
        n.left = node_doc.at(2).get<int>();
        n.right = node_doc.at(3).get<int>();
        n.value = node_doc.at(4).get<double>();
        tree.nodes.push_back(n);
      }
      head.trees.push_back(std::move(tree));
    }
    model.SetHead(h, std::move(head),
                  HexToHash(head_doc.at("dataset_hash").get<std::string>()));
  }
  return model;
}

void ForestModel::Save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw ValidationError("cannot write model file: " + path.string());
  }
  out << ToJson().dump(2) << '\n';
}

ForestModel ForestModel::Load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open model file: " + path.string());
  }
  nlohmann::json doc;
  in >> doc;
  return FromJson(doc);
}

}  // namespace cfguard
