#include "xmatch/decision_tree.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "xmatch/error.hpp"
#include "xmatch/parallel.hpp"
#include "xmatch/rng.hpp"

namespace xmatch {

double gini_index(double r_pos, double r_neg) {
  const double total = r_pos + r_neg;
  if (total <= 0.0) return 0.0;
  return 2.0 * r_pos * r_neg / (total * total);
}

namespace {

void require_both_classes(const FeatureMatrix& data) {
  if (data.cols == 0 || data.values.size() != data.rows() * data.cols) {
    throw Error(ErrorKind::DimensionMismatch, "feature matrix shape does not match labels");
  }
  if (data.rows() < 2) throw Error(ErrorKind::DegenerateData, "fewer than two rows");
  std::size_t pos = 0;
  for (auto l : data.labels) pos += l ? 1 : 0;
  if (pos == 0 || pos == data.rows()) throw Error(ErrorKind::DegenerateData, "single-class labels");
}

// Weighted impurity mass: total weight times Gini of the weighted counts.
double impurity_mass(double wpos, double wneg) {
  const double w = wpos + wneg;
  return w > 0.0 ? w * gini_index(wpos, wneg) : 0.0;
}

struct Split {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

struct PendingNode {
  std::int32_t node;
  std::vector<std::uint32_t> samples;
};

}  // namespace

double DecisionTree::predict(std::span<const float> row) const {
  if (row.size() != n_features) {
    throw Error(ErrorKind::DimensionMismatch, "row has " + std::to_string(row.size()) +
                                                  " values, model expects " +
                                                  std::to_string(n_features));
  }
  std::int32_t id = 0;
  while (!nodes[id].is_leaf()) {
    const TreeNode& n = nodes[id];
    id = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
  }
  return nodes[id].positive_fraction;
}

std::size_t DecisionTree::internal_nodes() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes[i].is_leaf()) {
      d[nodes[i].left] = d[i] + 1;
      d[nodes[i].right] = d[i] + 1;
    }
  }
  return best;
}

DecisionTree train_tree(const FeatureMatrix& data, const TreeOptions& options,
                        std::span<const std::uint32_t> sample_ids) {
  require_both_classes(data);
  DecisionTree tree;
  tree.n_features = data.cols;
  tree.options = options;
  const double wp = options.cost.positive_weight();
  const double wn = options.cost.negative_weight();
  if (!(wp > 0.0) || !(wn > 0.0)) throw Error(ErrorKind::InvalidArgument, "class costs must be positive");

  std::vector<std::uint32_t> all;
  if (sample_ids.empty()) {
    all.resize(data.rows());
    std::iota(all.begin(), all.end(), 0u);
  } else {
    all.assign(sample_ids.begin(), sample_ids.end());
  }
  const std::size_t n_sub = options.features_per_split == 0
                                ? data.cols
                                : std::min(options.features_per_split, data.cols);
  Rng rng(options.seed);
  std::vector<std::uint32_t> feature_pool(data.cols);
  std::iota(feature_pool.begin(), feature_pool.end(), 0u);

  auto make_leaf = [&](const std::vector<std::uint32_t>& samples) {
    TreeNode n;
    n.sample_count = static_cast<std::uint32_t>(samples.size());
    for (auto s : samples) n.positive_count += data.labels[s] ? 1u : 0u;
    n.positive_fraction = n.sample_count ? double(n.positive_count) / n.sample_count : 0.0;
    return n;
  };

  std::deque<PendingNode> queue;
  tree.nodes.push_back(make_leaf(all));
  queue.push_back({0, std::move(all)});
  std::size_t splits = 0;
  std::vector<std::pair<float, std::uint8_t>> column;

  while (!queue.empty() && splits < options.max_splits) {
    PendingNode pending = std::move(queue.front());
    queue.pop_front();
    TreeNode& node = tree.nodes[pending.node];
    const auto& samples = pending.samples;
    if (samples.size() < 2 || node.positive_count == 0 || node.positive_count == node.sample_count) {
      continue;
    }

    // Random feature subset (partial Fisher-Yates), scanned in ascending order.
    std::vector<std::uint32_t> features;
    if (n_sub == data.cols) {
      features = feature_pool;
    } else {
      for (std::size_t k = 0; k < n_sub; ++k) {
        const std::size_t j = k + rng.index(data.cols - k);
        std::swap(feature_pool[k], feature_pool[j]);
      }
      features.assign(feature_pool.begin(), feature_pool.begin() + static_cast<std::ptrdiff_t>(n_sub));
      std::sort(features.begin(), features.end());
    }

    const double total_pos = node.positive_count * wp;
    const double total_neg = (node.sample_count - node.positive_count) * wn;
    const double parent = impurity_mass(total_pos, total_neg);
    Split best;
    for (auto f : features) {
      column.clear();
      for (auto s : samples) column.emplace_back(data.values[s * data.cols + f], data.labels[s]);
      std::sort(column.begin(), column.end());
      double lp = 0.0, ln = 0.0;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        if (column[i].second) lp += wp;
        else ln += wn;
        if (column[i].first == column[i + 1].first) continue;
        const double gain =
            parent - impurity_mass(lp, ln) - impurity_mass(total_pos - lp, total_neg - ln);
        if (!best.found || gain > best.gain) {
          best.found = true;
          best.feature = f;
          best.gain = gain;
          const double a = column[i].first, b = column[i + 1].first;
          best.threshold = a + (b - a) / 2.0;
        }
      }
    }
    if (!best.found) continue;

    std::vector<std::uint32_t> left, right;
    for (auto s : samples) {
      (data.values[s * data.cols + best.feature] <= best.threshold ? left : right).push_back(s);
    }
    const auto left_id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.push_back(make_leaf(left));
    tree.nodes.push_back(make_leaf(right));
    TreeNode& parent_node = tree.nodes[pending.node];
    parent_node.feature = static_cast<std::int32_t>(best.feature);
    parent_node.threshold = best.threshold;
    parent_node.left = left_id;
    parent_node.right = left_id + 1;
    ++splits;
    queue.push_back({left_id, std::move(left)});
    queue.push_back({left_id + 1, std::move(right)});
  }
  return tree;
}

double RandomForest::predict(std::span<const float> row) const {
  if (row.size() != n_features) {
    throw Error(ErrorKind::DimensionMismatch, "row has " + std::to_string(row.size()) +
                                                  " values, model expects " +
                                                  std::to_string(n_features));
  }
  double sum = 0.0;
  for (const auto& t : trees) sum += t.predict(row);
  return trees.empty() ? 0.0 : sum / static_cast<double>(trees.size());
}

std::vector<std::uint32_t> bootstrap_sample(const ForestOptions& options, std::size_t tree_index,
                                            std::size_t rows) {
  std::vector<std::uint32_t> ids(rows);
  if (!options.bootstrap) {
    std::iota(ids.begin(), ids.end(), 0u);
    return ids;
  }
  Rng rng(derive_seed(options.seed, 2 * tree_index + 1));
  for (auto& id : ids) id = static_cast<std::uint32_t>(rng.index(rows));
  std::sort(ids.begin(), ids.end());
  return ids;
}

RandomForest train_forest(const FeatureMatrix& data, const ForestOptions& options) {
  require_both_classes(data);
  if (options.n_trees == 0) throw Error(ErrorKind::InvalidArgument, "n_trees must be >= 1");
  RandomForest forest;
  forest.n_features = data.cols;
  forest.options = options;
  if (forest.options.features_per_split == 0) {
    forest.options.features_per_split =
        static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(data.cols))));
  }
  forest.trees.resize(options.n_trees);
  parallel_for(options.n_trees, [&](std::size_t t) {
    TreeOptions to;
    to.max_splits = forest.options.max_splits;
    to.cost = forest.options.cost;
    to.features_per_split = forest.options.features_per_split;
    to.seed = derive_seed(forest.options.seed, 2 * t);
    const auto ids = bootstrap_sample(forest.options, t, data.rows());
    // A bootstrap draw may miss a class entirely; that tree is a single leaf.
    std::size_t pos = 0;
    for (auto id : ids) pos += data.labels[id] ? 1 : 0;
    if (pos == 0 || pos == ids.size()) {
      DecisionTree leaf;
      leaf.n_features = data.cols;
      leaf.options = to;
      TreeNode n;
      n.sample_count = static_cast<std::uint32_t>(ids.size());
      n.positive_count = static_cast<std::uint32_t>(pos);
      n.positive_fraction = double(pos) / double(ids.size());
      leaf.nodes.push_back(n);
      forest.trees[t] = std::move(leaf);
      return;
    }
    forest.trees[t] = train_tree(data, to, ids);
  });
  return forest;
}

double out_of_bag_accuracy(const RandomForest& forest, const FeatureMatrix& data) {
  const std::size_t n = data.rows();
  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> votes(n, 0);
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    std::vector<char> in_bag(n, 0);
    for (auto id : bootstrap_sample(forest.options, t, n)) in_bag[id] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (in_bag[i]) continue;
      sum[i] += forest.trees[t].predict(data.row(i));
      ++votes[i];
    }
  }
  std::size_t evaluated = 0, correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (votes[i] == 0) continue;
    ++evaluated;
    const bool predicted = sum[i] / static_cast<double>(votes[i]) > 0.5;
    if (predicted == (data.labels[i] != 0)) ++correct;
  }
  return evaluated ? double(correct) / double(evaluated) : 0.0;
}

}  // namespace xmatch
