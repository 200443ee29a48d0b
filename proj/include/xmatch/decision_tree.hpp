#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace xmatch {

/// Binary Gini diversity index 2 r+ r- / (r+ + r-)^2.
double gini_index(double r_pos, double r_neg);

/// Misclassification costs indexed [true class][predicted class]; class 1 is
/// "match". Split selection weights each class by the cost of misclassifying it.
struct CostMatrix {
  std::array<std::array<double, 2>, 2> cost{{{0.0, 1.0}, {1.0, 0.0}}};

  static CostMatrix recall_weighted(double false_negative_cost) {
    CostMatrix m;
    m.cost[1][0] = false_negative_cost;
    return m;
  }
  double positive_weight() const { return cost[1][0]; }
  double negative_weight() const { return cost[0][1]; }
};

/// Row-major feature matrix with 0/1 labels; does not own its storage.
struct FeatureMatrix {
  std::span<const float> values;
  std::size_t cols = 0;
  std::span<const std::uint8_t> labels;

  std::size_t rows() const { return labels.size(); }
  std::span<const float> row(std::size_t i) const { return values.subspan(i * cols, cols); }
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // value <= threshold goes left
  std::int32_t left = -1;
  std::int32_t right = -1;
  double positive_fraction = 0.0;
  std::uint32_t sample_count = 0;
  std::uint32_t positive_count = 0;

  bool is_leaf() const { return feature < 0; }
};

struct TreeOptions {
  std::size_t max_splits = 256;
  CostMatrix cost;
  std::size_t features_per_split = 0;  // 0 = all features
  std::uint64_t seed = 1;
};

class DecisionTree {
 public:
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::size_t n_features = 0;
  TreeOptions options;

  /// Positive fraction of the leaf the row lands in. Throws DimensionMismatch.
  double predict(std::span<const float> row) const;
  std::size_t internal_nodes() const;
  std::size_t depth() const;
};

/// CART growth in breadth-first order. Each node takes the (feature,
/// threshold) with the largest cost-weighted Gini decrease; ties go to the
/// lowest feature, then the lowest threshold. Thresholds are midpoints between
/// consecutive distinct values. Growth stops at max_splits internal nodes,
/// pure nodes or nodes with fewer than two samples.
/// `sample_ids` selects (possibly repeated) training rows; empty means all rows.
/// Throws DegenerateData unless both classes are present.
DecisionTree train_tree(const FeatureMatrix& data, const TreeOptions& options,
                        std::span<const std::uint32_t> sample_ids = {});

struct ForestOptions {
  std::size_t n_trees = 100;
  std::size_t max_splits = 1024;
  std::size_t features_per_split = 0;  // 0 = ceil(sqrt(cols))
  CostMatrix cost;
  bool bootstrap = true;
  std::uint64_t seed = 1;
};

class RandomForest {
 public:
  std::vector<DecisionTree> trees;
  std::size_t n_features = 0;
  ForestOptions options;

  /// Mean of per-tree leaf positive fractions.
  double predict(std::span<const float> row) const;
};

RandomForest train_forest(const FeatureMatrix& data, const ForestOptions& options);

/// Bootstrap rows drawn for tree `tree_index` (reproducible from the options).
std::vector<std::uint32_t> bootstrap_sample(const ForestOptions& options, std::size_t tree_index,
                                            std::size_t rows);

/// Accuracy at the 0.5 threshold using only trees whose bootstrap excluded
/// each row. Rows that were in-bag for every tree are skipped.
double out_of_bag_accuracy(const RandomForest& forest, const FeatureMatrix& data);

}  // namespace xmatch
