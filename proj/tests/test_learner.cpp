#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"
#include "xmatch/decision_tree.hpp"
#include "xmatch/error.hpp"
#include "xmatch/parallel.hpp"

using namespace xmatch;

namespace {

struct Data {
  std::vector<float> values;
  std::vector<std::uint8_t> labels;
  std::size_t cols = 1;
  FeatureMatrix matrix() const { return {values, cols, labels}; }
};

// Small-integer features so duplicate values and tied gains are common.
Data random_set(Rng& rng, std::size_t cols) {
  Data d;
  d.cols = cols;
  const std::size_t n = 4 + rng.index(40);
  for (std::size_t i = 0; i < n; ++i) {
    double score = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const float v = static_cast<float>(rng.index(12)) * 0.5f;
      d.values.push_back(v);
      score += (c + 1) * v;
    }
    d.labels.push_back(score + rng.uniform(-3, 3) > 3.0 * cols ? 1 : 0);
  }
  d.labels[0] = 1;
  d.labels[1] = 0;
  return d;
}

Data blobs(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  Data d;
  d.cols = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    const double c = pos ? 2.0 : -2.0;
    d.values.push_back(static_cast<float>(c + rng.normal()));
    d.values.push_back(static_cast<float>(c + rng.normal()));
    d.labels.push_back(pos);
  }
  return d;
}

}  // namespace

TEST_CASE("gini index examples and exact arithmetic") {
  CHECK(gini_index(0, 5) == 0.0);
  CHECK(gini_index(5, 5) == 0.5);
  CHECK(gini_index(3, 1) == 0.375);
  for (int p = 0; p <= 100; ++p) {
    for (int n = 0; p + n <= 100; ++n) {
      if (p + n == 0) continue;
      const double expected = 2.0 * p * n / (double(p + n) * double(p + n));
      CHECK(gini_index(p, n) == expected);
      CHECK(gini_index(p, n) == gini_index(n, p));
      CHECK((gini_index(p, n) == 0.0) == (p == 0 || n == 0));
      CHECK(gini_index(p, n) <= gini_index((p + n) / 2.0, (p + n) / 2.0));
    }
  }
}

TEST_CASE("train_tree: 1-D separable example") {
  Data d{{0, 1, 2, 3}, {0, 0, 1, 1}, 1};
  const auto t = train_tree(d.matrix(), {});
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.nodes[0].threshold > 1.0);
  CHECK(t.nodes[0].threshold < 2.0);
  CHECK(t.nodes[1].positive_fraction == 0.0);
  CHECK(t.nodes[2].positive_fraction == 1.0);
}

TEST_CASE("train_tree: XOR with three splits") {
  const Data d{{0, 0, 0, 1, 1, 0, 1, 1}, {0, 1, 1, 0}, 2};
  TreeOptions opts;
  opts.max_splits = 3;
  const auto t = train_tree(d.matrix(), opts);
  CHECK(t.internal_nodes() == 3);
  for (std::size_t i = 0; i < d.labels.size(); ++i) CHECK((t.predict(d.matrix().row(i)) > 0.5) == (d.labels[i] == 1));
}

TEST_CASE("train_tree: degenerate inputs") {
  Data all_pos{{0, 1, 2}, {1, 1, 1}, 1};
  try {
    train_tree(all_pos.matrix(), {});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateData);
  }
  Data ok{{0, 1}, {0, 1}, 1};
  const auto t = train_tree(ok.matrix(), {});
  const std::vector<float> wrong(3, 0.0f);
  CHECK_THROWS_AS(t.predict(wrong), Error);
}

TEST_CASE("train_tree reproduces the exhaustive split oracle") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = random_set(rng, 1 + trial % 2);
    const std::size_t max_splits = 1 + rng.index(6);
    const double wp = trial % 3 == 0 ? 2.5 : 1.0;
    TreeOptions opts;
    opts.max_splits = max_splits;
    opts.cost = CostMatrix::recall_weighted(wp);
    const auto t = train_tree(d.matrix(), opts);
    CHECK(oracle::same_tree(t, oracle::grow_tree(d.matrix(), max_splits, wp, 1.0)));

    std::uint32_t leaf_total = 0;
    for (const auto& n : t.nodes) {
      if (!n.is_leaf()) continue;
      leaf_total += n.sample_count;
      CHECK(n.positive_fraction >= 0.0);
      CHECK(n.positive_fraction <= 1.0);
    }
    CHECK(leaf_total == d.labels.size());
  }
}

TEST_CASE("predict: leaf fractions") {
  DecisionTree t;
  t.n_features = 2;
  TreeNode leaf;
  leaf.positive_fraction = 0.75;
  leaf.sample_count = 4;
  leaf.positive_count = 3;
  t.nodes.push_back(leaf);
  const std::vector<float> row{0.0f, 1.0f};
  CHECK(t.predict(row) == 0.75);

  RandomForest f;
  f.n_features = 2;
  leaf.positive_fraction = 1.0;
  t.nodes[0] = leaf;
  f.trees.assign(5, t);
  CHECK(f.predict(row) == 1.0);
}

TEST_CASE("forest: OOB accuracy on separable blobs") {
  const auto d = blobs(5, 200);
  ForestOptions opts;
  opts.n_trees = 50;
  opts.seed = 9;
  const auto f = train_forest(d.matrix(), opts);
  CHECK(out_of_bag_accuracy(f, d.matrix()) >= 0.95);

  const auto g = train_forest(d.matrix(), opts);
  for (std::size_t i = 0; i < d.labels.size(); ++i) CHECK(f.predict(d.matrix().row(i)) == g.predict(d.matrix().row(i)));

  RandomForest reversed = f;
  std::reverse(reversed.trees.begin(), reversed.trees.end());
  for (std::size_t i = 0; i < d.labels.size(); ++i)
    CHECK(reversed.predict(d.matrix().row(i)) == doctest::Approx(f.predict(d.matrix().row(i))).epsilon(1e-12));
}

TEST_CASE("forest: single tree without bootstrap equals train_tree") {
  Rng rng(4);
  const auto d = random_set(rng, 3);
  ForestOptions fo;
  fo.n_trees = 1;
  fo.bootstrap = false;
  fo.features_per_split = 3;
  fo.max_splits = 20;
  const auto f = train_forest(d.matrix(), fo);
  TreeOptions to;
  to.max_splits = 20;
  const auto t = train_tree(d.matrix(), to);
  for (std::size_t i = 0; i < d.labels.size(); ++i) CHECK(f.predict(d.matrix().row(i)) == t.predict(d.matrix().row(i)));
}

TEST_CASE("forest results do not depend on the worker count") {
  const auto d = blobs(8, 120);
  ForestOptions opts;
  opts.n_trees = 16;
  set_thread_count(1);
  const auto a = train_forest(d.matrix(), opts);
  set_thread_count(4);
  const auto b = train_forest(d.matrix(), opts);
  set_thread_count(0);
  for (std::size_t i = 0; i < d.labels.size(); ++i) CHECK(a.predict(d.matrix().row(i)) == b.predict(d.matrix().row(i)));
}
