#include "xmatch/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "xmatch/binary_io.hpp"
#include "xmatch/error.hpp"
#include "xmatch/parallel.hpp"
#include "xmatch/rng.hpp"

namespace xmatch {

ConfidenceTable cascade_match(const MatcherModel& model,
                              const std::vector<std::span<const float>>& descs2d,
                              const std::vector<std::span<const float>>& descs3d) {
  ConfidenceTable table;
  table.n2d = descs2d.size();
  table.n3d = descs3d.size();
  const std::size_t dims = std::size_t{model.p} + model.q;
  for (const auto& d : descs3d)
    if (d.size() != model.p) throw Error(ErrorKind::DimensionMismatch, "3D descriptor size != p");
  for (const auto& d : descs2d)
    if (d.size() != model.q) throw Error(ErrorKind::DimensionMismatch, "2D descriptor size != q");

  std::vector<std::vector<TableEntry>> rows(descs2d.size());
  std::vector<std::size_t> fine_calls(descs2d.size(), 0);
  parallel_for(descs2d.size(), [&](std::size_t i) {
    std::vector<float> row(dims);
    std::copy(descs2d[i].begin(), descs2d[i].end(), row.begin() + model.p);
    for (std::size_t j = 0; j < descs3d.size(); ++j) {
      std::copy(descs3d[j].begin(), descs3d[j].end(), row.begin());
      if (model.coarse.predict(row) <= kMatchThreshold) continue;
      ++fine_calls[i];
      rows[i].push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                         model.fine.predict(row)});
    }
  });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    table.entries.insert(table.entries.end(), rows[i].begin(), rows[i].end());
    table.fine_evaluations += fine_calls[i];
  }
  table.coarse_evaluations = descs2d.size() * descs3d.size();
  return table;
}

std::vector<TableEntry> two_way_match(const ConfidenceTable& table) {
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> row_best(table.n2d, kNone), col_best(table.n3d, kNone);
  auto better = [&](std::size_t cand, std::size_t cur, bool by_row) {
    if (cur == kNone) return true;
    const auto& a = table.entries[cand];
    const auto& b = table.entries[cur];
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return by_row ? a.id3d < b.id3d : a.id2d < b.id2d;
  };
  for (std::size_t k = 0; k < table.entries.size(); ++k) {
    const auto& e = table.entries[k];
    if (e.id2d >= table.n2d || e.id3d >= table.n3d) {
      throw Error(ErrorKind::DimensionMismatch, "table entry outside declared size");
    }
    if (better(k, row_best[e.id2d], true)) row_best[e.id2d] = k;
    if (better(k, col_best[e.id3d], false)) col_best[e.id3d] = k;
  }
  std::vector<TableEntry> out;
  for (std::size_t i = 0; i < table.n2d; ++i) {
    const std::size_t k = row_best[i];
    if (k == kNone) continue;
    const auto& e = table.entries[k];
    if (col_best[e.id3d] == k && e.confidence > kMatchThreshold) out.push_back(e);
  }
  return out;
}

ValidationScore score_predictions(std::span<const double> confidences,
                                  std::span<const std::uint8_t> labels) {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = confidences[i] > kMatchThreshold;
    if (labels[i]) (pred ? tp : fn)++;
    else (pred ? fp : tn)++;
  }
  ValidationScore s;
  s.precision = tp + fp ? double(tp) / double(tp + fp) : 0.0;
  s.recall = tp + fn ? double(tp) / double(tp + fn) : 0.0;
  s.negative_rejection = tn + fp ? double(tn) / double(tn + fp) : 0.0;
  return s;
}

std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> stratified_split(
    std::span<const std::uint8_t> labels, double validation_fraction, std::uint64_t seed) {
  std::vector<std::uint32_t> train, val;
  Rng rng(seed);
  for (std::uint8_t cls : {std::uint8_t{1}, std::uint8_t{0}}) {
    std::vector<std::uint32_t> ids;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) ids.push_back(static_cast<std::uint32_t>(i));
    for (std::size_t k = ids.size(); k > 1; --k) std::swap(ids[k - 1], ids[rng.index(k)]);
    const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * ids.size()));
    val.insert(val.end(), ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {train, val};
}

void validate(const GridConfig& grid) {
  if (grid.coarse_max_splits.empty() || grid.coarse_cost_ratios.empty() ||
      grid.fine_n_trees.empty() || grid.fine_max_splits.empty()) {
    throw Error(ErrorKind::InvalidArgument, "every grid axis needs at least one value");
  }
  for (double c : grid.coarse_cost_ratios)
    if (!(c > 0.0)) throw Error(ErrorKind::InvalidArgument, "cost ratios must be positive");
  for (auto n : grid.fine_n_trees)
    if (n == 0) throw Error(ErrorKind::InvalidArgument, "n_trees must be >= 1");
  if (!(grid.validation_fraction > 0.0 && grid.validation_fraction < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "validation_fraction must be in (0, 1)");
  }
}

namespace {

struct Subset {
  std::vector<float> values;
  std::vector<std::uint8_t> labels;
  std::size_t cols = 0;
  FeatureMatrix matrix() const { return {values, cols, labels}; }
};

Subset take_rows(const CorrespondenceDataset& ds, std::span<const std::uint32_t> ids) {
  Subset s;
  s.cols = ds.dims();
  s.values.reserve(ids.size() * s.cols);
  for (auto id : ids) {
    const auto r = ds.row(id);
    s.values.insert(s.values.end(), r.begin(), r.end());
    s.labels.push_back(ds.labels[id]);
  }
  return s;
}

nlohmann::json score_json(const ValidationScore& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"negative_rejection", s.negative_rejection}};
}

}  // namespace

MatcherModel grid_search(const CorrespondenceDataset& dataset, const GridConfig& grid,
                         std::uint64_t seed) {
  validate(grid);
  const FeatureMatrix full{dataset.features, dataset.dims(), dataset.labels};
  if (dataset.n_pos() == 0 || dataset.n_neg() == 0) {
    throw Error(ErrorKind::DegenerateData, "dataset needs both positive and negative rows");
  }
  const auto [train_ids, val_ids] = stratified_split(dataset.labels, grid.validation_fraction, seed);
  const Subset train = take_rows(dataset, train_ids);
  const Subset val = take_rows(dataset, val_ids);
  const FeatureMatrix train_m = train.matrix();
  const FeatureMatrix val_m = val.matrix();

  nlohmann::json record;
  record["seed"] = seed;
  record["n_train"] = train_ids.size();
  record["n_validation"] = val_ids.size();
  record["min_negative_rejection"] = grid.min_negative_rejection;

  // Coarse stage.
  struct CoarseResult {
    std::size_t max_splits;
    double cost_ratio;
    ValidationScore score;
  };
  std::vector<CoarseResult> coarse_results;
  for (auto ms : grid.coarse_max_splits) {
    for (double cr : grid.coarse_cost_ratios) {
      TreeOptions to;
      to.max_splits = ms;
      to.cost = CostMatrix::recall_weighted(cr);
      to.seed = seed;
      const DecisionTree tree = train_tree(train_m, to);
      std::vector<double> conf(val_m.rows());
      for (std::size_t i = 0; i < val_m.rows(); ++i) conf[i] = tree.predict(val_m.row(i));
      coarse_results.push_back({ms, cr, score_predictions(conf, val.labels)});
    }
  }
  std::size_t coarse_pick = 0;
  bool any_qualified = false;
  for (std::size_t k = 0; k < coarse_results.size(); ++k) {
    const auto& s = coarse_results[k].score;
    const bool ok = s.negative_rejection >= grid.min_negative_rejection;
    if (!ok) continue;
    const auto& b = coarse_results[coarse_pick].score;
    if (!any_qualified || s.recall > b.recall ||
        (s.recall == b.recall && s.negative_rejection > b.negative_rejection)) {
      coarse_pick = k;
    }
    any_qualified = true;
  }
  if (!any_qualified) {
    for (std::size_t k = 1; k < coarse_results.size(); ++k)
      if (coarse_results[k].score.negative_rejection >
          coarse_results[coarse_pick].score.negative_rejection)
        coarse_pick = k;
  }
  for (std::size_t k = 0; k < coarse_results.size(); ++k) {
    const auto& c = coarse_results[k];
    record["coarse"].push_back({{"max_splits", c.max_splits},
                                {"cost_ratio", c.cost_ratio},
                                {"validation", score_json(c.score)},
                                {"selected", k == coarse_pick}});
  }

  // Fine stage. Tree t of a forest depends only on (seed, t), so smaller
  // n_trees settings are prefixes of the largest forest.
  struct FineResult {
    std::size_t n_trees;
    std::size_t max_splits;
    ValidationScore score;
  };
  std::vector<FineResult> fine_results;
  const std::size_t max_trees = *std::max_element(grid.fine_n_trees.begin(), grid.fine_n_trees.end());
  for (auto ms : grid.fine_max_splits) {
    ForestOptions fo;
    fo.n_trees = max_trees;
    fo.max_splits = ms;
    fo.features_per_split = grid.fine_features_per_split;
    fo.seed = seed;
    const RandomForest forest = train_forest(train_m, fo);
    std::vector<std::vector<double>> per_tree(val_m.rows(), std::vector<double>(max_trees));
    parallel_for(val_m.rows(), [&](std::size_t i) {
      for (std::size_t t = 0; t < max_trees; ++t) per_tree[i][t] = forest.trees[t].predict(val_m.row(i));
    });
    for (auto nt : grid.fine_n_trees) {
      std::vector<double> conf(val_m.rows());
      for (std::size_t i = 0; i < val_m.rows(); ++i) {
        double s = 0.0;
        for (std::size_t t = 0; t < nt; ++t) s += per_tree[i][t];
        conf[i] = s / static_cast<double>(nt);
      }
      fine_results.push_back({nt, ms, score_predictions(conf, val.labels)});
    }
  }
  std::size_t fine_pick = 0;
  for (std::size_t k = 1; k < fine_results.size(); ++k) {
    const auto& s = fine_results[k].score;
    const auto& b = fine_results[fine_pick].score;
    if (s.precision > b.precision || (s.precision == b.precision && s.recall > b.recall)) fine_pick = k;
  }
  for (std::size_t k = 0; k < fine_results.size(); ++k) {
    const auto& f = fine_results[k];
    record["fine"].push_back({{"n_trees", f.n_trees},
                              {"max_splits", f.max_splits},
                              {"validation", score_json(f.score)},
                              {"selected", k == fine_pick}});
  }

  MatcherModel model;
  model.p = dataset.p;
  model.q = dataset.q;
  TreeOptions coarse_opts;
  coarse_opts.max_splits = coarse_results[coarse_pick].max_splits;
  coarse_opts.cost = CostMatrix::recall_weighted(coarse_results[coarse_pick].cost_ratio);
  coarse_opts.seed = seed;
  model.coarse = train_tree(full, coarse_opts);
  ForestOptions fine_opts;
  fine_opts.n_trees = fine_results[fine_pick].n_trees;
  fine_opts.max_splits = fine_results[fine_pick].max_splits;
  fine_opts.features_per_split = grid.fine_features_per_split;
  fine_opts.seed = seed;
  model.fine = train_forest(full, fine_opts);
  model.metadata["grid_search"] = record;
  return model;
}

namespace {

void write_tree(ByteWriter& w, const DecisionTree& tree) {
  w.u32(static_cast<std::uint32_t>(tree.n_features));
  w.u32(static_cast<std::uint32_t>(tree.options.max_splits));
  for (const auto& row : tree.options.cost.cost)
    for (double c : row) w.f64(c);
  w.u32(static_cast<std::uint32_t>(tree.options.features_per_split));
  w.u64(tree.options.seed);
  w.u32(static_cast<std::uint32_t>(tree.nodes.size()));
  std::function<void(std::int32_t)> visit = [&](std::int32_t id) {
    const TreeNode& n = tree.nodes[id];
    w.u8(n.is_leaf() ? 1 : 0);
    if (n.is_leaf()) {
      w.f64(n.positive_fraction);
      w.u32(n.sample_count);
      w.u32(n.positive_count);
      return;
    }
    w.u32(static_cast<std::uint32_t>(n.feature));
    w.f64(n.threshold);
    visit(n.left);
    visit(n.right);
  };
  visit(0);
}

DecisionTree read_tree(ByteReader& r) {
  DecisionTree tree;
  tree.n_features = r.u32();
  tree.options.max_splits = r.u32();
  for (auto& row : tree.options.cost.cost)
    for (double& c : row) c = r.f64();
  tree.options.features_per_split = r.u32();
  tree.options.seed = r.u64();
  const std::uint32_t count = r.u32();
  if (count == 0) throw Error(ErrorKind::ParseError, "empty tree");
  tree.nodes.reserve(count);
  std::function<std::int32_t()> read_node = [&]() -> std::int32_t {
    if (tree.nodes.size() >= count) throw Error(ErrorKind::ParseError, "tree node count mismatch");
    const auto id = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    TreeNode n;
    if (r.u8()) {
      n.positive_fraction = r.f64();
      n.sample_count = r.u32();
      n.positive_count = r.u32();
    } else {
      n.feature = static_cast<std::int32_t>(r.u32());
      if (static_cast<std::size_t>(n.feature) >= tree.n_features) {
        throw Error(ErrorKind::ParseError, "split feature out of range");
      }
      n.threshold = r.f64();
      n.left = read_node();
      n.right = read_node();
    }
    tree.nodes[id] = n;
    return id;
  };
  read_node();
  if (tree.nodes.size() != count) throw Error(ErrorKind::ParseError, "tree node count mismatch");
  return tree;
}

}  // namespace

void save_model(const std::string& path, const MatcherModel& model) {
  ByteWriter w;
  w.magic(kModelMagic);
  w.u32(model.p);
  w.u32(model.q);
  write_tree(w, model.coarse);
  const auto& fo = model.fine.options;
  w.u32(static_cast<std::uint32_t>(model.fine.trees.size()));
  w.u32(static_cast<std::uint32_t>(model.fine.n_features));
  w.u32(static_cast<std::uint32_t>(fo.max_splits));
  w.u32(static_cast<std::uint32_t>(fo.features_per_split));
  w.u8(fo.bootstrap ? 1 : 0);
  w.u64(fo.seed);
  for (const auto& row : fo.cost.cost)
    for (double c : row) w.f64(c);
  for (const auto& t : model.fine.trees) write_tree(w, t);
  w.trailer(model.metadata.dump());
  w.write_file(path);
}

MatcherModel load_model(const std::string& path) {
  auto r = ByteReader::from_file(path);
  r.expect_magic(kModelMagic);
  MatcherModel model;
  model.p = r.u32();
  model.q = r.u32();
  model.coarse = read_tree(r);
  const std::uint32_t n_trees = r.u32();
  model.fine.n_features = r.u32();
  auto& fo = model.fine.options;
  fo.n_trees = n_trees;
  fo.max_splits = r.u32();
  fo.features_per_split = r.u32();
  fo.bootstrap = r.u8() != 0;
  fo.seed = r.u64();
  for (auto& row : fo.cost.cost)
    for (double& c : row) c = r.f64();
  for (std::uint32_t t = 0; t < n_trees; ++t) model.fine.trees.push_back(read_tree(r));
  const std::string meta = r.trailer();
  if (!meta.empty()) {
    try {
      model.metadata = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseError, path + ": model trailer: " + e.what());
    }
  }
  if (!r.at_end()) throw Error(ErrorKind::ParseError, path + ": trailing bytes");
  const std::size_t dims = std::size_t{model.p} + model.q;
  if (model.coarse.n_features != dims || model.fine.n_features != dims) {
    throw Error(ErrorKind::ParseError, path + ": stage dimensions disagree with header");
  }
  return model;
}

}  // namespace xmatch
