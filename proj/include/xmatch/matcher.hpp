#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "xmatch/dataset.hpp"
#include "xmatch/decision_tree.hpp"

namespace xmatch {

/// Coarse single-tree prefilter followed by a fine random forest, both over
/// rows [3D descriptor (p) | 2D descriptor (q)].
struct MatcherModel {
  std::uint32_t p = 0;
  std::uint32_t q = 0;
  DecisionTree coarse;
  RandomForest fine;
  nlohmann::json metadata = nlohmann::json::object();
};

struct TableEntry {
  std::uint32_t id2d = 0;
  std::uint32_t id3d = 0;
  double confidence = 0.0;
};

/// Sparse confidence table: only pairs the coarse stage passed.
struct ConfidenceTable {
  std::size_t n2d = 0;
  std::size_t n3d = 0;
  std::vector<TableEntry> entries;  // ordered by (id2d, id3d)
  std::size_t coarse_evaluations = 0;
  std::size_t fine_evaluations = 0;
};

inline constexpr double kMatchThreshold = 0.5;

/// Coarse on every 2D x 3D pair; fine only where coarse confidence > 0.5.
ConfidenceTable cascade_match(const MatcherModel& model,
                              const std::vector<std::span<const float>>& descs2d,
                              const std::vector<std::span<const float>>& descs3d);

/// Mutual row/column argmax (ties to the lowest id) with confidence > 0.5.
std::vector<TableEntry> two_way_match(const ConfidenceTable& table);

struct GridConfig {
  std::vector<std::size_t> coarse_max_splits{64, 256, 1024};
  std::vector<double> coarse_cost_ratios{1.0, 2.0, 5.0};
  std::vector<std::size_t> fine_n_trees{50, 100, 200};
  std::vector<std::size_t> fine_max_splits{256, 1024, 4096};
  std::size_t fine_features_per_split = 0;  // 0 = ceil(sqrt(p + q))
  double validation_fraction = 0.2;
  double min_negative_rejection = 0.5;
};

struct ValidationScore {
  double precision = 0.0;
  double recall = 0.0;
  double negative_rejection = 0.0;
};

ValidationScore score_predictions(std::span<const double> confidences,
                                  std::span<const std::uint8_t> labels);

/// Seeded stratified train/validation split; returns (train ids, validation ids).
std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>> stratified_split(
    std::span<const std::uint8_t> labels, double validation_fraction, std::uint64_t seed);

/// Picks the coarse setting with the best validation recall among those
/// rejecting at least min_negative_rejection of negatives (falling back to the
/// best rejection if none qualifies), and the fine setting with the best
/// validation precision (ties: recall, then grid order). Both stages are then
/// retrained on the full dataset. The metadata records every grid point.
MatcherModel grid_search(const CorrespondenceDataset& dataset, const GridConfig& grid,
                         std::uint64_t seed);

void validate(const GridConfig& grid);

inline constexpr char kModelMagic[] = "CDM1";

// CDM1: magic, p u32, q u32; coarse tree then forest as pre-order node lists;
// JSON trailer with the grid-search record.
void save_model(const std::string& path, const MatcherModel& model);
MatcherModel load_model(const std::string& path);

}  // namespace xmatch
