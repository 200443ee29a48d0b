#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "xmatch/geometry.hpp"
#include "xmatch/image.hpp"
#include "xmatch/keypoints3d.hpp"
#include "xmatch/pointcloud.hpp"
#include "xmatch/sift.hpp"

namespace xmatch {

/// Nearest projected cloud depth per pixel; +inf where nothing lands.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depth;

  double at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
};

inline constexpr double kEmptyDepth = std::numeric_limits<double>::infinity();

struct ProjectedKeypoint {
  std::uint32_t keypoint_id = 0;
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};
using ProjectedKeypointSet = std::vector<ProjectedKeypoint>;

/// Identifies one 2D-3D pairing inside a training set.
struct PairId {
  std::uint32_t kp3d = 0;
  std::uint32_t kp2d = 0;
  std::uint32_t image_id = 0;

  friend bool operator==(const PairId&, const PairId&) = default;
  friend auto operator<=>(const PairId&, const PairId&) = default;
};

struct CorrespondencePair {
  PairId id;
  double pixel_distance = 0.0;
};

/// Projects every cloud point, keeps in-frustum ones, floors to pixels and
/// stores the minimum depth per pixel.
DepthMap build_depth_map(const PointCloud& cloud, const CameraView& view);

/// Keypoints passing in_frustum, keyed by their index in `positions`.
ProjectedKeypointSet project_keypoints(std::span<const Vec3> positions, const CameraView& view);

/// Keeps a keypoint iff its depth <= (minimum finite depth in the tau x tau
/// block around its floored pixel) + depth_slack. All-empty blocks drop it.
ProjectedKeypointSet depth_block_filter(const ProjectedKeypointSet& projected, const DepthMap& dmap,
                                        int tau, double depth_slack);

/// Pairs with pixel distance < alpha, resolved one-to-one greedily by
/// ascending distance (ties by 3D id, then 2D id). Output is in that order.
std::vector<CorrespondencePair> match_keypoints(const ProjectedKeypointSet& filtered,
                                                std::span<const Vec2> keys2d, double alpha,
                                                std::uint32_t image_id = 0);

/// Uniformly draws (3D keypoint, positive's 2D keypoint) pairs whose 3D
/// position is >= beta from the 2D keypoint's true match and whose 3D
/// descriptor is >= gamma (L2) from the true match's descriptor. Throws
/// PoolExhausted when `count` distinct pairs are not found within 100*count draws.
std::vector<PairId> sample_negatives(std::span<const CorrespondencePair> positives,
                                     const FeatureSet3D& features3d, std::size_t count, double beta,
                                     double gamma, std::uint64_t seed);

/// Labeled rows of [3D descriptor (p) | 2D descriptor (q)], positives first.
struct CorrespondenceDataset {
  std::uint32_t p = kDescriptor3DSize;
  std::uint32_t q = kDescriptor2DSize;
  std::vector<float> features;
  std::vector<std::uint8_t> labels;
  std::vector<PairId> provenance;

  std::size_t rows() const { return labels.size(); }
  std::size_t dims() const { return p + q; }
  std::size_t n_pos() const;
  std::size_t n_neg() const { return rows() - n_pos(); }
  std::span<const float> row(std::size_t i) const { return {features.data() + i * dims(), dims()}; }
  void append(std::span<const float> desc3d, std::span<const float> desc2d, bool positive,
              const PairId& id);
};

struct DatasetConfig {
  double alpha = 5.0;
  double beta = 0.5;
  double gamma = 0.3;
  int tau = 5;
  double depth_slack = 0.3;
  double negative_ratio = 5.0;
  std::uint64_t seed = 7;
};

struct PosedFeatures {
  CameraView view;
  FeatureSet2D features;
};

struct DatasetDiagnostics {
  std::vector<std::size_t> projected_per_image;
  std::vector<std::size_t> kept_per_image;
  std::vector<std::size_t> positives_per_image;
};

/// Per image: project -> depth block filter -> match; concatenates positives
/// in image order, then appends sampled negatives. Zero-sentinel descriptors
/// never enter the dataset. Throws EmptyDataset when no positives exist.
CorrespondenceDataset assemble_dataset(const PointCloud& cloud, const FeatureSet3D& features3d,
                                       std::span<const PosedFeatures> images,
                                       const DatasetConfig& cfg,
                                       DatasetDiagnostics* diagnostics = nullptr);

void validate(const DatasetConfig& cfg);

inline constexpr char kDatasetMagic[] = "CDS1";

// CDS1: magic, p, q, n_pos, n_neg (u32); rows of desc3d f32 x p, desc2d f32 x q,
// label u8, kp3d_id u32, kp2d_id u32, image_id u32; optional JSON trailer.
void save_dataset(const std::string& path, const CorrespondenceDataset& ds,
                  const std::string& provenance_json = {});
CorrespondenceDataset load_dataset(const std::string& path);

}  // namespace xmatch
