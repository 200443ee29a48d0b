#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "xmatch/pointcloud.hpp"
#include "xmatch/spatial_index.hpp"

namespace xmatch {

inline constexpr std::size_t kRadialBins3D = 4;
inline constexpr std::size_t kOrientationBins3D = 8;
inline constexpr std::size_t kDescriptor3DSize = kRadialBins3D * kOrientationBins3D;

struct Keypoint3D {
  std::uint32_t point_id = 0;  // index of the cloud point the keypoint sits on
  Vec3 position = Vec3::Zero();
  double scale = 0.0;     // support radius, scene units
  double response = 0.0;  // surface variation at that scale
};

struct Detector3DConfig {
  // Neighborhood radii; empty selects {2, 4, 8} x median point spacing.
  std::vector<double> scales;
  double response_threshold = 0.01;
  std::size_t min_neighbors = 5;
};

struct Descriptor3DConfig {
  // Support radius = support_factor * keypoint scale.
  double support_factor = 2.0;
  // Per-point gradient fit radius = gradient_factor * keypoint scale.
  double gradient_factor = 0.75;
};

/// Keypoints plus a flat row-major descriptor matrix (count x dims).
struct FeatureSet3D {
  std::uint32_t dims = kDescriptor3DSize;
  std::vector<Keypoint3D> keypoints;
  std::vector<float> descriptors;

  std::size_t size() const { return keypoints.size(); }
  std::span<const float> descriptor(std::size_t i) const {
    return {descriptors.data() + i * dims, dims};
  }
};

/// Median distance from each point to its nearest other point.
double median_point_spacing(const SpatialIndex& index);

/// Surface variation lambda_min / (l1 + l2 + l3) of the radius neighborhood,
/// in [0, 1/3]. Throws InsufficientNeighborhood below min_neighbors points.
double principal_curvature(const PointCloud& cloud, const SpatialIndex& index,
                           std::size_t point_id, double radius, std::size_t min_neighbors = 5);

/// Curvature extrema over each scale's neighborhood, merged across scales
/// (highest response per point wins) and sorted by response descending, then
/// position lexicographically.
std::vector<Keypoint3D> detect_keypoints_3d(const PointCloud& cloud, const SpatialIndex& index,
                                            const Detector3DConfig& cfg);
std::vector<Keypoint3D> detect_keypoints_3d(const PointCloud& cloud, const Detector3DConfig& cfg);

/// Rotation-invariant 4 radial x 8 orientation histogram of intensity
/// gradients. Orientation is the unsigned angle between a point's tangent
/// gradient and its radial direction from the keypoint. All-zero when the
/// support carries no gradient.
std::vector<float> compute_descriptor_3d(const PointCloud& cloud, const SpatialIndex& index,
                                         const Keypoint3D& kp, const Descriptor3DConfig& cfg);

/// Detection plus description. Keypoints whose support is too sparse are dropped.
FeatureSet3D extract_features_3d(const PointCloud& cloud, const Detector3DConfig& det,
                                 const Descriptor3DConfig& desc);

bool is_zero_descriptor(std::span<const float> d);

}  // namespace xmatch
