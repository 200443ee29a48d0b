#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "xmatch/error.hpp"
#include "xmatch/geometry.hpp"
#include "xmatch/keypoints3d.hpp"
#include "xmatch/matcher.hpp"
#include "xmatch/sift.hpp"

namespace xmatch {

struct Correspondence {
  Vec3 world = Vec3::Zero();
  Vec2 pixel = Vec2::Zero();
  double confidence = 1.0;
};

struct PoseEstimate {
  Pose pose;
  std::vector<std::uint32_t> inlier_ids;
  double mean_reprojection_error = 0.0;
  std::size_t iterations_used = 0;
  double cost = 0.0;
};

/// Reprojection error in pixels; +inf when the point is not in front of the camera.
double reprojection_error(const Pose& pose, const Intrinsics& k, const Correspondence& c);

/// Minimal three-point solver. Returns every real solution that reprojects
/// all three points within 1e-6 px.
/// Throws DegenerateConfiguration for (near) collinear points and
/// NoRealSolution when nothing survives.
std::vector<Pose> p3p_solve(const Correspondence& c1, const Correspondence& c2,
                            const Correspondence& c3, const Intrinsics& k);

struct MlesacConfig {
  std::size_t iterations = 2000;
  double inlier_threshold_px = 4.0;
  double sigma_px = 1.0;
  std::uint64_t seed = 0;
  // Image size for the uniform outlier density. 0 falls back to the pixel bounding box.
  int image_width = 0;
  int image_height = 0;
  double min_pixel_separation = 5.0;
  double min_triangle_area = 1e-9;
};

struct MlesacAudit {
  std::vector<double> hypothesis_costs;  // +inf for degenerate samples
  std::size_t best_iteration = 0;
};

/// Mixture negative log-likelihood of a pose over all correspondences.
double mlesac_cost(const Pose& pose, std::span<const Correspondence> corr, const Intrinsics& k,
                   double sigma_px, double outlier_density);

PoseEstimate mlesac(std::span<const Correspondence> corr, const Intrinsics& k,
                    const MlesacConfig& cfg, MlesacAudit* audit = nullptr);

struct RefineConfig {
  std::size_t max_iterations = 100;
  double step_tolerance = 1e-10;
  std::size_t max_escalations = 10;
  double initial_damping = 1e-3;
};

struct RefineTrace {
  std::vector<double> costs;  // accepted costs, starting with the initial one
  std::vector<double> orthonormality_errors;
};

// Stacked residuals (u, v per id) and their 2n x 6 Jacobian w.r.t. a left
// axis-angle increment (first 3 columns) and the translation.
Eigen::VectorXd reprojection_residuals(const Pose& pose, std::span<const Correspondence> corr,
                                       std::span<const std::uint32_t> ids, const Intrinsics& k);
Eigen::MatrixXd reprojection_jacobian(const Pose& pose, std::span<const Correspondence> corr,
                                      std::span<const std::uint32_t> ids, const Intrinsics& k);
// Applies the increment (omega, dt): R <- exp(omega) R, T <- T + dt.
Pose apply_increment(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta);

/// Levenberg-Marquardt over initial.inlier_ids. Throws RefinementDiverged when
/// damping escalates max_escalations times in a row without any accepted step.
PoseEstimate refine_pose(const PoseEstimate& initial, std::span<const Correspondence> corr,
                         const Intrinsics& k, const RefineConfig& cfg = {},
                         RefineTrace* trace = nullptr);

struct LocalizeConfig {
  MlesacConfig mlesac;
  RefineConfig refine;
  std::size_t min_inliers = 6;
};

void validate(const LocalizeConfig& cfg);

struct Localization {
  PoseEstimate estimate;
  std::size_t n_matches = 0;
  std::size_t n_inliers = 0;
  std::size_t coarse_evaluations = 0;
  std::size_t fine_evaluations = 0;
};

/// cascade_match -> two_way_match -> mlesac -> refine_pose.
/// Throws LocalizationFailed carrying the failing stage's error kind.
Localization localize(const FeatureSet2D& image_features, const FeatureSet3D& cloud_features,
                      const MatcherModel& model, const Intrinsics& k, const LocalizeConfig& cfg);

struct LocalizationRecord {
  int image_id = 0;
  bool success = false;
  Pose pose;
  std::size_t n_matches = 0;
  std::size_t n_inliers = 0;
  double mean_reproj_px = 0.0;
  std::optional<double> position_error;
  std::optional<double> rotation_error_deg;
  std::string failure;  // error kind name when success is false
};

nlohmann::json to_json(const LocalizationRecord& r);
LocalizationRecord localization_from_json(const nlohmann::json& j);

}  // namespace xmatch
