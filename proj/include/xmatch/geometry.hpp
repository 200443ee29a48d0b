#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

namespace xmatch {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics in pixels. Pixel (i, j) covers [i, i+1) x [j, j+1).
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double skew = 0.0;

  Mat3 matrix() const;
  // Unit bearing vector of the camera ray through pixel (u, v).
  Vec3 bearing(double u, double v) const;
  bool valid() const;
};

/// Rigid world->camera transform: p_cam = rotation * p_world + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up);

  Vec3 transform(const Vec3& world) const { return rotation * world + translation; }
  Vec3 camera_center() const { return -rotation.transpose() * translation; }
  Pose inverse() const;
  // (a * b)(p) == a(b(p))
  Pose operator*(const Pose& other) const;
  bool valid(double tolerance = 1e-9) const;
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// A posed, calibrated camera of a given image size.
struct CameraView {
  int image_id = 0;
  Pose pose;
  Intrinsics intrinsics;
  int width = 0;
  int height = 0;
};

/// Throws Error(DegenerateProjection) when the point lies on the principal plane.
Projection project(const Vec3& point, const Pose& pose, const Intrinsics& k);

/// Inverse of project(): world point at the given pixel and camera-frame depth.
Vec3 back_project(const Projection& proj, const Pose& pose, const Intrinsics& k);

/// Strict bounds 0 < u < w, 0 < v < h and positive depth.
bool in_frustum(const Projection& proj, int img_w, int img_h);

double position_error(const Vec3& gt, const Vec3& est);

/// Angle of R_gt * R_est^T in degrees, in [0, 180].
double rotation_error_deg(const Pose& gt, const Pose& est);

Mat3 skew_symmetric(const Vec3& w);
// Rodrigues exponential map for an axis-angle vector.
Mat3 rotation_exp(const Vec3& w);
// Nearest rotation in Frobenius norm.
Mat3 orthonormalize(const Mat3& m);

// Pose record JSON (one array per dataset):
// {image_id, rotation: 9 reals row-major, translation: 3, fx, fy, cx, cy, skew, width, height}
std::string pose_convention();
nlohmann::json view_to_json(const CameraView& view);
// Throws Error(ParseError) on missing or malformed fields.
CameraView view_from_json(const nlohmann::json& record);
std::vector<CameraView> load_pose_records(const std::string& path);
void save_pose_records(const std::string& path, const std::vector<CameraView>& views);

}  // namespace xmatch
