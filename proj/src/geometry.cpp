#include "xmatch/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "xmatch/error.hpp"

namespace xmatch {

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Vec3 Intrinsics::bearing(double u, double v) const {
  const double y = (v - cy) / fy;
  const double x = (u - cx - skew * y) / fx;
  return Vec3(x, y, 1.0).normalized();
}

bool Intrinsics::valid() const {
  return std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) && std::isfinite(cy) &&
         std::isfinite(skew) && fx > 0.0 && fy > 0.0;
}

Pose Pose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  // Camera axes: z forward, x right, y down.
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-12) x = z.unitOrthogonal();
  x.normalize();
  const Vec3 y = z.cross(x);
  Pose pose;
  pose.rotation.row(0) = x.transpose();
  pose.rotation.row(1) = y.transpose();
  pose.rotation.row(2) = z.transpose();
  pose.translation = -pose.rotation * eye;
  return pose;
}

Pose Pose::inverse() const {
  Pose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -inv.rotation * translation;
  return inv;
}

Pose Pose::operator*(const Pose& other) const {
  Pose out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

bool Pose::valid(double tolerance) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tolerance && std::abs(rotation.determinant() - 1.0) <= tolerance;
}

Projection project(const Vec3& point, const Pose& pose, const Intrinsics& k) {
  const Vec3 pc = pose.transform(point);
  if (std::abs(pc.z()) < 1e-12) {
    throw Error(ErrorKind::DegenerateProjection, "point lies on the principal plane");
  }
  const double x = pc.x() / pc.z();
  const double y = pc.y() / pc.z();
  return {k.fx * x + k.skew * y + k.cx, k.fy * y + k.cy, pc.z()};
}

Vec3 back_project(const Projection& proj, const Pose& pose, const Intrinsics& k) {
  const double y = (proj.v - k.cy) / k.fy;
  const double x = (proj.u - k.cx - k.skew * y) / k.fx;
  const Vec3 pc(x * proj.depth, y * proj.depth, proj.depth);
  return pose.rotation.transpose() * (pc - pose.translation);
}

bool in_frustum(const Projection& proj, int img_w, int img_h) {
  return proj.u > 0.0 && proj.u < img_w && proj.v > 0.0 && proj.v < img_h && proj.depth > 0.0;
}

double position_error(const Vec3& gt, const Vec3& est) { return (gt - est).norm(); }

double rotation_error_deg(const Pose& gt, const Pose& est) {
  // Same angle as acos((tr - 1) / 2), but atan2 keeps precision near 0 and 180 degrees.
  const Mat3 d = gt.rotation * est.rotation.transpose();
  const double c = (d.trace() - 1.0) / 2.0;
  const double s = 0.5 * Vec3(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)).norm();
  return std::atan2(s, c) * 180.0 / std::numbers::pi;
}

Mat3 skew_symmetric(const Vec3& w) {
  Mat3 s;
  s << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return s;
}

Mat3 rotation_exp(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) return orthonormalize(Mat3::Identity() + skew_symmetric(w));
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

Mat3 orthonormalize(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * d * svd.matrixV().transpose();
}

std::string pose_convention() { return "p_cam = R * p_world + T"; }

nlohmann::json view_to_json(const CameraView& view) {
  nlohmann::json rec;
  rec["image_id"] = view.image_id;
  std::vector<double> rot;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(view.pose.rotation(r, c));
  rec["rotation"] = rot;
  rec["translation"] = {view.pose.translation.x(), view.pose.translation.y(),
                        view.pose.translation.z()};
  rec["fx"] = view.intrinsics.fx;
  rec["fy"] = view.intrinsics.fy;
  rec["cx"] = view.intrinsics.cx;
  rec["cy"] = view.intrinsics.cy;
  rec["skew"] = view.intrinsics.skew;
  rec["width"] = view.width;
  rec["height"] = view.height;
  rec["convention"] = pose_convention();
  return rec;
}

CameraView view_from_json(const nlohmann::json& rec) {
  try {
    CameraView view;
    view.image_id = rec.at("image_id").get<int>();
    const auto rot = rec.at("rotation").get<std::vector<double>>();
    const auto tr = rec.at("translation").get<std::vector<double>>();
    if (rot.size() != 9 || tr.size() != 3) {
      throw Error(ErrorKind::ParseError, "rotation needs 9 values and translation 3");
    }
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) view.pose.rotation(r, c) = rot[r * 3 + c];
    view.pose.translation = Vec3(tr[0], tr[1], tr[2]);
    view.intrinsics.fx = rec.at("fx").get<double>();
    view.intrinsics.fy = rec.at("fy").get<double>();
    view.intrinsics.cx = rec.at("cx").get<double>();
    view.intrinsics.cy = rec.at("cy").get<double>();
    view.intrinsics.skew = rec.value("skew", 0.0);
    view.width = rec.at("width").get<int>();
    view.height = rec.at("height").get<int>();
    if (!view.intrinsics.valid() || view.width <= 0 || view.height <= 0) {
      throw Error(ErrorKind::ParseError, "invalid intrinsics or image size");
    }
    if (!view.pose.valid(1e-6)) throw Error(ErrorKind::ParseError, "rotation is not orthonormal");
    view.pose.rotation = orthonormalize(view.pose.rotation);
    return view;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("pose record: ") + e.what());
  }
}

std::vector<CameraView> load_pose_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
  std::vector<CameraView> views;
  if (doc.is_array()) {
    for (const auto& rec : doc) views.push_back(view_from_json(rec));
  } else if (doc.is_object() && doc.contains("poses")) {
    for (const auto& rec : doc.at("poses")) views.push_back(view_from_json(rec));
  } else {
    views.push_back(view_from_json(doc));
  }
  return views;
}

void save_pose_records(const std::string& path, const std::vector<CameraView>& views) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& v : views) doc.push_back(view_to_json(v));
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << doc.dump(2) << '\n';
}

}  // namespace xmatch
