#include "xmatch/keypoints3d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "xmatch/error.hpp"
#include "xmatch/parallel.hpp"

namespace xmatch {

namespace {

struct LocalFrame {
  Vec3 mean;
  Eigen::Vector3d eigenvalues;  // ascending
  Mat3 eigenvectors;            // columns match eigenvalues
};

LocalFrame local_frame(const PointCloud& cloud, const std::vector<std::uint32_t>& ids) {
  LocalFrame f;
  f.mean.setZero();
  for (auto id : ids) f.mean += cloud.positions[id];
  f.mean /= static_cast<double>(ids.size());
  Mat3 cov = Mat3::Zero();
  for (auto id : ids) {
    const Vec3 d = cloud.positions[id] - f.mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(ids.size());
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  f.eigenvalues = solver.eigenvalues().cwiseMax(0.0);
  f.eigenvectors = solver.eigenvectors();
  return f;
}

double surface_variation(const Eigen::Vector3d& ev) {
  const double sum = ev.sum();
  return sum > 0.0 ? ev[0] / sum : 0.0;
}

// Strictly greater, ignoring floating-point noise between numerically equal values.
bool clearly_greater(double a, double b) { return a > b + 1e-9 * std::max(a, b) + 1e-15; }

bool keypoint_order(const Keypoint3D& a, const Keypoint3D& b) {
  if (a.response != b.response) return a.response > b.response;
  for (int k = 0; k < 3; ++k) {
    if (a.position[k] != b.position[k]) return a.position[k] < b.position[k];
  }
  return a.point_id < b.point_id;
}

}  // namespace

bool is_zero_descriptor(std::span<const float> d) {
  return std::all_of(d.begin(), d.end(), [](float v) { return v == 0.0f; });
}

double median_point_spacing(const SpatialIndex& index) {
  if (index.size() < 2) return 0.0;
  std::vector<double> nn(index.size());
  parallel_for(index.size(), [&](std::size_t i) {
    const auto ids = index.knn(index.point(i), 2);
    const std::uint32_t other = ids[0] == i ? ids[1] : ids[0];
    nn[i] = (index.point(other) - index.point(i)).norm();
  });
  auto mid = nn.begin() + static_cast<std::ptrdiff_t>(nn.size() / 2);
  std::nth_element(nn.begin(), mid, nn.end());
  return *mid;
}

double principal_curvature(const PointCloud& cloud, const SpatialIndex& index,
                           std::size_t point_id, double radius, std::size_t min_neighbors) {
  if (!(radius > 0.0)) throw Error(ErrorKind::InvalidArgument, "radius must be positive");
  const auto ids = index.radius(cloud.positions[point_id], radius);
  if (ids.size() < std::max<std::size_t>(min_neighbors, 5)) {
    throw Error(ErrorKind::InsufficientNeighborhood,
                std::to_string(ids.size()) + " points within radius");
  }
  return surface_variation(local_frame(cloud, ids).eigenvalues);
}

std::vector<Keypoint3D> detect_keypoints_3d(const PointCloud& cloud, const SpatialIndex& index,
                                            const Detector3DConfig& cfg) {
  if (cloud.empty()) return {};
  std::vector<double> scales = cfg.scales;
  if (scales.empty()) {
    const double rho = median_point_spacing(index);
    if (!(rho > 0.0)) return {};
    scales = {2.0 * rho, 4.0 * rho, 8.0 * rho};
  }
  std::sort(scales.begin(), scales.end());
  const std::size_t min_n = std::max<std::size_t>(cfg.min_neighbors, 5);

  // point id -> best keypoint across scales
  std::map<std::uint32_t, Keypoint3D> best;
  const std::size_t n = cloud.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (double r : scales) {
    std::vector<double> curv(n, nan);
    parallel_for(n, [&](std::size_t i) {
      const auto ids = index.radius(cloud.positions[i], r);
      if (ids.size() >= min_n) curv[i] = surface_variation(local_frame(cloud, ids).eigenvalues);
    });
    std::vector<char> is_max(n, 0);
    parallel_for(n, [&](std::size_t i) {
      if (std::isnan(curv[i]) || curv[i] < cfg.response_threshold) return;
      for (auto j : index.radius(cloud.positions[i], r)) {
        if (j == i || std::isnan(curv[j])) continue;
        if (!clearly_greater(curv[i], curv[j])) return;
      }
      is_max[i] = 1;
    });
    for (std::size_t i = 0; i < n; ++i) {
      if (!is_max[i]) continue;
      const auto id = static_cast<std::uint32_t>(i);
      auto it = best.find(id);
      if (it == best.end() || curv[i] > it->second.response) {
        best[id] = Keypoint3D{id, cloud.positions[i], r, curv[i]};
      }
    }
  }
  std::vector<Keypoint3D> out;
  out.reserve(best.size());
  for (const auto& [id, kp] : best) out.push_back(kp);
  std::sort(out.begin(), out.end(), keypoint_order);
  return out;
}

std::vector<Keypoint3D> detect_keypoints_3d(const PointCloud& cloud, const Detector3DConfig& cfg) {
  const SpatialIndex index(cloud.positions);
  return detect_keypoints_3d(cloud, index, cfg);
}

std::vector<float> compute_descriptor_3d(const PointCloud& cloud, const SpatialIndex& index,
                                         const Keypoint3D& kp, const Descriptor3DConfig& cfg) {
  const double support = cfg.support_factor * kp.scale;
  const double grad_radius = cfg.gradient_factor * kp.scale;
  if (!(support > 0.0) || !(grad_radius > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "descriptor radii must be positive");
  }
  const auto ids = index.radius(kp.position, support);
  if (ids.size() < 5) {
    throw Error(ErrorKind::InsufficientNeighborhood,
                std::to_string(ids.size()) + " points in descriptor support");
  }
  const LocalFrame frame = local_frame(cloud, ids);
  const Vec3 e1 = frame.eigenvectors.col(2);
  const Vec3 e2 = frame.eigenvectors.col(1);
  auto tangent = [&](const Vec3& d) { return Vec2(d.dot(e1), d.dot(e2)); };

  std::vector<double> hist(kDescriptor3DSize, 0.0);
  const double g2 = grad_radius * grad_radius;
  for (auto i : ids) {
    const Vec3& pi = cloud.positions[i];
    const Vec2 radial = tangent(pi - kp.position);
    const double rn = radial.norm();
    if (rn < 1e-12 * support) continue;

    // Weighted least-squares intensity gradient in the keypoint's tangent plane.
    Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
    Vec2 atb = Vec2::Zero();
    for (auto j : index.radius(pi, grad_radius)) {
      if (j == i) continue;
      const Vec3 d = cloud.positions[j] - pi;
      const double w = std::pow(1.0 - d.squaredNorm() / g2, 2);
      const Vec2 t = tangent(d);
      ata += w * t * t.transpose();
      atb += w * t * (cloud.intensities[j] - cloud.intensities[i]);
    }
    const double det = ata.determinant();
    if (!(det > 1e-18 * std::pow(ata.trace(), 2)) || ata.trace() <= 0.0) continue;
    const Vec2 grad = ata.inverse() * atb;
    const double mag = grad.norm();
    if (mag <= 0.0) continue;

    const double dist = (pi - kp.position).norm() / support;
    const double weight = mag * (1.0 - dist * dist);
    if (weight <= 0.0) continue;
    const double cosang = std::clamp(grad.dot(radial) / (mag * rn), -1.0, 1.0);
    const double angle = std::acos(cosang);  // [0, pi]

    // Linear interpolation between neighboring radial and orientation bins.
    const double rb = dist * kRadialBins3D - 0.5;
    const double ob = angle / std::numbers::pi * kOrientationBins3D - 0.5;
    const int r0 = static_cast<int>(std::floor(rb));
    const int o0 = static_cast<int>(std::floor(ob));
    const double rf = rb - r0, of = ob - o0;
    for (int dr = 0; dr < 2; ++dr) {
      const int r = std::clamp(r0 + dr, 0, static_cast<int>(kRadialBins3D) - 1);
      const double wr = dr ? rf : 1.0 - rf;
      for (int d_o = 0; d_o < 2; ++d_o) {
        const int o = std::clamp(o0 + d_o, 0, static_cast<int>(kOrientationBins3D) - 1);
        const double wo = d_o ? of : 1.0 - of;
        hist[static_cast<std::size_t>(r) * kOrientationBins3D + o] += weight * wr * wo;
      }
    }
  }
  double norm = 0.0;
  for (double h : hist) norm += h * h;
  norm = std::sqrt(norm);
  std::vector<float> out(kDescriptor3DSize, 0.0f);
  if (norm > 1e-12) {
    for (std::size_t k = 0; k < hist.size(); ++k) out[k] = static_cast<float>(hist[k] / norm);
  }
  return out;
}

FeatureSet3D extract_features_3d(const PointCloud& cloud, const Detector3DConfig& det,
                                 const Descriptor3DConfig& desc) {
  const SpatialIndex index(cloud.positions);
  const auto keypoints = detect_keypoints_3d(cloud, index, det);
  std::vector<std::vector<float>> descs(keypoints.size());
  parallel_for(keypoints.size(), [&](std::size_t i) {
    try {
      descs[i] = compute_descriptor_3d(cloud, index, keypoints[i], desc);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InsufficientNeighborhood) throw;
    }
  });
  FeatureSet3D out;
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    if (descs[i].empty()) continue;
    out.keypoints.push_back(keypoints[i]);
    out.descriptors.insert(out.descriptors.end(), descs[i].begin(), descs[i].end());
  }
  return out;
}

}  // namespace xmatch
