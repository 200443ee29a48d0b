#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "xmatch/parallel.hpp"
#include "xmatch/pose.hpp"
#include "xmatch/rng.hpp"

namespace xmatch {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double outlier_density(std::span<const Correspondence> corr, const MlesacConfig& cfg) {
  if (cfg.image_width > 0 && cfg.image_height > 0) {
    return 1.0 / (static_cast<double>(cfg.image_width) * cfg.image_height);
  }
  Vec2 lo = corr[0].pixel, hi = corr[0].pixel;
  for (const auto& c : corr) {
    lo = lo.cwiseMin(c.pixel);
    hi = hi.cwiseMax(c.pixel);
  }
  return 1.0 / std::max(1.0, (hi - lo).prod());
}

}  // namespace

double mlesac_cost(const Pose& pose, std::span<const Correspondence> corr, const Intrinsics& k,
                   double sigma_px, double outlier_density) {
  const double var = sigma_px * sigma_px;
  const double norm = 1.0 / (2.0 * std::numbers::pi * var);
  std::vector<double> p_in(corr.size());
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const double e = reprojection_error(pose, k, corr[i]);
    p_in[i] = std::isfinite(e) ? norm * std::exp(-e * e / (2.0 * var)) : 0.0;
  }
  // EM estimate of the inlier mixing weight.
  double mix = 0.5;
  for (int it = 0; it < 5; ++it) {
    double sum = 0.0;
    for (double p : p_in) sum += mix * p / (mix * p + (1.0 - mix) * outlier_density);
    mix = sum / static_cast<double>(p_in.size());
  }
  double cost = 0.0;
  for (double p : p_in) cost -= std::log(mix * p + (1.0 - mix) * outlier_density);
  return cost;
}

PoseEstimate mlesac(std::span<const Correspondence> corr, const Intrinsics& k,
                    const MlesacConfig& cfg, MlesacAudit* audit) {
  if (corr.size() < 4) {
    throw Error(ErrorKind::InsufficientCorrespondences,
                "need at least 4 correspondences, got " + std::to_string(corr.size()));
  }
  const double density = outlier_density(corr, cfg);
  std::vector<double> costs(cfg.iterations, kInf);
  std::vector<Pose> poses(cfg.iterations);

  parallel_for(cfg.iterations, [&](std::size_t it) {
    Rng rng(derive_seed(cfg.seed + it, 0));
    std::array<std::size_t, 4> pick{};
    for (std::size_t n = 0; n < 4; ++n) {
      bool fresh;
      do {
        pick[n] = rng.index(corr.size());
        fresh = std::find(pick.begin(), pick.begin() + n, pick[n]) == pick.begin() + n;
      } while (!fresh);
    }
    const auto& a = corr[pick[0]];
    const auto& b = corr[pick[1]];
    const auto& c = corr[pick[2]];
    const double sep = std::min({(a.pixel - b.pixel).norm(), (a.pixel - c.pixel).norm(),
                                 (b.pixel - c.pixel).norm()});
    if (sep < cfg.min_pixel_separation) return;
    if (0.5 * (b.world - a.world).cross(c.world - a.world).norm() < cfg.min_triangle_area) return;
    std::vector<Pose> candidates;
    try {
      candidates = p3p_solve(a, b, c, k);
    } catch (const Error&) {
      return;
    }
    std::size_t best = 0;
    double best_err = kInf;
    for (std::size_t s = 0; s < candidates.size(); ++s) {
      const double e = reprojection_error(candidates[s], k, corr[pick[3]]);
      if (e < best_err) {
        best_err = e;
        best = s;
      }
    }
    poses[it] = candidates[best];
    costs[it] = mlesac_cost(candidates[best], corr, k, cfg.sigma_px, density);
  });

  std::size_t best = 0;
  for (std::size_t it = 1; it < costs.size(); ++it)
    if (costs[it] < costs[best]) best = it;
  if (costs.empty() || !std::isfinite(costs[best])) {
    throw Error(ErrorKind::NoHypothesisFound, "every minimal sample was degenerate");
  }

  PoseEstimate est;
  est.pose = poses[best];
  est.cost = costs[best];
  est.iterations_used = cfg.iterations;
  double sum = 0.0;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const double e = reprojection_error(est.pose, k, corr[i]);
    if (e <= cfg.inlier_threshold_px) {
      est.inlier_ids.push_back(static_cast<std::uint32_t>(i));
      sum += e;
    }
  }
  est.mean_reprojection_error = est.inlier_ids.empty() ? 0.0 : sum / est.inlier_ids.size();
  if (audit) {
    audit->hypothesis_costs = std::move(costs);
    audit->best_iteration = best;
  }
  return est;
}

Eigen::VectorXd reprojection_residuals(const Pose& pose, std::span<const Correspondence> corr,
                                       std::span<const std::uint32_t> ids, const Intrinsics& k) {
  Eigen::VectorXd r(2 * ids.size());
  for (std::size_t n = 0; n < ids.size(); ++n) {
    const auto& c = corr[ids[n]];
    const Vec3 pc = pose.transform(c.world);
    r[2 * n] = k.fx * pc.x() / pc.z() + k.skew * pc.y() / pc.z() + k.cx - c.pixel.x();
    r[2 * n + 1] = k.fy * pc.y() / pc.z() + k.cy - c.pixel.y();
  }
  return r;
}

Eigen::MatrixXd reprojection_jacobian(const Pose& pose, std::span<const Correspondence> corr,
                                      std::span<const std::uint32_t> ids, const Intrinsics& k) {
  Eigen::MatrixXd jac(2 * ids.size(), 6);
  for (std::size_t n = 0; n < ids.size(); ++n) {
    const Vec3 rx = pose.rotation * corr[ids[n]].world;
    const Vec3 pc = rx + pose.translation;
    const double iz = 1.0 / pc.z();
    Eigen::Matrix<double, 2, 3> dproj;
    dproj << k.fx * iz, k.skew * iz, -(k.fx * pc.x() + k.skew * pc.y()) * iz * iz,
        0.0, k.fy * iz, -k.fy * pc.y() * iz * iz;
    jac.block<2, 3>(2 * n, 0) = -dproj * skew_symmetric(rx);
    jac.block<2, 3>(2 * n, 3) = dproj;
  }
  return jac;
}

Pose apply_increment(const Pose& pose, const Eigen::Matrix<double, 6, 1>& delta) {
  Pose out;
  out.rotation = orthonormalize(rotation_exp(delta.head<3>()) * pose.rotation);
  out.translation = pose.translation + delta.tail<3>();
  return out;
}

namespace {

bool all_in_front(const Pose& pose, std::span<const Correspondence> corr,
                  std::span<const std::uint32_t> ids) {
  for (auto id : ids)
    if (!(pose.transform(corr[id].world).z() > 1e-12)) return false;
  return true;
}

double orthonormality_error(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
}

}  // namespace

PoseEstimate refine_pose(const PoseEstimate& initial, std::span<const Correspondence> corr,
                         const Intrinsics& k, const RefineConfig& cfg, RefineTrace* trace) {
  const auto& ids = initial.inlier_ids;
  if (ids.size() < 4) {
    throw Error(ErrorKind::InsufficientCorrespondences, "refinement needs at least 4 inliers");
  }
  auto cost_of = [&](const Pose& p) {
    if (!all_in_front(p, corr, ids)) return kInf;
    return reprojection_residuals(p, corr, ids, k).squaredNorm();
  };

  Pose pose = initial.pose;
  double cost = cost_of(pose);
  if (!std::isfinite(cost)) {
    throw Error(ErrorKind::RefinementDiverged, "initial pose puts inliers behind the camera");
  }
  if (trace) {
    trace->costs = {cost};
    trace->orthonormality_errors = {orthonormality_error(pose.rotation)};
  }
  double lambda = cfg.initial_damping;
  bool accepted_any = false;
  std::size_t iterations = 0;
  bool done = false;
  while (!done && iterations < cfg.max_iterations) {
    ++iterations;
    const Eigen::MatrixXd jac = reprojection_jacobian(pose, corr, ids, k);
    const Eigen::VectorXd res = reprojection_residuals(pose, corr, ids, k);
    const Eigen::Matrix<double, 6, 6> h = jac.transpose() * jac;
    const Eigen::Matrix<double, 6, 1> g = jac.transpose() * res;
    const double diag_floor = 1e-12 * std::max(1.0, h.diagonal().maxCoeff());
    std::size_t escalations = 0;
    while (true) {
      Eigen::Matrix<double, 6, 6> a = h;
      for (int i = 0; i < 6; ++i) a(i, i) += lambda * std::max(h(i, i), diag_floor);
      const Eigen::Matrix<double, 6, 1> delta = -a.ldlt().solve(g);
      if (!delta.allFinite() || delta.norm() < cfg.step_tolerance) {
        done = true;
        break;
      }
      const Pose candidate = apply_increment(pose, delta);
      const double next = cost_of(candidate);
      if (next < cost) {
        pose = candidate;
        cost = next;
        lambda = std::max(lambda / 10.0, 1e-15);
        accepted_any = true;
        if (trace) {
          trace->costs.push_back(cost);
          trace->orthonormality_errors.push_back(orthonormality_error(pose.rotation));
        }
        break;
      }
      lambda *= 10.0;
      if (++escalations >= cfg.max_escalations) {
        const bool stationary = g.norm() <= 1e-9 * (1.0 + cost);
        if (!accepted_any && !stationary) {
          throw Error(ErrorKind::RefinementDiverged,
                      "no decrease after " + std::to_string(escalations) + " damping escalations");
        }
        done = true;
        break;
      }
    }
  }

  PoseEstimate out = initial;
  out.pose = pose;
  out.cost = cost;
  out.iterations_used = iterations;
  double sum = 0.0;
  for (auto id : ids) sum += reprojection_error(pose, k, corr[id]);
  out.mean_reprojection_error = sum / static_cast<double>(ids.size());
  return out;
}

void validate(const LocalizeConfig& cfg) {
  const auto& m = cfg.mlesac;
  if (m.iterations == 0) throw Error(ErrorKind::InvalidArgument, "mlesac.iterations must be >= 1");
  if (!(m.inlier_threshold_px > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "mlesac.inlier_threshold_px must be positive");
  }
  if (!(m.sigma_px > 0.0)) throw Error(ErrorKind::InvalidArgument, "mlesac.sigma_px must be positive");
  if (m.image_width < 0 || m.image_height < 0) {
    throw Error(ErrorKind::InvalidArgument, "image size must be non-negative");
  }
  if (cfg.min_inliers < 4) throw Error(ErrorKind::InvalidArgument, "min_inliers must be >= 4");
  if (cfg.refine.max_iterations == 0 || cfg.refine.max_escalations == 0) {
    throw Error(ErrorKind::InvalidArgument, "refinement limits must be >= 1");
  }
}

Localization localize(const FeatureSet2D& image_features, const FeatureSet3D& cloud_features,
                      const MatcherModel& model, const Intrinsics& k, const LocalizeConfig& cfg) {
  std::vector<std::span<const float>> d2, d3;
  std::vector<std::uint32_t> id2, id3;
  for (std::size_t i = 0; i < image_features.size(); ++i) {
    if (is_zero_descriptor(image_features.descriptor(i))) continue;
    d2.push_back(image_features.descriptor(i));
    id2.push_back(static_cast<std::uint32_t>(i));
  }
  for (std::size_t i = 0; i < cloud_features.size(); ++i) {
    if (is_zero_descriptor(cloud_features.descriptor(i))) continue;
    d3.push_back(cloud_features.descriptor(i));
    id3.push_back(static_cast<std::uint32_t>(i));
  }
  if (d2.empty() || d3.empty()) {
    throw LocalizationFailed(ErrorKind::InsufficientCorrespondences, "no usable features");
  }

  Localization loc;
  std::vector<Correspondence> corr;
  try {
    const ConfidenceTable table = cascade_match(model, d2, d3);
    loc.coarse_evaluations = table.coarse_evaluations;
    loc.fine_evaluations = table.fine_evaluations;
    for (const auto& m : two_way_match(table)) {
      const auto& kp2 = image_features.keypoints[id2[m.id2d]];
      const auto& kp3 = cloud_features.keypoints[id3[m.id3d]];
      corr.push_back({kp3.position, Vec2(kp2.u, kp2.v), m.confidence});
    }
  } catch (const Error& e) {
    throw LocalizationFailed(e.kind(), e.what());
  }
  loc.n_matches = corr.size();
  if (corr.size() < 4) {
    throw LocalizationFailed(ErrorKind::InsufficientCorrespondences,
                             std::to_string(corr.size()) + " two-way matches");
  }

  PoseEstimate est;
  try {
    est = mlesac(corr, k, cfg.mlesac);
    if (est.inlier_ids.size() < cfg.min_inliers) {
      throw Error(ErrorKind::InsufficientCorrespondences,
                  std::to_string(est.inlier_ids.size()) + " inliers after mlesac");
    }
    est = refine_pose(est, corr, k, cfg.refine);
  } catch (const Error& e) {
    throw LocalizationFailed(e.kind(), e.what());
  }

  est.inlier_ids.clear();
  double sum = 0.0;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const double e = reprojection_error(est.pose, k, corr[i]);
    if (e <= cfg.mlesac.inlier_threshold_px) {
      est.inlier_ids.push_back(static_cast<std::uint32_t>(i));
      sum += e;
    }
  }
  if (est.inlier_ids.size() < cfg.min_inliers) {
    throw LocalizationFailed(ErrorKind::InsufficientCorrespondences,
                             std::to_string(est.inlier_ids.size()) + " inliers after refinement");
  }
  est.mean_reprojection_error = sum / static_cast<double>(est.inlier_ids.size());
  loc.n_inliers = est.inlier_ids.size();
  loc.estimate = std::move(est);
  return loc;
}

nlohmann::json to_json(const LocalizationRecord& r) {
  nlohmann::json j;
  j["image_id"] = r.image_id;
  j["success"] = r.success;
  std::vector<double> rot(9), trans(3);
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < 3; ++c) rot[3 * i + c] = r.pose.rotation(i, c);
    trans[i] = r.pose.translation[i];
  }
  j["rotation"] = rot;
  j["translation"] = trans;
  j["n_matches"] = r.n_matches;
  j["n_inliers"] = r.n_inliers;
  j["mean_reproj_px"] = r.mean_reproj_px;
  if (r.position_error) j["position_error"] = *r.position_error;
  if (r.rotation_error_deg) j["rotation_error_deg"] = *r.rotation_error_deg;
  if (!r.success) j["failure"] = r.failure;
  return j;
}

LocalizationRecord localization_from_json(const nlohmann::json& j) {
  try {
    LocalizationRecord r;
    r.image_id = j.at("image_id").get<int>();
    r.success = j.at("success").get<bool>();
    const auto rot = j.at("rotation").get<std::vector<double>>();
    const auto trans = j.at("translation").get<std::vector<double>>();
    if (rot.size() != 9 || trans.size() != 3) {
      throw Error(ErrorKind::ParseError, "rotation needs 9 values and translation 3");
    }
    for (int i = 0; i < 3; ++i) {
      for (int c = 0; c < 3; ++c) r.pose.rotation(i, c) = rot[3 * i + c];
      r.pose.translation[i] = trans[i];
    }
    r.n_matches = j.value("n_matches", std::size_t{0});
    r.n_inliers = j.value("n_inliers", std::size_t{0});
    r.mean_reproj_px = j.value("mean_reproj_px", 0.0);
    if (j.contains("position_error")) r.position_error = j["position_error"].get<double>();
    if (j.contains("rotation_error_deg")) r.rotation_error_deg = j["rotation_error_deg"].get<double>();
    r.failure = j.value("failure", std::string{});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("localization record: ") + e.what());
  }
}

}  // namespace xmatch
