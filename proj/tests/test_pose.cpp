#include <algorithm>
#include <functional>
#include <numbers>
#include <cmath>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "support.hpp"
#include "xmatch/error.hpp"
#include "xmatch/parallel.hpp"
#include "xmatch/pose.hpp"

using namespace xmatch;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::IoError;
}

std::vector<std::uint32_t> all_ids(std::size_t n) {
  std::vector<std::uint32_t> ids(n);
  for (std::uint32_t i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

Eigen::MatrixXd numeric_jacobian(const Pose& pose, std::span<const Correspondence> corr,
                                 std::span<const std::uint32_t> ids, const Intrinsics& k, double h) {
  Eigen::MatrixXd j(2 * ids.size(), 6);
  for (int c = 0; c < 6; ++c) {
    Eigen::Matrix<double, 6, 1> d = Eigen::Matrix<double, 6, 1>::Zero();
    d[c] = h;
    const auto plus = reprojection_residuals(apply_increment(pose, d), corr, ids, k);
    const auto minus = reprojection_residuals(apply_increment(pose, -d), corr, ids, k);
    j.col(c) = (plus - minus) / (2 * h);
  }
  return j;
}

// Model whose coarse stage rejects every pair.
MatcherModel reject_all_model() {
  MatcherModel m;
  m.p = kDescriptor3DSize;
  m.q = kDescriptor2DSize;
  TreeNode leaf;
  m.coarse.nodes = {leaf};
  m.coarse.n_features = m.p + m.q;
  m.fine.n_features = m.p + m.q;
  DecisionTree t = m.coarse;
  m.fine.trees = {t};
  return m;
}

}  // namespace

TEST_CASE("p3p: recovers the generating pose") {
  const auto k = fixtures::vga_camera();
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto prob = fixtures::random_triple(seed);
    const auto sols = p3p_solve(prob.corr[0], prob.corr[1], prob.corr[2], k);
    REQUIRE(!sols.empty());
    CHECK(sols.size() <= 4);
    double best_p = 1e9, best_r = 1e9;
    for (const auto& s : sols) {
      CHECK(s.valid());
      for (const auto& c : prob.corr) CHECK(reprojection_error(s, k, c) < 1e-6);
      const double pe = position_error(prob.truth.camera_center(), s.camera_center());
      if (pe < best_p) {
        best_p = pe;
        best_r = rotation_error_deg(prob.truth, s);
      }
    }
    CHECK(best_p < 1e-9);
    CHECK(best_r < 1e-6);
  }
}

TEST_CASE("p3p: collinear points are rejected") {
  const auto k = fixtures::vga_camera();
  Correspondence a{Vec3(0, 0, 5), {}}, b{Vec3(1, 1, 5), {}}, c{Vec3(2, 2, 5), {}};
  for (auto* x : {&a, &b, &c}) {
    const auto p = project(x->world, Pose::identity(), k);
    x->pixel = Vec2(p.u, p.v);
  }
  CHECK(kind_of([&] { p3p_solve(a, b, c, k); }) == ErrorKind::DegenerateConfiguration);
}

TEST_CASE("p3p: symmetric equilateral triangle has several exact solutions") {
  const auto k = fixtures::vga_camera();
  std::array<Correspondence, 3> c;
  for (int i = 0; i < 3; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 3.0;
    c[i].world = Vec3(std::cos(a), std::sin(a), 4.0);
    const auto p = project(c[i].world, Pose::identity(), k);
    c[i].pixel = Vec2(p.u, p.v);
  }
  const auto sols = p3p_solve(c[0], c[1], c[2], k);
  CHECK(sols.size() >= 2);
  bool has_truth = false;
  for (const auto& s : sols) {
    for (const auto& x : c) CHECK(reprojection_error(s, k, x) < 1e-6);
    has_truth |= position_error(Vec3::Zero(), s.camera_center()) < 1e-9;
  }
  CHECK(has_truth);
}

TEST_CASE("mlesac: noise-free inliers") {
  const auto k = fixtures::vga_camera();
  const auto prob = fixtures::robust_problem(3, 100, 0.0, 0.0);
  MlesacAudit audit;
  const auto est = mlesac(prob.corr, k, fixtures::vga_mlesac(1), &audit);
  CHECK(position_error(prob.truth.camera_center(), est.pose.camera_center()) < 1e-6);
  CHECK(est.inlier_ids.size() == 100);
  for (double c : audit.hypothesis_costs) CHECK(est.cost <= c);
  CHECK(audit.hypothesis_costs[audit.best_iteration] == est.cost);
}

TEST_CASE("mlesac: outliers and noise") {
  const auto k = fixtures::vga_camera();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto prob = fixtures::robust_problem(100 + seed, 100, 0.3, 0.5);
    MlesacAudit audit;
    const auto est = mlesac(prob.corr, k, fixtures::vga_mlesac(seed), &audit);
    CHECK(rotation_error_deg(prob.truth, est.pose) < 0.5);
    std::size_t recovered = 0;
    for (auto id : est.inlier_ids) recovered += prob.outlier[id] ? 0 : 1;
    CHECK(recovered >= 0.9 * 70);
    CHECK(audit.hypothesis_costs.size() == fixtures::vga_mlesac(seed).iterations);
    for (double c : audit.hypothesis_costs) CHECK(est.cost <= c);
  }
}

TEST_CASE("mlesac: too few correspondences and determinism") {
  const auto k = fixtures::vga_camera();
  const auto prob = fixtures::robust_problem(9, 60, 0.2, 0.5);
  const std::vector<Correspondence> three(prob.corr.begin(), prob.corr.begin() + 3);
  CHECK(kind_of([&] { mlesac(three, k, {}); }) == ErrorKind::InsufficientCorrespondences);

  set_thread_count(1);
  const auto a = mlesac(prob.corr, k, fixtures::vga_mlesac(4));
  set_thread_count(3);
  const auto b = mlesac(prob.corr, k, fixtures::vga_mlesac(4));
  set_thread_count(0);
  CHECK(a.pose.rotation == b.pose.rotation);
  CHECK(a.pose.translation == b.pose.translation);
  CHECK(a.inlier_ids == b.inlier_ids);
  CHECK(a.cost == b.cost);
}

TEST_CASE("refine: Jacobian matches central differences") {
  const auto k = fixtures::vga_camera();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto prob = fixtures::robust_problem(500 + seed, 20, 0.0, 1.0);
    Rng rng(seed);
    Pose pose = prob.truth;
    Eigen::Matrix<double, 6, 1> d;
    for (int i = 0; i < 6; ++i) d[i] = rng.uniform(-0.01, 0.01);
    pose = apply_increment(pose, d);
    const auto ids = all_ids(prob.corr.size());
    const Eigen::MatrixXd analytic = reprojection_jacobian(pose, prob.corr, ids, k);
    const Eigen::MatrixXd numeric = numeric_jacobian(pose, prob.corr, ids, k, 1e-6);
    const double rel = (analytic - numeric).cwiseAbs().maxCoeff() / analytic.cwiseAbs().maxCoeff();
    CHECK(rel < 1e-5);
  }
}

TEST_CASE("refine: perturb and recover, monotone cost, orthonormal rotations") {
  const auto k = fixtures::vga_camera();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto prob = fixtures::robust_problem(900 + seed, 60, 0.0, 0.0);
    Rng rng(seed);
    const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const Vec3 shift = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized() * 0.01 * prob.diameter;
    Pose start;
    start.rotation = rotation_exp(axis * std::numbers::pi / 180.0) * prob.truth.rotation;
    start.translation = -start.rotation * (prob.truth.camera_center() + shift);

    PoseEstimate init;
    init.pose = start;
    init.inlier_ids = all_ids(prob.corr.size());
    RefineTrace trace;
    const auto out = refine_pose(init, prob.corr, k, {}, &trace);
    CHECK(rotation_error_deg(prob.truth, out.pose) < 1e-6);
    CHECK(position_error(prob.truth.camera_center(), out.pose.camera_center()) < 1e-8);
    for (std::size_t i = 1; i < trace.costs.size(); ++i) CHECK(trace.costs[i] <= trace.costs[i - 1]);
    for (double e : trace.orthonormality_errors) CHECK(e < 1e-9);
  }
}

TEST_CASE("refine: optimal pose is a fixed point") {
  const auto k = fixtures::vga_camera();
  const auto prob = fixtures::robust_problem(77, 40, 0.0, 0.0);
  PoseEstimate init;
  init.pose = prob.truth;
  init.inlier_ids = all_ids(prob.corr.size());
  const double before = reprojection_residuals(prob.truth, prob.corr, init.inlier_ids, k).squaredNorm();
  const auto out = refine_pose(init, prob.corr, k);
  CHECK(std::abs(out.cost - before) <= 1e-12);
  CHECK(out.iterations_used <= 2);

  init.inlier_ids.resize(3);
  CHECK(kind_of([&] { refine_pose(init, prob.corr, k); }) == ErrorKind::InsufficientCorrespondences);
}

TEST_CASE("localize: empty matches fail with the stage cause") {
  FeatureSet2D img;
  FeatureSet3D cloud;
  for (int i = 0; i < 10; ++i) {
    img.keypoints.push_back({10.0 + i, 20.0, 2.0, 0.0, 0.1});
    cloud.keypoints.push_back({static_cast<std::uint32_t>(i), Vec3(i, 0, 5), 0.1, 0.1});
    for (std::size_t d = 0; d < kDescriptor2DSize; ++d) img.descriptors.push_back(d == std::size_t(i) ? 1.0f : 0.0f);
    for (std::size_t d = 0; d < kDescriptor3DSize; ++d) cloud.descriptors.push_back(d == std::size_t(i) ? 1.0f : 0.0f);
  }
  try {
    localize(img, cloud, reject_all_model(), fixtures::vga_camera(), {});
    FAIL("expected LocalizationFailed");
  } catch (const LocalizationFailed& e) {
    CHECK(e.kind() == ErrorKind::LocalizationFailed);
    CHECK(e.cause() == ErrorKind::InsufficientCorrespondences);
  }
  LocalizeConfig bad;
  bad.min_inliers = 3;
  CHECK_THROWS_AS(validate(bad), Error);
}

TEST_CASE("localization record JSON round trip") {
  Rng rng(1);
  LocalizationRecord r;
  r.image_id = 7;
  r.success = true;
  r.pose = testing::random_pose(rng);
  r.n_matches = 40;
  r.n_inliers = 31;
  r.mean_reproj_px = 0.8125;
  r.position_error = 0.0123;
  r.rotation_error_deg = 0.25;
  const auto back = localization_from_json(to_json(r));
  CHECK(back.image_id == 7);
  CHECK(back.success);
  CHECK(back.pose.rotation == r.pose.rotation);
  CHECK(back.n_inliers == 31);
  CHECK(back.position_error == r.position_error);
  CHECK(back.rotation_error_deg == r.rotation_error_deg);

  LocalizationRecord f;
  f.failure = "InsufficientCorrespondences";
  const auto fb = localization_from_json(to_json(f));
  CHECK_FALSE(fb.success);
  CHECK(fb.failure == f.failure);
  CHECK_FALSE(fb.position_error.has_value());
}
