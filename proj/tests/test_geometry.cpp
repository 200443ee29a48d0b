#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "doctest.h"
#include "support.hpp"
#include "xmatch/error.hpp"
#include "xmatch/geometry.hpp"

using namespace xmatch;

namespace {

Intrinsics cam100() { return {100.0, 100.0, 50.0, 50.0, 0.0}; }

Pose rot_z(double deg) {
  Pose p;
  p.rotation = Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, Vec3::UnitZ()).toRotationMatrix();
  return p;
}

// Textbook form of the metric, used as an oracle away from 0 and 180 degrees.
double acos_rotation_error(const Pose& a, const Pose& b) {
  const double c = ((a.rotation * b.rotation.transpose()).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

}  // namespace

TEST_CASE("project: pinhole examples") {
  const auto k = cam100();
  auto p = project(Vec3(0, 0, 2), Pose::identity(), k);
  CHECK(p.u == 50.0);
  CHECK(p.v == 50.0);
  CHECK(p.depth == 2.0);

  p = project(Vec3(1, 0, 2), Pose::identity(), k);
  CHECK(p.u == 100.0);
  CHECK(p.v == 50.0);

  Pose shifted;
  shifted.translation = Vec3(0, 0, 1);
  p = project(Vec3(0, 0, 1), shifted, k);
  CHECK(p.u == 50.0);
  CHECK(p.v == 50.0);
  CHECK(p.depth == 2.0);
}

TEST_CASE("project: skew enters u only") {
  Intrinsics k = cam100();
  k.skew = 10.0;
  const auto p = project(Vec3(0, 1, 2), Pose::identity(), k);
  CHECK(p.u == doctest::Approx(55.0));
  CHECK(p.v == doctest::Approx(100.0));
}

TEST_CASE("project: principal plane is degenerate") {
  try {
    project(Vec3(1, 1, 0), Pose::identity(), cam100());
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateProjection);
  }
}

TEST_CASE("in_frustum: strict bounds") {
  CHECK(in_frustum({50, 50, 2}, 100, 100));
  CHECK_FALSE(in_frustum({50, 50, -1}, 100, 100));
  CHECK_FALSE(in_frustum({100, 50, 2}, 100, 100));
  CHECK_FALSE(in_frustum({0, 50, 2}, 100, 100));
  CHECK_FALSE(in_frustum({50, 100, 2}, 100, 100));
  CHECK_FALSE(in_frustum({50, 50, 0}, 100, 100));
}

TEST_CASE("position_error examples and triangle inequality") {
  CHECK(position_error(Vec3(0, 0, 0), Vec3(3, 4, 0)) == 5.0);
  CHECK(position_error(Vec3(1, 2, 3), Vec3(1, 2, 3)) == 0.0);
  CHECK(position_error(Vec3(1, 1, 1), Vec3(2, 2, 2)) == doctest::Approx(1.7320508).epsilon(1e-7));
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 a = Vec3::Random(), b = Vec3::Random() * 5.0, c(rng.normal(), rng.normal(), rng.normal());
    CHECK(position_error(a, c) <= position_error(a, b) + position_error(b, c) + 1e-12);
  }
}

TEST_CASE("rotation_error_deg analytic cases") {
  CHECK(rotation_error_deg(Pose::identity(), Pose::identity()) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(rotation_error_deg(Pose::identity(), rot_z(90.0)) - 90.0) < 1e-9);
  CHECK(std::abs(rotation_error_deg(Pose::identity(), rot_z(180.0)) - 180.0) < 1e-9);
  Pose flip;
  flip.rotation = Eigen::AngleAxisd(std::numbers::pi, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  CHECK(std::abs(rotation_error_deg(Pose::identity(), flip) - 180.0) < 1e-9);
}

TEST_CASE("rotation_error_deg: symmetric, bounded, agrees with arccos form") {
  Rng rng(17);
  for (int i = 0; i < 2000; ++i) {
    const Pose a = testing::random_pose(rng), b = testing::random_pose(rng);
    const double e = rotation_error_deg(a, b);
    CHECK(e >= 0.0);
    CHECK(e <= 180.0);
    CHECK(std::abs(e - rotation_error_deg(b, a)) < 1e-9);
    if (e > 1.0 && e < 179.0) CHECK(std::abs(e - acos_rotation_error(a, b)) < 1e-7);
  }
}

TEST_CASE("rotation_error_deg resolves tiny angles") {
  const double deg = 1e-7;
  CHECK(std::abs(rotation_error_deg(Pose::identity(), rot_z(deg)) - deg) < 1e-12);
}

TEST_CASE("project / back_project round trip") {
  Rng rng(5);
  const Intrinsics k{420.0, 380.0, 160.0, 120.0, 1.5};
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Pose pose = testing::random_pose(rng);
    const Projection proj{rng.uniform(0.0, 320.0), rng.uniform(0.0, 240.0), rng.uniform(0.5, 20.0)};
    const Vec3 world = back_project(proj, pose, k);
    const Projection again = project(world, pose, k);
    CHECK(in_frustum(again, 320, 240) == in_frustum(proj, 320, 240));
    worst = std::max(worst, (back_project(again, pose, k) - world).norm());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("in_frustum implies positive depth") {
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const Projection p{rng.uniform(-10, 110), rng.uniform(-10, 110), rng.uniform(-5, 5)};
    if (in_frustum(p, 100, 100)) CHECK(p.depth > 0.0);
  }
}

TEST_CASE("pose algebra keeps rotations orthonormal") {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const Pose a = testing::random_pose(rng), b = testing::random_pose(rng);
    CHECK(a.valid());
    CHECK((a * b).valid());
    CHECK(a.inverse().valid());
    const Vec3 p(rng.normal(), rng.normal(), rng.normal());
    CHECK(((a * b).transform(p) - a.transform(b.transform(p))).norm() < 1e-12);
    CHECK((a.inverse().transform(a.transform(p)) - p).norm() < 1e-12);
    CHECK((a.camera_center() - a.inverse().translation).norm() < 1e-12);
  }
}

TEST_CASE("look_at: camera looks at the target with y down") {
  const Pose p = Pose::look_at(Vec3(1, 2, 3), Vec3(4, 2, 3), Vec3::UnitZ());
  CHECK(p.valid());
  CHECK((p.camera_center() - Vec3(1, 2, 3)).norm() < 1e-12);
  const Vec3 target_cam = p.transform(Vec3(4, 2, 3));
  CHECK(std::abs(target_cam.x()) < 1e-12);
  CHECK(std::abs(target_cam.y()) < 1e-12);
  CHECK(target_cam.z() == doctest::Approx(3.0));
  CHECK(p.transform(Vec3(4, 2, 4)).y() < 0.0);  // world up maps to image up
}

TEST_CASE("rotation_exp matches angle-axis and small angles") {
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Vec3 w(rng.normal(), rng.normal(), rng.normal());
    const Mat3 expected = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
    CHECK((rotation_exp(w) - expected).norm() < 1e-12);
  }
  CHECK((rotation_exp(Vec3(1e-14, 0, 0)) - Mat3::Identity()).norm() < 1e-13);
  const Mat3 noisy = Mat3::Identity() + 1e-4 * Mat3::Random();
  const Mat3 r = orthonormalize(noisy);
  CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-12);
  CHECK(r.determinant() == doctest::Approx(1.0));
}

TEST_CASE("pose records: JSON round trip and validation") {
  testing::TempDir dir("geometry");
  Rng rng(12);
  std::vector<CameraView> views;
  for (int i = 0; i < 3; ++i) {
    CameraView v;
    v.image_id = i;
    v.pose = testing::random_pose(rng);
    v.intrinsics = {300.0 + i, 310.0, 160.0, 120.0, 0.5};
    v.width = 320;
    v.height = 240;
    views.push_back(v);
  }
  const auto path = dir.file("poses.json");
  save_pose_records(path, views);
  const auto loaded = load_pose_records(path);
  REQUIRE(loaded.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(loaded[i].image_id == i);
    CHECK((loaded[i].pose.rotation - views[i].pose.rotation).norm() < 1e-12);
    CHECK((loaded[i].pose.translation - views[i].pose.translation).norm() == 0.0);
    CHECK(loaded[i].intrinsics.fx == views[i].intrinsics.fx);
    CHECK(loaded[i].intrinsics.skew == 0.5);
    CHECK(loaded[i].width == 320);
  }
  CHECK(view_to_json(views[0]).at("convention") == pose_convention());

  auto bad = view_to_json(views[0]);
  bad["rotation"] = std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 2};
  CHECK_THROWS_AS(view_from_json(bad), Error);
  bad = view_to_json(views[0]);
  bad.erase("fx");
  CHECK_THROWS_AS(view_from_json(bad), Error);
  testing::write_bytes(dir.file("broken.json"), "{ not json");
  try {
    load_pose_records(dir.file("broken.json"));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ParseError);
  }
}
