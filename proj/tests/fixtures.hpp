#pragma once

// Synthetic pose problems shared by the unit and acceptance suites.

#include <array>
#include <vector>

#include "xmatch/pose.hpp"
#include "xmatch/rng.hpp"

namespace fixtures {

using namespace xmatch;

inline Intrinsics vga_camera() { return {500.0, 500.0, 320.0, 240.0, 0.0}; }

struct TripleProblem {
  Pose truth;
  std::array<Correspondence, 3> corr;
};

// Camera several units away looking at a unit cube of scene points.
inline TripleProblem random_triple(std::uint64_t seed) {
  Rng rng(seed);
  const Intrinsics k = vga_camera();
  TripleProblem p;
  p.truth = Pose::look_at(Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-8, -4)),
                          Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 0), Vec3(0, -1, 0));
  for (auto& c : p.corr) {
    c.world = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const auto proj = project(c.world, p.truth, k);
    c.pixel = Vec2(proj.u, proj.v);
  }
  return p;
}

struct RobustProblem {
  Pose truth;
  std::vector<Correspondence> corr;
  std::vector<bool> outlier;
  double diameter = 0.0;  // bounding-box diagonal of the world points
};

// Points at uniform pixels and depths in [2, 10] seen by a camera inside the
// scene; outliers keep their world point but get a uniform random pixel.
inline RobustProblem robust_problem(std::uint64_t seed, std::size_t n, double outlier_fraction,
                                    double noise_px) {
  Rng rng(seed);
  const Intrinsics k = vga_camera();
  RobustProblem p;
  p.truth = Pose::look_at(Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-7, -5)), Vec3::Zero(),
                          Vec3(0, -1, 0));
  const auto n_out = static_cast<std::size_t>(outlier_fraction * n + 0.5);
  Vec3 lo = Vec3::Constant(1e300), hi = -lo;
  for (std::size_t i = 0; i < n; ++i) {
    const Projection at{rng.uniform(0, 640), rng.uniform(0, 480), rng.uniform(2, 10)};
    Correspondence c;
    c.world = back_project(at, p.truth, k);
    lo = lo.cwiseMin(c.world);
    hi = hi.cwiseMax(c.world);
    const bool out = i < n_out;
    if (out) {
      c.pixel = Vec2(rng.uniform(0, 640), rng.uniform(0, 480));
    } else {
      const auto proj = project(c.world, p.truth, k);
      c.pixel = Vec2(proj.u + noise_px * rng.normal(), proj.v + noise_px * rng.normal());
    }
    p.corr.push_back(c);
    p.outlier.push_back(out);
  }
  p.diameter = (hi - lo).norm();
  return p;
}

inline MlesacConfig vga_mlesac(std::uint64_t seed) {
  MlesacConfig cfg;
  cfg.seed = seed;
  cfg.image_width = 640;
  cfg.image_height = 480;
  return cfg;
}

}  // namespace fixtures
