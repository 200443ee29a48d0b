#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "xmatch/pose.hpp"

namespace xmatch {

namespace {

// Polynomials as ascending coefficient arrays.
using Poly = std::array<double, 5>;

Poly mul(const Poly& a, const Poly& b) {
  Poly r{};
  for (int i = 0; i < 5; ++i)
    for (int j = 0; i + j < 5; ++j) r[i + j] += a[i] * b[j];
  return r;
}

Poly sub(const Poly& a, const Poly& b) {
  Poly r;
  for (int i = 0; i < 5; ++i) r[i] = a[i] - b[i];
  return r;
}

double eval(const Poly& p, double x) {
  double r = 0.0;
  for (int i = 4; i >= 0; --i) r = r * x + p[i];
  return r;
}

double eval_derivative(const Poly& p, double x) {
  double r = 0.0;
  for (int i = 4; i >= 1; --i) r = r * x + i * p[i];
  return r;
}

std::vector<double> real_roots(const Poly& p) {
  double scale = 0.0;
  for (double c : p) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return {};
  int degree = 4;
  while (degree > 0 && std::abs(p[degree]) < 1e-14 * scale) --degree;
  if (degree == 0) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 0; i < degree; ++i) companion(0, i) = -p[degree - 1 - i] / p[degree];
  for (int i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, false);
  std::vector<double> roots;
  for (int i = 0; i < degree; ++i) {
    const auto z = solver.eigenvalues()[i];
    if (std::abs(z.imag()) > 1e-4 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 8; ++it) {
      const double d = eval_derivative(p, x);
      if (d == 0.0) break;
      const double step = eval(p, x) / d;
      x -= step;
      if (std::abs(step) <= 1e-16 * (1.0 + std::abs(x))) break;
    }
    roots.push_back(x);
  }
  return roots;
}

// Newton on the three law-of-cosines equations in the camera distances.
void polish_distances(Vec3& s, const Vec3& cosines, const Vec3& d2) {
  // Pairs: (1,2) -> d2[0] = |P2-P3|^2 with cosines[0] between bearings 2 and 3,
  // (0,2) -> d2[1], (0,1) -> d2[2].
  constexpr int pairs[3][2] = {{1, 2}, {0, 2}, {0, 1}};
  for (int it = 0; it < 10; ++it) {
    Vec3 f;
    Mat3 jac = Mat3::Zero();
    for (int e = 0; e < 3; ++e) {
      const int i = pairs[e][0], j = pairs[e][1];
      f[e] = s[i] * s[i] + s[j] * s[j] - 2.0 * s[i] * s[j] * cosines[e] - d2[e];
      jac(e, i) = 2.0 * s[i] - 2.0 * s[j] * cosines[e];
      jac(e, j) = 2.0 * s[j] - 2.0 * s[i] * cosines[e];
    }
    const Vec3 step = jac.fullPivLu().solve(f);
    if (!step.allFinite()) return;
    s -= step;
    if (step.norm() <= 1e-15 * s.norm()) return;
  }
}

// Rigid transform with cam[i] = R * world[i] + T.
Pose align(const std::array<Vec3, 3>& world, const std::array<Vec3, 3>& cam) {
  const Vec3 cw = (world[0] + world[1] + world[2]) / 3.0;
  const Vec3 cc = (cam[0] + cam[1] + cam[2]) / 3.0;
  Mat3 h = Mat3::Zero();
  for (int i = 0; i < 3; ++i) h += (cam[i] - cc) * (world[i] - cw).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  Pose pose;
  pose.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  pose.translation = cc - pose.rotation * cw;
  return pose;
}

}  // namespace

double reprojection_error(const Pose& pose, const Intrinsics& k, const Correspondence& c) {
  const Vec3 pc = pose.transform(c.world);
  if (!(pc.z() > 1e-12)) return std::numeric_limits<double>::infinity();
  const double u = k.fx * pc.x() / pc.z() + k.skew * pc.y() / pc.z() + k.cx;
  const double v = k.fy * pc.y() / pc.z() + k.cy;
  return std::hypot(u - c.pixel.x(), v - c.pixel.y());
}

std::vector<Pose> p3p_solve(const Correspondence& c1, const Correspondence& c2,
                            const Correspondence& c3, const Intrinsics& k) {
  const std::array<Vec3, 3> world{c1.world, c2.world, c3.world};
  const double area = 0.5 * (world[1] - world[0]).cross(world[2] - world[0]).norm();
  if (!(area >= 1e-9)) {
    throw Error(ErrorKind::DegenerateConfiguration, "world points are collinear");
  }
  const std::array<Vec3, 3> j{k.bearing(c1.pixel.x(), c1.pixel.y()),
                              k.bearing(c2.pixel.x(), c2.pixel.y()),
                              k.bearing(c3.pixel.x(), c3.pixel.y())};
  const double cos_a = j[1].dot(j[2]);
  const double cos_b = j[0].dot(j[2]);
  const double cos_g = j[0].dot(j[1]);

  // Work in units of b = |P1 - P3|.
  const double b_len = (world[0] - world[2]).norm();
  const double a2 = (world[1] - world[2]).squaredNorm() / (b_len * b_len);
  const double cc2 = (world[0] - world[1]).squaredNorm() / (b_len * b_len);

  // With s2 = u s1, s3 = v s1 the distance system reduces to two quadratics in u:
  //   u^2 + B1(v) u + C1(v) = 0,  u^2 + B2 u + C2(v) = 0.
  const Poly b1{0.0, -2.0 * cos_a, 0.0, 0.0, 0.0};
  const Poly b2{-2.0 * cos_g, 0.0, 0.0, 0.0, 0.0};
  const Poly q1{-a2, 2.0 * a2 * cos_b, 1.0 - a2, 0.0, 0.0};
  const Poly q2{1.0 - cc2, 2.0 * cc2 * cos_b, -cc2, 0.0, 0.0};
  const Poly dc = sub(q2, q1);
  const Poly resultant = sub(mul(dc, dc), mul(sub(b2, b1), sub(mul(b1, q2), mul(b2, q1))));

  const Vec3 cosines(cos_a, cos_b, cos_g);
  const Vec3 d2((world[1] - world[2]).squaredNorm(), (world[0] - world[2]).squaredNorm(),
                (world[0] - world[1]).squaredNorm());

  std::vector<Pose> out;
  std::vector<double> residual;
  for (double v : real_roots(resultant)) {
    if (!(v > 0.0)) continue;
    // Candidate u values; the exactness check below filters them.
    std::vector<double> us;
    const double denom = eval(b1, v) - b2[0];
    if (std::abs(denom) > 1e-10) us.push_back(eval(dc, v) / denom);
    const double disc = b2[0] * b2[0] - 4.0 * eval(q2, v);
    if (disc >= 0.0) {
      us.push_back((-b2[0] + std::sqrt(disc)) / 2.0);
      us.push_back((-b2[0] - std::sqrt(disc)) / 2.0);
    }
    const double s1_sq = 1.0 / (1.0 + v * v - 2.0 * v * cos_b);
    if (!(s1_sq > 0.0)) continue;
    for (double u : us) {
      if (!(u > 0.0)) continue;
      const double s1 = std::sqrt(s1_sq) * b_len;
      Vec3 s(s1, u * s1, v * s1);
      polish_distances(s, cosines, d2);
      if (!(s.minCoeff() > 0.0) || !s.allFinite()) continue;
      const std::array<Vec3, 3> cam{s[0] * j[0], s[1] * j[1], s[2] * j[2]};
      const Pose pose = align(world, cam);
      if (!pose.rotation.allFinite() || !pose.translation.allFinite()) continue;
      const double worst = std::max({reprojection_error(pose, k, c1), reprojection_error(pose, k, c2),
                                     reprojection_error(pose, k, c3)});
      if (!(worst < 1e-6)) continue;
      bool duplicate = false;
      for (std::size_t o = 0; o < out.size(); ++o) {
        if ((out[o].rotation - pose.rotation).norm() < 1e-7 &&
            (out[o].translation - pose.translation).norm() < 1e-7 * (1.0 + pose.translation.norm())) {
          duplicate = true;
          if (worst < residual[o]) {
            out[o] = pose;
            residual[o] = worst;
          }
        }
      }
      if (!duplicate) {
        out.push_back(pose);
        residual.push_back(worst);
      }
    }
  }
  if (out.empty()) throw Error(ErrorKind::NoRealSolution, "no real pose reprojects the triple");
  return out;
}

}  // namespace xmatch
