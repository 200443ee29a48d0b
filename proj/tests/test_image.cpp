#include <cmath>
#include <numbers>

#include "doctest.h"
#include "support.hpp"
#include "xmatch/error.hpp"
#include "xmatch/image.hpp"
#include "xmatch/sift.hpp"

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

Image blob_image(int w, int h, double cx, double cy, double sigma) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      img.at(x, y) = static_cast<float>(0.05 + 0.9 * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma)));
    }
  return img;
}

Image textured(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  Image img(w, h, 0.3f);
  for (int b = 0; b < 40; ++b) {
    const double cx = rng.uniform(0, w), cy = rng.uniform(0, h), s = rng.uniform(1.5, 6.0);
    const double a = rng.uniform(-0.4, 0.4);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
        img.at(x, y) += static_cast<float>(a * std::exp(-(dx * dx + dy * dy) / (2 * s * s)));
      }
  }
  return img;
}

// 90 degrees clockwise: pixel (x, y) moves to (h - 1 - y, x).
Image rotate90(const Image& img) {
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(img.height - 1 - y, x) = img.at(x, y);
  return out;
}

double l2(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("load_image: PGM and PPM examples") {
  testing::TempDir dir("images");
  testing::write_bytes(dir.file("a.pgm"), std::string("P5\n2 2\n255\n") + std::string("\x00\xff\x80\x40", 4));
  const auto img = load_image(dir.file("a.pgm"));
  REQUIRE(img.width == 2);
  CHECK(img.pixels[0] == 0.0f);
  CHECK(img.pixels[1] == 1.0f);
  CHECK(img.pixels[2] == doctest::Approx(0.50196).epsilon(1e-5));
  CHECK(img.pixels[3] == doctest::Approx(0.25098).epsilon(1e-5));

  testing::write_bytes(dir.file("w.ppm"), std::string("P6\n# comment\n1 1\n255\n\xff\xff\xff"));
  CHECK(load_image(dir.file("w.ppm")).pixels[0] == doctest::Approx(1.0).epsilon(1e-6));

  testing::write_bytes(dir.file("short.pgm"), std::string("P5\n4 4\n255\n") + std::string(15, '\x10'));
  CHECK(kind_of([&] { load_image(dir.file("short.pgm")); }) == ErrorKind::ParseError);
  testing::write_bytes(dir.file("ascii.pgm"), "P2\n1 1\n255\n0\n");
  CHECK(kind_of([&] { load_image(dir.file("ascii.pgm")); }) == ErrorKind::UnsupportedFormat);

  Image g = textured(40, 33, 1);
  for (auto& p : g.pixels) p = std::clamp(p, 0.0f, 1.0f);
  save_pgm(dir.file("g.pgm"), g);
  const auto back = load_image(dir.file("g.pgm"));
  for (std::size_t i = 0; i < g.pixels.size(); ++i) CHECK(std::abs(back.pixels[i] - g.pixels[i]) <= 0.5f / 255 + 1e-6f);
}

TEST_CASE("detection: constant image and size guard") {
  CHECK(detect_keypoints_2d(Image(64, 64, 0.5f)).empty());
  CHECK(kind_of([] { detect_keypoints_2d(Image(31, 64, 0.5f)); }) == ErrorKind::ImageTooSmall);
}

TEST_CASE("detection: single Gaussian blob") {
  const auto kps = detect_keypoints_2d(blob_image(64, 64, 32.5, 32.5, 4.0));
  REQUIRE(kps.size() == 1);
  CHECK(std::hypot(kps[0].u - 32.5, kps[0].v - 32.5) < 1.0);
  CHECK(kps[0].scale > 2.0);
  CHECK(kps[0].scale < 8.0);
}

TEST_CASE("detection commutes with 90 degree rotation") {
  const Image img = textured(129, 97, 5);
  const Image rot = rotate90(img);
  const auto a = detect_keypoints_2d(img);
  const auto b = detect_keypoints_2d(rot);
  REQUIRE(a.size() > 10);
  CHECK(a.size() == b.size());
  for (const auto& k : a) {
    const double u = img.height - k.v, v = k.u;
    double best = 1e9;
    for (const auto& r : b) best = std::min(best, std::hypot(r.u - u, r.v - v));
    CHECK(best < 0.5);
  }
}

TEST_CASE("detection count is monotone in the contrast threshold") {
  const Image img = textured(128, 96, 9);
  std::size_t prev = SIZE_MAX;
  for (double t : {0.005, 0.01, 0.02, 0.03, 0.05, 0.08, 0.12}) {
    Detector2DConfig cfg;
    cfg.contrast_threshold = t;
    const auto n = detect_keypoints_2d(img, cfg).size();
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("descriptor: sentinel, clipping and normalization") {
  const ScaleSpace flat(Image(64, 64, 0.4f));
  CHECK(std::all_of(compute_descriptor_2d(flat, {32, 32, 3, 0, 0}).begin(),
                    compute_descriptor_2d(flat, {32, 32, 3, 0, 0}).end(), [](float v) { return v == 0.0f; }));

  const Image img = textured(128, 96, 3);
  const ScaleSpace space(img);
  const auto kps = detect_keypoints_2d(space);
  REQUIRE(!kps.empty());
  int described = 0;
  for (const auto& kp : kps) {
    std::vector<double> clipped;
    std::vector<float> d;
    try {
      d = compute_descriptor_2d(space, kp, &clipped);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::SupportOutOfBounds);
      continue;
    }
    ++described;
    REQUIRE(d.size() == kDescriptor2DSize);
    double n = 0;
    for (float v : d) n += double(v) * v;
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
    for (double c : clipped) CHECK(c <= 0.2 + 1e-6);
  }
  CHECK(described > 0);
  CHECK(kind_of([&] { compute_descriptor_2d(space, {1, 1, 20, 0, 0}); }) == ErrorKind::SupportOutOfBounds);
}

TEST_CASE("descriptor: invariant to affine intensity change") {
  const Image img = textured(128, 96, 4);
  Image affine = img;
  for (auto& p : affine.pixels) p = 0.6f * p + 0.25f;
  const auto kps = detect_keypoints_2d(img);
  int compared = 0;
  for (const auto& kp : kps) {
    std::vector<float> a, b;
    try {
      a = compute_descriptor_2d(img, kp);
      b = compute_descriptor_2d(affine, kp);
    } catch (const Error&) {
      continue;
    }
    ++compared;
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-3);
  }
  CHECK(compared > 0);
}

TEST_CASE("descriptor: follows keypoint orientation under rotation") {
  const Image img = textured(129, 97, 6);
  const Image rot = rotate90(img);
  const ScaleSpace sa(img), sb(rot);
  int compared = 0;
  for (const auto& kp : detect_keypoints_2d(sa)) {
    Keypoint2D turned = kp;
    turned.u = img.height - kp.v;
    turned.v = kp.u;
    turned.orientation = std::remainder(kp.orientation + std::numbers::pi / 2, 2 * std::numbers::pi);
    std::vector<float> a, b;
    try {
      a = compute_descriptor_2d(sa, kp);
      b = compute_descriptor_2d(sb, turned);
    } catch (const Error&) {
      continue;
    }
    ++compared;
    CHECK(l2(a, b) < 0.15);
  }
  CHECK(compared > 5);
}

TEST_CASE("feature extraction is deterministic") {
  const Image img = textured(100, 80, 12);
  const auto a = extract_features_2d(img);
  const auto b = extract_features_2d(img);
  CHECK(a.descriptors == b.descriptors);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.keypoints[i].u == b.keypoints[i].u);
    CHECK(a.keypoints[i].orientation == b.keypoints[i].orientation);
  }
}
