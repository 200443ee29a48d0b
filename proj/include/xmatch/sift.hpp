#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "xmatch/image.hpp"

namespace xmatch {

inline constexpr std::size_t kDescriptor2DSize = 128;

struct Keypoint2D {
  double u = 0.0;  // pixels, pixel (i, j) spans [i, i+1) x [j, j+1)
  double v = 0.0;
  double scale = 0.0;        // Gaussian sigma in input pixels
  double orientation = 0.0;  // radians in [-pi, pi)
  double response = 0.0;     // interpolated DoG value
};

struct Detector2DConfig {
  int scales_per_octave = 3;
  double sigma0 = 1.6;
  double input_sigma = 0.5;
  double contrast_threshold = 0.03;
  double edge_ratio = 10.0;
  int border = 5;
  // Keep only the strongest N keypoints; 0 keeps all.
  std::size_t max_keypoints = 0;
};

/// Gaussian and difference-of-Gaussian pyramid of one image.
class ScaleSpace {
 public:
  ScaleSpace(const Image& img, const Detector2DConfig& cfg = {});

  int octaves() const { return static_cast<int>(gauss_.size()); }
  int scales_per_octave() const { return cfg_.scales_per_octave; }
  const Image& gaussian(int octave, int layer) const { return gauss_[octave][layer]; }
  const Image& dog(int octave, int layer) const { return dog_[octave][layer]; }
  double layer_sigma(int layer) const;  // sigma within an octave's own pixel grid
  int width() const { return width_; }
  int height() const { return height_; }
  const Detector2DConfig& config() const { return cfg_; }

 private:
  Detector2DConfig cfg_;
  int width_, height_;
  std::vector<std::vector<Image>> gauss_;
  std::vector<std::vector<Image>> dog_;
};

/// Throws ImageTooSmall when min(width, height) < 32.
std::vector<Keypoint2D> detect_keypoints_2d(const Image& img, const Detector2DConfig& cfg = {});
std::vector<Keypoint2D> detect_keypoints_2d(const ScaleSpace& space);

/// 4x4 cells x 8 orientations over a 12*scale square in the keypoint's
/// rotated frame; clipped at 0.2 and renormalized. All-zero for flat patches.
/// Throws SupportOutOfBounds when more than half the samples leave the image.
/// `clipped`, when given, receives the histogram after clipping and before
/// the final renormalization.
std::vector<float> compute_descriptor_2d(const ScaleSpace& space, const Keypoint2D& kp,
                                         std::vector<double>* clipped = nullptr);
std::vector<float> compute_descriptor_2d(const Image& img, const Keypoint2D& kp);

struct FeatureSet2D {
  std::uint32_t dims = kDescriptor2DSize;
  std::vector<Keypoint2D> keypoints;
  std::vector<float> descriptors;

  std::size_t size() const { return keypoints.size(); }
  std::span<const float> descriptor(std::size_t i) const {
    return {descriptors.data() + i * dims, dims};
  }
};

/// Detection plus description; keypoints whose support leaves the image are dropped.
FeatureSet2D extract_features_2d(const Image& img, const Detector2DConfig& cfg = {});

/// Bilinear sample with reflected borders.
double sample_bilinear(const Image& img, double x, double y);

/// Separable Gaussian blur with reflected borders.
Image gaussian_blur(const Image& img, double sigma);

}  // namespace xmatch
