#include "xmatch/sift.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "xmatch/error.hpp"
#include "xmatch/parallel.hpp"

namespace xmatch {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Reflect-101 border handling: ... 2 1 | 0 1 2 ... n-1 | n-2 ...
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

Image downsample(const Image& img) {
  Image out(std::max(1, (img.width + 1) / 2), std::max(1, (img.height + 1) / 2));
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(2 * x, 2 * y);
  return out;
}

double wrap_angle(double a) {
  a = std::fmod(a + std::numbers::pi, kTwoPi);
  if (a < 0) a += kTwoPi;
  return a - std::numbers::pi;
}

struct Candidate {
  int octave, layer, x, y;
  Keypoint2D kp;
};

// Octave/layer whose Gaussian level best matches an absolute sigma.
std::pair<int, int> level_for_scale(const ScaleSpace& space, double scale) {
  const int s = space.scales_per_octave();
  const double t = std::log2(scale / space.config().sigma0) * s;
  int octave = static_cast<int>(std::floor((t - 0.5) / s));
  octave = std::clamp(octave, 0, space.octaves() - 1);
  int layer = static_cast<int>(std::lround(t - octave * s));
  layer = std::clamp(layer, 0, s + 2);
  return {octave, layer};
}

double dominant_orientation(const Image& g, double x, double y, double sigma) {
  constexpr int kBins = 36;
  std::array<double, kBins> hist{};
  const double sw = 1.5 * sigma;
  const int radius = static_cast<int>(std::lround(3.0 * sw));
  const int cx = static_cast<int>(std::lround(x)), cy = static_cast<int>(std::lround(y));
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const int px = cx + dx, py = cy + dy;
      if (px <= 0 || py <= 0 || px >= g.width - 1 || py >= g.height - 1) continue;
      const double gx = g.at(px + 1, py) - g.at(px - 1, py);
      const double gy = g.at(px, py + 1) - g.at(px, py - 1);
      const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sw * sw));
      const double angle = std::atan2(gy, gx);  // (-pi, pi]
      int bin = static_cast<int>(std::lround((angle + std::numbers::pi) / kTwoPi * kBins));
      bin = ((bin % kBins) + kBins) % kBins;
      hist[bin] += w * std::hypot(gx, gy);
    }
  }
  std::array<double, kBins> smooth{};
  for (int i = 0; i < kBins; ++i) {
    smooth[i] = (hist[(i + kBins - 2) % kBins] + hist[(i + 2) % kBins]) / 16.0 +
                (hist[(i + kBins - 1) % kBins] + hist[(i + 1) % kBins]) * 4.0 / 16.0 +
                hist[i] * 6.0 / 16.0;
  }
  int peak = 0;
  for (int i = 1; i < kBins; ++i)
    if (smooth[i] > smooth[peak]) peak = i;
  const double l = smooth[(peak + kBins - 1) % kBins], r = smooth[(peak + 1) % kBins];
  const double c = smooth[peak];
  const double denom = l - 2.0 * c + r;
  const double offset = denom != 0.0 ? 0.5 * (l - r) / denom : 0.0;
  return wrap_angle((peak + offset) * kTwoPi / kBins - std::numbers::pi);
}

}  // namespace

double sample_bilinear(const Image& img, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
  const double ax = x - fx, ay = y - fy;
  const int xa = reflect(x0, img.width), xb = reflect(x0 + 1, img.width);
  const int ya = reflect(y0, img.height), yb = reflect(y0 + 1, img.height);
  const double top = (1.0 - ax) * img.at(xa, ya) + ax * img.at(xb, ya);
  const double bottom = (1.0 - ax) * img.at(xa, yb) + ax * img.at(xb, yb);
  return (1.0 - ay) * top + ay * bottom;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  Image tmp(img.width, img.height), out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * img.at(reflect(x + i, img.width), y);
      tmp.at(x, y) = static_cast<float>(acc);
    }
  }
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * tmp.at(x, reflect(y + i, img.height));
      out.at(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

ScaleSpace::ScaleSpace(const Image& img, const Detector2DConfig& cfg)
    : cfg_(cfg), width_(img.width), height_(img.height) {
  if (std::min(img.width, img.height) < 32) {
    throw Error(ErrorKind::ImageTooSmall, "minimum side is 32 pixels");
  }
  if (cfg_.scales_per_octave < 1) throw Error(ErrorKind::InvalidArgument, "scales_per_octave < 1");
  const int n_oct = std::max(
      1, static_cast<int>(std::floor(std::log2(std::min(img.width, img.height)))) - 3);
  const int s = cfg_.scales_per_octave;
  const double base_blur =
      std::sqrt(std::max(cfg_.sigma0 * cfg_.sigma0 - cfg_.input_sigma * cfg_.input_sigma, 0.01));
  gauss_.resize(n_oct);
  dog_.resize(n_oct);
  for (int o = 0; o < n_oct; ++o) {
    auto& g = gauss_[o];
    g.reserve(s + 3);
    g.push_back(o == 0 ? gaussian_blur(img, base_blur) : downsample(gauss_[o - 1][s]));
    for (int i = 1; i < s + 3; ++i) {
      const double prev = layer_sigma(i - 1), cur = layer_sigma(i);
      g.push_back(gaussian_blur(g.back(), std::sqrt(cur * cur - prev * prev)));
    }
    for (int i = 0; i + 1 < s + 3; ++i) {
      Image d(g[i].width, g[i].height);
      for (std::size_t p = 0; p < d.pixels.size(); ++p) d.pixels[p] = g[i + 1].pixels[p] - g[i].pixels[p];
      dog_[o].push_back(std::move(d));
    }
  }
}

double ScaleSpace::layer_sigma(int layer) const {
  return cfg_.sigma0 * std::pow(2.0, static_cast<double>(layer) / cfg_.scales_per_octave);
}

std::vector<Keypoint2D> detect_keypoints_2d(const ScaleSpace& space) {
  const auto& cfg = space.config();
  const int s = cfg.scales_per_octave;
  const double prefilter = 0.5 * cfg.contrast_threshold / s;
  const double edge = (cfg.edge_ratio + 1.0) * (cfg.edge_ratio + 1.0) / cfg.edge_ratio;
  std::vector<Candidate> found;

  for (int o = 0; o < space.octaves(); ++o) {
    const double step = std::ldexp(1.0, o);
    for (int i = 1; i <= s; ++i) {
      const Image& prev = space.dog(o, i - 1);
      const Image& cur = space.dog(o, i);
      const Image& next = space.dog(o, i + 1);
      const int w = cur.width, h = cur.height;
      const int b = std::max(1, cfg.border);
      for (int y = b; y < h - b; ++y) {
        for (int x = b; x < w - b; ++x) {
          const float val = cur.at(x, y);
          if (std::abs(val) <= prefilter) continue;
          bool is_max = true, is_min = true;
          for (const Image* im : {&prev, &cur, &next}) {
            for (int dy = -1; dy <= 1 && (is_max || is_min); ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                if (im == &cur && dx == 0 && dy == 0) continue;
                const float nb = im->at(x + dx, y + dy);
                if (nb >= val) is_max = false;
                if (nb <= val) is_min = false;
              }
            }
          }
          if (!is_max && !is_min) continue;

          // One quadratic fit in (x, y, scale).
          const double dx = 0.5 * (cur.at(x + 1, y) - cur.at(x - 1, y));
          const double dy = 0.5 * (cur.at(x, y + 1) - cur.at(x, y - 1));
          const double ds = 0.5 * (next.at(x, y) - prev.at(x, y));
          const double dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - 2.0 * val;
          const double dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - 2.0 * val;
          const double dss = next.at(x, y) + prev.at(x, y) - 2.0 * val;
          const double dxy = 0.25 * (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) -
                                     cur.at(x + 1, y - 1) + cur.at(x - 1, y - 1));
          const double dxs = 0.25 * (next.at(x + 1, y) - next.at(x - 1, y) -
                                     prev.at(x + 1, y) + prev.at(x - 1, y));
          const double dys = 0.25 * (next.at(x, y + 1) - next.at(x, y - 1) -
                                     prev.at(x, y + 1) + prev.at(x, y - 1));
          Eigen::Matrix3d hess;
          hess << dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss;
          const Eigen::Vector3d grad(dx, dy, ds);
          Eigen::Vector3d off = Eigen::Vector3d::Zero();
          Eigen::FullPivLU<Eigen::Matrix3d> lu(hess);
          if (lu.isInvertible()) off = -lu.solve(grad);
          if (!off.allFinite() || off.cwiseAbs().maxCoeff() > 1.0) continue;
          const double contrast = val + 0.5 * grad.dot(off);
          if (std::abs(contrast) * s < cfg.contrast_threshold) continue;
          const double tr = dxx + dyy;
          const double det = dxx * dyy - dxy * dxy;
          if (det <= 0.0 || tr * tr / det >= edge) continue;

          Candidate c{o, i, x, y, {}};
          c.kp.u = std::clamp((x + off.x()) * step + 0.5, 0.0, std::nextafter(space.width(), 0.0));
          c.kp.v = std::clamp((y + off.y()) * step + 0.5, 0.0, std::nextafter(space.height(), 0.0));
          const double oct_sigma = cfg.sigma0 * std::pow(2.0, (i + off.z()) / s);
          c.kp.scale = oct_sigma * step;
          c.kp.response = contrast;
          found.push_back(c);
        }
      }
    }
  }

  parallel_for(found.size(), [&](std::size_t k) {
    Candidate& c = found[k];
    const double step = std::ldexp(1.0, c.octave);
    c.kp.orientation = dominant_orientation(space.gaussian(c.octave, c.layer), (c.kp.u - 0.5) / step,
                                            (c.kp.v - 0.5) / step, c.kp.scale / step);
  });

  std::stable_sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
    const double ra = std::abs(a.kp.response), rb = std::abs(b.kp.response);
    if (ra != rb) return ra > rb;
    if (a.octave != b.octave) return a.octave < b.octave;
    if (a.layer != b.layer) return a.layer < b.layer;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  if (cfg.max_keypoints > 0 && found.size() > cfg.max_keypoints) found.resize(cfg.max_keypoints);
  std::vector<Keypoint2D> out;
  out.reserve(found.size());
  for (const auto& c : found) out.push_back(c.kp);
  return out;
}

std::vector<Keypoint2D> detect_keypoints_2d(const Image& img, const Detector2DConfig& cfg) {
  return detect_keypoints_2d(ScaleSpace(img, cfg));
}

std::vector<float> compute_descriptor_2d(const ScaleSpace& space, const Keypoint2D& kp,
                                         std::vector<double>* clipped) {
  constexpr int kCells = 4, kOri = 8, kSamples = 16;
  if (!(kp.scale > 0.0)) throw Error(ErrorKind::InvalidArgument, "keypoint scale must be positive");
  const auto [octave, layer] = level_for_scale(space, kp.scale);
  const Image& g = space.gaussian(octave, layer);
  const double step = std::ldexp(1.0, octave);
  const double xo = (kp.u - 0.5) / step, yo = (kp.v - 0.5) / step;
  const double sigma = kp.scale / step;
  const double cell = 3.0 * sigma;
  const double half = 0.5 * kCells * cell;
  const double c = std::cos(kp.orientation), s = std::sin(kp.orientation);
  const double weight_sigma = 0.5 * kCells;  // in cell units

  std::array<double, kCells * kCells * kOri> hist{};
  int outside = 0;
  double total_mag = 0.0;
  for (int a = 0; a < kSamples; ++a) {
    for (int b = 0; b < kSamples; ++b) {
      const double lx = ((b + 0.5) / kSamples) * 2.0 * half - half;
      const double ly = ((a + 0.5) / kSamples) * 2.0 * half - half;
      const double x = xo + c * lx - s * ly;
      const double y = yo + s * lx + c * ly;
      if (x < 0.0 || y < 0.0 || x > g.width - 1 || y > g.height - 1) ++outside;
      const double gx = 0.5 * (sample_bilinear(g, x + 1.0, y) - sample_bilinear(g, x - 1.0, y));
      const double gy = 0.5 * (sample_bilinear(g, x, y + 1.0) - sample_bilinear(g, x, y - 1.0));
      // Gradient expressed in the keypoint frame.
      const double rx = c * gx + s * gy;
      const double ry = -s * gx + c * gy;
      const double mag = std::hypot(rx, ry);
      if (mag == 0.0) continue;
      const double cx = lx / cell + 0.5 * kCells - 0.5;
      const double cy = ly / cell + 0.5 * kCells - 0.5;
      const double ux = lx / cell, uy = ly / cell;
      const double w = mag * std::exp(-(ux * ux + uy * uy) / (2.0 * weight_sigma * weight_sigma));
      total_mag += mag;
      double ang = std::atan2(ry, rx);
      if (ang < 0) ang += kTwoPi;
      const double ob = ang / kTwoPi * kOri;
      const int x0 = static_cast<int>(std::floor(cx)), y0 = static_cast<int>(std::floor(cy));
      const int o0 = static_cast<int>(std::floor(ob));
      const double fx = cx - x0, fy = cy - y0, fo = ob - o0;
      for (int iy = 0; iy < 2; ++iy) {
        const int yy = y0 + iy;
        if (yy < 0 || yy >= kCells) continue;
        const double wy = iy ? fy : 1.0 - fy;
        for (int ix = 0; ix < 2; ++ix) {
          const int xx = x0 + ix;
          if (xx < 0 || xx >= kCells) continue;
          const double wx = ix ? fx : 1.0 - fx;
          for (int io = 0; io < 2; ++io) {
            const int oo = (o0 + io) % kOri;
            const double wo = io ? fo : 1.0 - fo;
            hist[(yy * kCells + xx) * kOri + oo] += w * wx * wy * wo;
          }
        }
      }
    }
  }
  if (outside * 2 > kSamples * kSamples) {
    throw Error(ErrorKind::SupportOutOfBounds, "more than half of the descriptor support is outside");
  }
  std::vector<float> out(kDescriptor2DSize, 0.0f);
  // Flat patches only produce bilinear round-off gradients.
  if (total_mag < 1e-7 * kSamples * kSamples) return out;
  auto normalize = [&]() {
    double n = 0.0;
    for (double v : hist) n += v * v;
    n = std::sqrt(n);
    if (n > 0.0)
      for (double& v : hist) v /= n;
    return n;
  };
  if (normalize() == 0.0) return out;
  for (double& v : hist) v = std::min(v, 0.2);
  if (clipped) clipped->assign(hist.begin(), hist.end());
  normalize();
  for (std::size_t k = 0; k < hist.size(); ++k) out[k] = static_cast<float>(hist[k]);
  return out;
}

std::vector<float> compute_descriptor_2d(const Image& img, const Keypoint2D& kp) {
  return compute_descriptor_2d(ScaleSpace(img), kp);
}

FeatureSet2D extract_features_2d(const Image& img, const Detector2DConfig& cfg) {
  const ScaleSpace space(img, cfg);
  const auto keypoints = detect_keypoints_2d(space);
  std::vector<std::vector<float>> descs(keypoints.size());
  parallel_for(keypoints.size(), [&](std::size_t i) {
    try {
      descs[i] = compute_descriptor_2d(space, keypoints[i]);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::SupportOutOfBounds) throw;
    }
  });
  FeatureSet2D out;
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    if (descs[i].empty()) continue;
    out.keypoints.push_back(keypoints[i]);
    out.descriptors.insert(out.descriptors.end(), descs[i].begin(), descs[i].end());
  }
  return out;
}

}  // namespace xmatch
