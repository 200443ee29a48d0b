#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace xmatch {

/// Row-major luminance image with values in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int w, int h, float fill = 0.0f)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return pixels.empty(); }
};

/// Binary 8-bit PGM (P5) or PPM (P6, folded to ITU luma).
/// Throws ParseError on malformed data, UnsupportedFormat on other variants.
Image load_image(const std::string& path);

/// Writes an 8-bit P5 file; values are rounded from [0, 1] to [0, 255].
void save_pgm(const std::string& path, const Image& img);

}  // namespace xmatch
