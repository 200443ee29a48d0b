#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "xmatch/geometry.hpp"

namespace xmatch {

/// Point positions with a per-point luminance in [0, 1].
struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<double> intensities;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }
  void add(const Vec3& position, double intensity) {
    positions.push_back(position);
    intensities.push_back(intensity);
  }
  // Throws InvalidArgument on non-finite positions, intensities outside
  // [0, 1] or mismatched array lengths.
  void validate() const;
};

inline constexpr double kDefaultPlyIntensity = 0.5;

/// Reads ASCII or binary little-endian PLY. Vertex properties x, y, z are
/// required; `intensity` is used when present, otherwise r/g/b (or
/// red/green/blue) are folded to luma, otherwise intensity defaults to 0.5.
/// Integer-typed channels are normalized by their type range.
PointCloud load_ply(const std::string& path);

/// Writes binary little-endian PLY with double x/y/z and float intensity.
void save_ply(const std::string& path, const PointCloud& cloud);

}  // namespace xmatch
