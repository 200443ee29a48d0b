#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "xmatch/geometry.hpp"

namespace xmatch {

/// Static k-d tree over a point set. Query results are exactly the brute-force
/// sets: radius() is inclusive (squared distance <= r^2) and ordered by point
/// index; knn() is ordered by (squared distance, index).
class SpatialIndex {
 public:
  explicit SpatialIndex(std::vector<Vec3> points, std::size_t leaf_size = 16);

  std::vector<std::uint32_t> radius(const Vec3& query, double r) const;
  std::vector<std::uint32_t> knn(const Vec3& query, std::size_t k) const;

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

 private:
  struct Node {
    // Leaf when axis < 0; children otherwise.
    int axis = -1;
    double split = 0.0;
    std::uint32_t left = 0, right = 0;
    std::uint32_t begin = 0, end = 0;
    Vec3 lo, hi;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end);
  void radius_search(std::uint32_t node, const Vec3& q, double r2,
                     std::vector<std::uint32_t>& out) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

// Squared distance used by the index and by brute-force checks alike.
inline double squared_distance(const Vec3& a, const Vec3& b) { return (a - b).squaredNorm(); }

}  // namespace xmatch
