#include "xmatch/spatial_index.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <utility>

namespace xmatch {

namespace {

double box_distance2(const Vec3& q, const Vec3& lo, const Vec3& hi) {
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    double d = 0.0;
    if (q[a] < lo[a]) d = lo[a] - q[a];
    else if (q[a] > hi[a]) d = q[a] - hi[a];
    d2 += d * d;
  }
  return d2;
}

}  // namespace

SpatialIndex::SpatialIndex(std::vector<Vec3> points, std::size_t leaf_size)
    : points_(std::move(points)), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
    build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

std::uint32_t SpatialIndex::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo = points_[order_[begin]];
  node.hi = node.lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    node.lo = node.lo.cwiseMin(points_[order_[i]]);
    node.hi = node.hi.cwiseMax(points_[order_[i]]);
  }
  if (end - begin > leaf_size_) {
    int axis;
    const double extent = (node.hi - node.lo).maxCoeff(&axis);
    if (extent > 0.0) {
      const std::uint32_t mid = begin + (end - begin) / 2;
      auto less = [&](std::uint32_t a, std::uint32_t b) {
        const double va = points_[a][axis], vb = points_[b][axis];
        return va < vb || (va == vb && a < b);
      };
      std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, less);
      node.axis = axis;
      node.split = points_[order_[mid]][axis];
      node.left = build(begin, mid);
      node.right = build(mid, end);
    }
  }
  nodes_[id] = node;
  return id;
}

void SpatialIndex::radius_search(std::uint32_t id, const Vec3& q, double r2,
                                 std::vector<std::uint32_t>& out) const {
  const Node& node = nodes_[id];
  if (box_distance2(q, node.lo, node.hi) > r2) return;
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::uint32_t p = order_[i];
      if (squared_distance(points_[p], q) <= r2) out.push_back(p);
    }
    return;
  }
  radius_search(node.left, q, r2, out);
  radius_search(node.right, q, r2, out);
}

std::vector<std::uint32_t> SpatialIndex::radius(const Vec3& query, double r) const {
  std::vector<std::uint32_t> out;
  if (points_.empty() || !(r >= 0.0)) return out;
  radius_search(0, query, r * r, out);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::uint32_t> SpatialIndex::knn(const Vec3& query, std::size_t k) const {
  std::vector<std::uint32_t> out;
  if (points_.empty() || k == 0) return out;
  using Entry = std::pair<double, std::uint32_t>;
  std::priority_queue<Entry> best;  // max-heap on (d2, index)
  std::vector<std::uint32_t> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (best.size() == k && box_distance2(query, node.lo, node.hi) > best.top().first) continue;
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t p = order_[i];
        const Entry e{squared_distance(points_[p], query), p};
        if (best.size() < k) {
          best.push(e);
        } else if (e < best.top()) {
          best.pop();
          best.push(e);
        }
      }
      continue;
    }
    // Visit the nearer child first.
    const bool left_first = query[node.axis] < node.split;
    stack.push_back(left_first ? node.right : node.left);
    stack.push_back(left_first ? node.left : node.right);
  }
  out.resize(best.size());
  for (std::size_t i = best.size(); i-- > 0;) {
    out[i] = best.top().second;
    best.pop();
  }
  return out;
}

}  // namespace xmatch
