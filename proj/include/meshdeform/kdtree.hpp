// kdtree.hpp — exact nearest-neighbor queries over static 3D point sets.
//
// Used by the Chamfer/normal losses and every point-set metric. Queries are
// exact (pruning only on strictly-greater axis distance) and deterministic:
// ties on squared distance resolve to the lowest point index, matching the
// brute-force oracle in the tests.
#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "meshdeform/geometry.hpp"

namespace meshdeform {

struct NearestHit {
  std::size_t index = 0;
  double sq_dist = std::numeric_limits<double>::infinity();
};

class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    if (points_.empty()) throw std::invalid_argument("KdTree: empty point set");
    order_.resize(points_.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (points_.size() >= kBruteForceLimit) {
      nodes_.reserve(points_.size());
      root_ = build(0, points_.size());
    }
  }

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  NearestHit nearest(const Vec3& query) const {
    NearestHit best;
    if (nodes_.empty()) {
      for (std::size_t i = 0; i < points_.size(); ++i) consider(query, i, best);
      return best;
    }
    search(root_, query, best);
    return best;
  }

 private:
  static constexpr std::size_t kBruteForceLimit = 64;

  struct Node {
    int axis = 0;
    double split = 0.0;
    std::size_t begin = 0, end = 0;  // leaf range into order_
    int left = -1, right = -1;
  };

  void consider(const Vec3& query, std::size_t idx, NearestHit& best) const {
    double d = sq_dist(query, points_[idx]);
    if (d < best.sq_dist || (d == best.sq_dist && idx < best.index)) best = {idx, d};
  }

  int build(std::size_t begin, std::size_t end) {
    Node node;
    if (end - begin <= kLeafSize) {
      node.begin = begin;
      node.end = end;
      // Deterministic leaf scan order (indices ascend → lowest-index ties win).
      std::sort(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                order_.begin() + static_cast<std::ptrdiff_t>(end));
      nodes_.push_back(node);
      return static_cast<int>(nodes_.size()) - 1;
    }
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      const Vec3& p = points_[order_[i]];
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    Vec3 extent = hi - lo;
    node.axis = extent.x >= extent.y ? (extent.x >= extent.z ? 0 : 2) : (extent.y >= extent.z ? 1 : 2);
    std::size_t mid = begin + (end - begin) / 2;
    auto coord = [this, &node](std::size_t idx) { return points_[idx][node.axis]; };
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&coord](std::size_t a, std::size_t b) {
                       double ca = coord(a), cb = coord(b);
                       return ca < cb || (ca == cb && a < b);
                     });
    node.split = coord(order_[mid]);
    std::size_t self = nodes_.size();
    nodes_.push_back(node);
    int left = build(begin, mid);
    int right = build(mid, end);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return static_cast<int>(self);
  }

  void search(int node_idx, const Vec3& query, NearestHit& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(node_idx)];
    if (node.left < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) consider(query, order_[i], best);
      return;
    }
    double delta = query[node.axis] - node.split;
    int near = delta < 0.0 ? node.left : node.right;
    int far = delta < 0.0 ? node.right : node.left;
    search(near, query, best);
    // Visit the far side unless strictly outside the best radius; equality must
    // recurse so equidistant points can claim the lower index.
    if (delta * delta <= best.sq_dist) search(far, query, best);
  }

  static constexpr std::size_t kLeafSize = 16;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Nearest neighbor of every query point: the workhorse behind losses/metrics.
inline std::vector<NearestHit> nearest_all(const KdTree& tree, const std::vector<Vec3>& queries) {
  std::vector<NearestHit> hits(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) hits[i] = tree.nearest(queries[i]);
  return hits;
}

}  // namespace meshdeform
