#include "pop/core/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pop {

namespace {
constexpr std::size_t kLeafSize = 8;
}

KdTree::KdTree(std::vector<Eigen::Vector3d> points) : points_(std::move(points)) {
  if (points_.empty()) throw std::invalid_argument("nearest-neighbor index needs at least one point");
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * points_.size() / kLeafSize + 1);
  build(0, points_.size());
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;

  Eigen::Vector3d lo = points_[order_[begin]], hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all coincident: keep as one leaf

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  return id;
}

void KdTree::search(std::size_t node, const Eigen::Vector3d& q, Neighbor& best) const {
  const NodeRec& n = nodes_[node];
  if (n.left == 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      const std::size_t idx = order_[i];
      const double d = squared_distance(points_[idx], q);
      if (d < best.sq_dist || (d == best.sq_dist && idx < best.index)) best = {idx, d};
    }
    return;
  }
  // Left holds values <= split, right holds values >= split.
  const double diff = q[n.axis] - n.split;
  const std::size_t near = diff <= 0 ? n.left : n.right;
  const std::size_t far = diff <= 0 ? n.right : n.left;
  search(near, q, best);
  // Equality still has to be visited: a tie may hide a smaller index.
  if (diff * diff <= best.sq_dist) search(far, q, best);
}

Neighbor KdTree::nearest(const Eigen::Vector3d& q) const {
  Neighbor best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
  search(0, q, best);
  return best;
}

Neighbor brute_force_nearest(const std::vector<Eigen::Vector3d>& points, const Eigen::Vector3d& q) {
  if (points.empty()) throw std::invalid_argument("nearest-neighbor search over an empty set");
  Neighbor best{0, squared_distance(points[0], q)};
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double d = squared_distance(points[i], q);
    if (d < best.sq_dist) best = {i, d};
  }
  return best;
}

}  // namespace pop
