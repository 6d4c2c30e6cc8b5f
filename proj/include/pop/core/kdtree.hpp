#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace pop {

struct Neighbor {
  std::size_t index = 0;
  double sq_dist = 0.0;
};

// Static 3-d tree over a point set. Queries return the exact nearest point;
// among equidistant points the one with the smallest index wins, so results
// match an exhaustive scan bit for bit.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::vector<Eigen::Vector3d> points);

  Neighbor nearest(const Eigen::Vector3d& q) const;
  std::size_t size() const { return points_.size(); }
  const std::vector<Eigen::Vector3d>& points() const { return points_; }

 private:
  struct NodeRec {
    // Leaf when left == 0 (the root is never a child).
    std::size_t begin, end;
    std::size_t left = 0, right = 0;
    int axis = 0;
    double split = 0.0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search(std::size_t node, const Eigen::Vector3d& q, Neighbor& best) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<std::size_t> order_;
  std::vector<NodeRec> nodes_;
};

// Exhaustive scan with the same tie rule; used as a reference.
Neighbor brute_force_nearest(const std::vector<Eigen::Vector3d>& points, const Eigen::Vector3d& q);

inline double squared_distance(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace pop
