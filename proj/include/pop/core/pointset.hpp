#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace pop {

// Points with per-point unit normals, in meters. Model output and scan container.
struct PointSet {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  void reserve(std::size_t n) {
    points.reserve(n);
    normals.reserve(n);
  }
  void push_back(const Eigen::Vector3d& p, const Eigen::Vector3d& n) {
    points.push_back(p);
    normals.push_back(n);
  }
};

}  // namespace pop
