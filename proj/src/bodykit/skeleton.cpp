#include "pop/bodykit/skeleton.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/Geometry>

#include "pop/core/error.hpp"

namespace pop::body {

namespace {

// Orthonormal frame whose z axis is the unit vector d.
Eigen::Matrix3d frame_from_axis(const Eigen::Vector3d& d) {
  const Eigen::Vector3d a = std::abs(d.z()) < 0.9 ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitX();
  const Eigen::Vector3d x = (a - a.dot(d) * d).normalized();
  const Eigen::Vector3d y = d.cross(x);
  Eigen::Matrix3d b;
  b.col(0) = x;
  b.col(1) = y;
  b.col(2) = d;
  return b;
}

}  // namespace

Skeleton::Skeleton(std::vector<Joint> joints) : joints_(std::move(joints)) {
  if (joints_.empty()) throw std::invalid_argument("skeleton has no joints");
  int roots = 0;
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    const Joint& j = joints_[i];
    if (j.parent == -1) {
      ++roots;
    } else if (j.parent < 0 || j.parent >= static_cast<int>(i)) {
      throw std::invalid_argument("skeleton joint '" + j.name + "' must come after its parent");
    }
    if (!(j.radius > 0) || !(j.length > 0)) {
      throw std::invalid_argument("skeleton joint '" + j.name + "' needs positive radius and length");
    }
    for (std::size_t k = 0; k < i; ++k) {
      if (joints_[k].name == j.name) throw std::invalid_argument("duplicate joint name '" + j.name + "'");
    }
  }
  if (roots != 1 || joints_[0].parent != -1) throw std::invalid_argument("skeleton needs exactly one root, first");

  first_child_.assign(joints_.size(), -1);
  for (std::size_t i = joints_.size(); i-- > 1;) first_child_[joints_[i].parent] = static_cast<int>(i);

  for (std::size_t i = 0; i < joints_.size(); ++i) {
    const Eigen::Vector3d dir = first_child_[i] >= 0 ? joints_[first_child_[i]].offset : joints_[i].offset;
    if (dir.norm() < 1e-9) throw std::invalid_argument("bone '" + joints_[i].name + "' has no axis direction");
    bone_frames_.push_back(frame_from_axis(dir.normalized()));
  }
}

Skeleton Skeleton::proxy() {
  using V = Eigen::Vector3d;
  return Skeleton({
      {"pelvis", -1, V(0, 0, 0), 0.12, 0.20},
      {"spine", 0, V(0, 0.20, 0), 0.11, 0.30},
      {"head", 1, V(0, 0.32, 0), 0.09, 0.22},
      {"upperarm_l", 1, V(0.17, 0.25, 0), 0.05, 0.28},
      {"forearm_l", 3, V(0.30, 0, 0), 0.04, 0.25},
      {"upperarm_r", 1, V(-0.17, 0.25, 0), 0.05, 0.28},
      {"forearm_r", 5, V(-0.30, 0, 0), 0.04, 0.25},
      {"thigh_l", 0, V(0.09, 0, 0), 0.08, 0.42},
      {"shin_l", 7, V(0, -0.44, 0), 0.055, 0.40},
      {"thigh_r", 0, V(-0.09, 0, 0), 0.08, 0.42},
      {"shin_r", 9, V(0, -0.44, 0), 0.055, 0.40},
  });
}

int Skeleton::find(const std::string& name) const {
  for (std::size_t i = 0; i < joints_.size(); ++i) {
    if (joints_[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

Skeleton Skeleton::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<Joint> joints;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    Joint j;
    if (!(ls >> j.name)) continue;
    if (!(ls >> j.parent >> j.offset.x() >> j.offset.y() >> j.offset.z() >> j.radius >> j.length)) {
      throw ParseError("expected 'name parent ox oy oz radius length'", line_no);
    }
    std::string extra;
    if (ls >> extra) throw ParseError("trailing token '" + extra + "'", line_no);
    joints.push_back(j);
  }
  try {
    return Skeleton(std::move(joints));
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), line_no);
  }
}

std::string Skeleton::serialize() const {
  std::ostringstream out;
  out << "# name parent offset_x offset_y offset_z radius length\n";
  char buf[256];
  for (const auto& j : joints_) {
    std::snprintf(buf, sizeof buf, "%s %d %.17g %.17g %.17g %.17g %.17g\n", j.name.c_str(), j.parent, j.offset.x(),
                  j.offset.y(), j.offset.z(), j.radius, j.length);
    out << buf;
  }
  return out.str();
}

Eigen::Matrix3d axis_angle_matrix(const Eigen::Vector3d& omega) {
  const double angle = omega.norm();
  if (angle < 1e-15) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

Eigen::Vector3d matrix_axis_angle(const Eigen::Matrix3d& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

}  // namespace pop::body
