#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace pop::body {

struct Joint {
  std::string name;
  int parent = -1;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();  // rest offset from the parent joint, meters
  double radius = 0.0;                               // cylinder radius of the bone starting here
  double length = 0.0;                               // cylinder length along the bone axis
};

// Tree of joints in topological order. Every joint carries one cylindrical
// bone; its axis points towards the first child, or along the joint's own
// offset for leaves.
class Skeleton {
 public:
  explicit Skeleton(std::vector<Joint> joints);

  // Eleven-bone proxy body: pelvis, spine, head, two upper arms, two forearms,
  // two thighs, two shins.
  static Skeleton proxy();

  std::size_t size() const { return joints_.size(); }
  const Joint& joint(std::size_t i) const { return joints_.at(i); }
  const std::vector<Joint>& joints() const { return joints_; }
  int find(const std::string& name) const;  // -1 when absent
  // First child of a joint, or -1 for leaves.
  int first_child(std::size_t i) const { return first_child_.at(i); }
  // Rotation taking cylinder coordinates (z along the bone) to the joint frame.
  const Eigen::Matrix3d& bone_frame(std::size_t i) const { return bone_frames_.at(i); }

  // Line-based text: "name parent ox oy oz radius length", '#' comments.
  static Skeleton parse(const std::string& text);
  std::string serialize() const;

 private:
  std::vector<Joint> joints_;
  std::vector<int> first_child_;
  std::vector<Eigen::Matrix3d> bone_frames_;
};

// Per-joint axis-angle rotations plus the root translation.
struct Pose {
  std::vector<Eigen::Vector3d> rotations;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity(std::size_t joints) { return {std::vector<Eigen::Vector3d>(joints, Eigen::Vector3d::Zero()), Eigen::Vector3d::Zero()}; }
  std::size_t size() const { return rotations.size(); }
};

Eigen::Matrix3d axis_angle_matrix(const Eigen::Vector3d& omega);
Eigen::Vector3d matrix_axis_angle(const Eigen::Matrix3d& r);

}  // namespace pop::body
