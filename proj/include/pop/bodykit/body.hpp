#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "pop/bodykit/atlas.hpp"
#include "pop/bodykit/skeleton.hpp"
#include "pop/core/pointset.hpp"

namespace pop::body {

using Matrix34 = Eigen::Matrix<double, 3, 4>;

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  RigidTransform operator*(const RigidTransform& o) const {
    return {rotation * o.rotation, rotation * o.translation + translation};
  }
  RigidTransform inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -rt * translation};
  }
  Matrix34 matrix() const {
    Matrix34 m;
    m << rotation, translation;
    return m;
  }
};

// A skeleton in one pose. bone(j) maps cylinder coordinates of bone j
// (z along the bone, surface at radius r) to world space.
class PosedBody {
 public:
  PosedBody(std::shared_ptr<const Skeleton> skeleton, std::shared_ptr<const UVAtlas> atlas, const Pose& pose);

  const Skeleton& skeleton() const { return *skeleton_; }
  const UVAtlas& atlas() const { return *atlas_; }
  const std::shared_ptr<const Skeleton>& skeleton_ptr() const { return skeleton_; }
  const std::shared_ptr<const UVAtlas>& atlas_ptr() const { return atlas_; }
  const Pose& pose() const { return pose_; }

  const RigidTransform& joint_frame(std::size_t j) const { return joint_frames_.at(j); }
  const RigidTransform& bone(std::size_t j) const { return bones_.at(j); }
  Eigen::Vector3d joint_position(std::size_t j) const { return joint_frames_.at(j).translation; }
  // End point of bone j's cylinder axis.
  Eigen::Vector3d bone_tip(std::size_t j) const;

  // Point on the cylinder of bone j, in cylinder and world coordinates.
  Eigen::Vector3d local_surface_point(const CylinderCoord& c) const;
  Eigen::Vector3d surface_point(const CylinderCoord& c) const { return bones_.at(c.bone).apply(local_surface_point(c)); }

 private:
  std::shared_ptr<const Skeleton> skeleton_;
  std::shared_ptr<const UVAtlas> atlas_;
  Pose pose_;
  std::vector<RigidTransform> joint_frames_;
  std::vector<RigidTransform> bones_;
};

PosedBody pose_body(std::shared_ptr<const Skeleton> skeleton, std::shared_ptr<const UVAtlas> atlas, const Pose& pose);

// H x W x 3 surface positions (row-major, 32-bit) with a validity mask.
struct PositionalMap {
  int height = 0, width = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> mask;

  bool valid(int x, int y) const { return mask[static_cast<std::size_t>(y) * width + x] != 0; }
  Eigen::Vector3d at(int x, int y) const {
    const float* v = values.data() + 3 * (static_cast<std::size_t>(y) * width + x);
    return {v[0], v[1], v[2]};
  }
};

PositionalMap render_positional_map(const PosedBody& body, int height, int width);

// Bilinear cell around a UV coordinate: corner (x0, y0) and fractions.
struct BilinearCell {
  int x0 = 0, y0 = 0;
  double fx = 0.0, fy = 0.0;
  int island = -1;

  std::array<double, 4> weights() const {
    return {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  }
  // Corner order matches weights(): (x0,y0), (x0+1,y0), (x0,y0+1), (x0+1,y0+1).
  std::array<std::pair<int, int>, 4> corners() const {
    return {{{x0, y0}, {x0 + 1, y0}, {x0, y0 + 1}, {x0 + 1, y0 + 1}}};
  }
};

struct SurfaceSample {
  Eigen::Vector3d position;
  Matrix34 transform;  // blended entrywise, not re-orthonormalized

  Eigen::Matrix3d rotation() const { return transform.leftCols<3>(); }
};

// Per-texel positions and transforms on the UV grid, the continuous surface
// used by the network. Built from the proxy body or imported.
class SurfaceMap {
 public:
  SurfaceMap(int height, int width, std::vector<int> island, std::vector<Eigen::Vector3d> positions,
             std::vector<Matrix34> transforms);

  static SurfaceMap from_body(const PosedBody& body, int height, int width);
  // Import path: positions and mask from a positional map, per-texel
  // transforms [H x W x 12] (row-major 3x4) and island ids [H x W] from arrays.
  static SurfaceMap from_arrays(const PositionalMap& map, const std::vector<float>& transforms,
                                const std::vector<float>& island);

  int height() const { return height_; }
  int width() const { return width_; }
  int island_at(int x, int y) const;
  bool valid(int x, int y) const { return island_at(x, y) >= 0; }
  const Eigen::Vector3d& position(int x, int y) const { return positions_[index(x, y)]; }
  const Matrix34& transform(int x, int y) const { return transforms_[index(x, y)]; }

  // Texel coordinates (x = u W - 1/2, y = v H - 1/2) to the interpolation cell.
  // Throws OutOfManifoldError unless all 4 corners are valid and share an island.
  BilinearCell locate_texel(double x, double y) const;
  BilinearCell locate(double u, double v) const { return locate_texel(u * width_ - 0.5, v * height_ - 0.5); }

  SurfaceSample query(double u, double v) const;
  SurfaceSample query_cell(const BilinearCell& cell) const;
  PositionalMap positional_map() const;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int height_, width_;
  std::vector<int> island_;
  std::vector<Eigen::Vector3d> positions_;
  std::vector<Matrix34> transforms_;
};

SurfaceSample surface_query(const PosedBody& body, double u, double v, int height, int width);

// Transports every point by T_dst T_src^-1 of its nearest texel sample on the
// source surface map; normals follow the rotation part. The rigid-skinning
// (LBS) baseline.
PointSet rigid_repose(const PointSet& points, const SurfaceMap& src, const SurfaceMap& dst);
PointSet rigid_repose(const PointSet& points, const PosedBody& src, const PosedBody& dst, int resolution = 128);

}  // namespace pop::body
