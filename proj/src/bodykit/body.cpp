#include "pop/bodykit/body.hpp"

#include <cmath>
#include <Eigen/LU>

#include "pop/core/error.hpp"
#include "pop/core/kdtree.hpp"

namespace pop::body {

PosedBody::PosedBody(std::shared_ptr<const Skeleton> skeleton, std::shared_ptr<const UVAtlas> atlas,
                     const Pose& pose)
    : skeleton_(std::move(skeleton)), atlas_(std::move(atlas)), pose_(pose) {
  const Skeleton& sk = *skeleton_;
  if (pose.size() != sk.size()) {
    throw DimensionError("pose has " + std::to_string(pose.size()) + " joint rotations, skeleton has " +
                         std::to_string(sk.size()));
  }
  for (const auto& w : pose.rotations) {
    if (!w.allFinite()) throw std::invalid_argument("pose rotation is not finite");
  }
  if (!pose.translation.allFinite()) throw std::invalid_argument("pose translation is not finite");

  joint_frames_.resize(sk.size());
  bones_.resize(sk.size());
  for (std::size_t j = 0; j < sk.size(); ++j) {
    const Joint& jt = sk.joint(j);
    RigidTransform local{axis_angle_matrix(pose.rotations[j]), jt.offset};
    if (jt.parent < 0) {
      local.translation += pose.translation;
      joint_frames_[j] = local;
    } else {
      joint_frames_[j] = joint_frames_[jt.parent] * local;
    }
    bones_[j] = joint_frames_[j] * RigidTransform{sk.bone_frame(j), Eigen::Vector3d::Zero()};
  }
}

Eigen::Vector3d PosedBody::bone_tip(std::size_t j) const {
  return bones_.at(j).apply(Eigen::Vector3d(0, 0, skeleton_->joint(j).length));
}

Eigen::Vector3d PosedBody::local_surface_point(const CylinderCoord& c) const {
  const Joint& jt = skeleton_->joint(c.bone);
  return {jt.radius * std::cos(c.theta), jt.radius * std::sin(c.theta), c.axial * jt.length};
}

PosedBody pose_body(std::shared_ptr<const Skeleton> skeleton, std::shared_ptr<const UVAtlas> atlas, const Pose& pose) {
  return PosedBody(std::move(skeleton), std::move(atlas), pose);
}

PositionalMap render_positional_map(const PosedBody& body, int height, int width) {
  if (height < 8 || width < 8) throw DimensionError("positional maps need at least 8x8 texels");
  return SurfaceMap::from_body(body, height, width).positional_map();
}

SurfaceMap::SurfaceMap(int height, int width, std::vector<int> island, std::vector<Eigen::Vector3d> positions,
                       std::vector<Matrix34> transforms)
    : height_(height), width_(width), island_(std::move(island)), positions_(std::move(positions)),
      transforms_(std::move(transforms)) {
  const std::size_t n = static_cast<std::size_t>(height) * width;
  if (height < 1 || width < 1 || island_.size() != n || positions_.size() != n || transforms_.size() != n) {
    throw DimensionError("surface map arrays do not match " + std::to_string(height) + "x" + std::to_string(width));
  }
}

SurfaceMap SurfaceMap::from_body(const PosedBody& body, int height, int width) {
  const AtlasGrid grid = body.atlas().rasterize(height, width);
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<Eigen::Vector3d> pos(n, Eigen::Vector3d::Zero());
  std::vector<Matrix34> tf(n, Matrix34::Zero());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int isl = grid.island_at(x, y);
      if (isl < 0) continue;
      const CylinderCoord c = grid.cylinder(isl, x, y);
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      pos[i] = body.surface_point(c);
      tf[i] = body.bone(c.bone).matrix();
    }
  }
  return SurfaceMap(height, width, grid.island_ids(), std::move(pos), std::move(tf));
}

SurfaceMap SurfaceMap::from_arrays(const PositionalMap& map, const std::vector<float>& transforms,
                                   const std::vector<float>& island) {
  const std::size_t n = static_cast<std::size_t>(map.height) * map.width;
  if (transforms.size() != 12 * n || island.size() != n || map.values.size() != 3 * n || map.mask.size() != n) {
    throw DimensionError("imported surface arrays do not match the positional map size");
  }
  std::vector<int> ids(n, -1);
  std::vector<Eigen::Vector3d> pos(n, Eigen::Vector3d::Zero());
  std::vector<Matrix34> tf(n, Matrix34::Zero());
  for (std::size_t i = 0; i < n; ++i) {
    if (!map.mask[i]) continue;
    if (island[i] < 0) throw FormatError("valid texel without an island id in imported surface");
    ids[i] = static_cast<int>(island[i]);
    pos[i] = Eigen::Vector3d(map.values[3 * i], map.values[3 * i + 1], map.values[3 * i + 2]);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) tf[i](r, c) = transforms[12 * i + 4 * r + c];
  }
  return SurfaceMap(map.height, map.width, std::move(ids), std::move(pos), std::move(tf));
}

int SurfaceMap::island_at(int x, int y) const {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return -1;
  return island_[index(x, y)];
}

BilinearCell SurfaceMap::locate_texel(double x, double y) const {
  if (!std::isfinite(x) || !std::isfinite(y)) throw OutOfManifoldError("non-finite UV coordinate");
  constexpr double kSnap = 1e-9;
  auto split = [](double t, int& i, double& f) {
    i = static_cast<int>(std::floor(t));
    f = t - i;
    if (f > 1 - kSnap) {
      ++i;
      f = 0;
    } else if (f < kSnap) {
      f = 0;
    }
  };
  BilinearCell cell;
  split(x, cell.x0, cell.fx);
  split(y, cell.y0, cell.fy);

  auto usable = [&](int x0, int y0) {
    const int id = island_at(x0, y0);
    return id >= 0 && island_at(x0 + 1, y0) == id && island_at(x0, y0 + 1) == id && island_at(x0 + 1, y0 + 1) == id;
  };
  // A query exactly on an island's last row or column belongs to the cell
  // before it, with fraction 1.
  for (int shift = 0; shift < 4; ++shift) {
    const bool sx = shift & 1, sy = shift & 2;
    if ((sx && cell.fx != 0) || (sy && cell.fy != 0)) continue;
    const int x0 = cell.x0 - sx, y0 = cell.y0 - sy;
    if (usable(x0, y0)) {
      return {x0, y0, sx ? 1.0 : cell.fx, sy ? 1.0 : cell.fy, island_at(x0, y0)};
    }
  }
  throw OutOfManifoldError("UV texel position (" + std::to_string(x) + ", " + std::to_string(y) +
                           ") is not inside a valid island cell");
}

SurfaceSample SurfaceMap::query_cell(const BilinearCell& cell) const {
  const auto w = cell.weights();
  const auto c = cell.corners();
  SurfaceSample s{Eigen::Vector3d::Zero(), Matrix34::Zero()};
  for (int k = 0; k < 4; ++k) {
    if (w[k] == 0) continue;
    s.position += w[k] * position(c[k].first, c[k].second);
    s.transform += w[k] * transform(c[k].first, c[k].second);
  }
  return s;
}

SurfaceSample SurfaceMap::query(double u, double v) const { return query_cell(locate(u, v)); }

PositionalMap SurfaceMap::positional_map() const {
  PositionalMap m;
  m.height = height_;
  m.width = width_;
  const std::size_t n = island_.size();
  m.values.assign(3 * n, 0.0f);
  m.mask.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (island_[i] < 0) continue;
    m.mask[i] = 1;
    for (int k = 0; k < 3; ++k) m.values[3 * i + k] = static_cast<float>(positions_[i][k]);
  }
  return m;
}

SurfaceSample surface_query(const PosedBody& body, double u, double v, int height, int width) {
  return SurfaceMap::from_body(body, height, width).query(u, v);
}

PointSet rigid_repose(const PointSet& points, const SurfaceMap& src, const SurfaceMap& dst) {
  if (points.empty()) throw std::invalid_argument("rigid_repose: empty point set");
  if (src.height() != dst.height() || src.width() != dst.width()) {
    throw DimensionError("rigid_repose: source and target surfaces differ in resolution");
  }
  std::vector<Eigen::Vector3d> samples;
  std::vector<std::pair<int, int>> texel;
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      if (!src.valid(x, y)) continue;
      if (!dst.valid(x, y)) throw DimensionError("rigid_repose: surfaces have different masks");
      samples.push_back(src.position(x, y));
      texel.emplace_back(x, y);
    }
  }
  const KdTree tree(std::move(samples));

  PointSet out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto [x, y] = texel[tree.nearest(points.points[i]).index];
    const Matrix34& ts = src.transform(x, y);
    const Matrix34& td = dst.transform(x, y);
    // General inverse so imported, not quite orthonormal transforms still work.
    const Eigen::Matrix3d m = td.leftCols<3>() * ts.leftCols<3>().inverse();
    const Eigen::Vector3d p = m * (points.points[i] - ts.col(3)) + td.col(3);
    Eigen::Vector3d n = m * points.normals[i];
    const double len = n.norm();
    if (len > 0) n /= len;
    out.push_back(p, n);
  }
  return out;
}

PointSet rigid_repose(const PointSet& points, const PosedBody& src, const PosedBody& dst, int resolution) {
  return rigid_repose(points, SurfaceMap::from_body(src, resolution, resolution),
                      SurfaceMap::from_body(dst, resolution, resolution));
}

}  // namespace pop::body
