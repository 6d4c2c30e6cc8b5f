#pragma once

#include <vector>

#include <Eigen/Core>

#include "pop/bodykit/body.hpp"
#include "pop/numkit/ops.hpp"

namespace pop::net {

// Query lattice on the UV grid: points k/s apart in texel units over every
// valid interior cell (4 valid corners in one island), island edges included.
// At factor s an island with n x m texels yields (s(n-1)+1)(s(m-1)+1) queries.
class QuerySet {
 public:
  QuerySet(const body::SurfaceMap& surface, int factor);

  int factor() const { return factor_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return cells_.size(); }

  // Continuous texel position (x column, y row) and UV of query i.
  const Eigen::Vector2d& texel(std::size_t i) const { return texels_[i]; }
  Eigen::Vector2d uv(std::size_t i) const {
    return {(texels_[i].x() + 0.5) / width_, (texels_[i].y() + 0.5) / height_};
  }
  const body::BilinearCell& cell(std::size_t i) const { return cells_[i]; }

  // Gather taps for a stack of `batch` feature maps: row b * size() + i reads
  // map b at query i.
  nk::BilinearTaps taps(std::size_t batch) const;

 private:
  int factor_, height_, width_;
  std::vector<Eigen::Vector2d> texels_;
  std::vector<body::BilinearCell> cells_;
};

// Per-query body surface samples of one pose.
struct QueryFrames {
  std::vector<Eigen::Vector3d> positions;
  std::vector<Eigen::Matrix3d> rotations;
};

QueryFrames query_frames(const QuerySet& queries, const body::SurfaceMap& surface);

}  // namespace pop::net
