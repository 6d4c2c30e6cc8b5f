#pragma once

#include <cstddef>
#include <vector>

#include "pop/bodykit/skeleton.hpp"

namespace pop::body {

// Rectangular chart of one bone in normalized atlas coordinates.
struct Island {
  std::size_t bone = 0;
  double u0 = 0, v0 = 0, u1 = 0, v1 = 0;
};

// Texel extent of an island at one map resolution. Column col0 maps to angle 0
// and col1 to 2 pi (both texels sit on the seam); row0 maps to the bone start
// and row1 to its end.
struct TexelRange {
  int col0 = 0, col1 = -1, row0 = 0, row1 = -1;
  bool valid = false;  // at least two texels along each axis

  int cols() const { return col1 - col0 + 1; }
  int rows() const { return row1 - row0 + 1; }
};

struct CylinderCoord {
  std::size_t bone = 0;
  double theta = 0.0;  // circumferential angle, radians
  double axial = 0.0;  // fraction of bone length in [0, 1]
};

class AtlasGrid;

class UVAtlas {
 public:
  explicit UVAtlas(std::vector<Island> islands);

  // Hand-laid atlas for Skeleton::proxy(), one island per bone with a one-texel
  // gutter at 32x32.
  static UVAtlas proxy(const Skeleton& skeleton);

  const std::vector<Island>& islands() const { return islands_; }
  AtlasGrid rasterize(int height, int width) const;

 private:
  std::vector<Island> islands_;
};

// An atlas sampled at a concrete map resolution.
class AtlasGrid {
 public:
  AtlasGrid(const UVAtlas& atlas, int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }
  const std::vector<Island>& islands() const { return islands_; }
  const TexelRange& range(std::size_t island) const { return ranges_.at(island); }

  // Island index of a texel or -1 for gutter / invalid islands.
  int island_at(int x, int y) const;
  bool valid(int x, int y) const { return island_at(x, y) >= 0; }
  std::size_t valid_count() const;
  const std::vector<int>& island_ids() const { return texel_island_; }

  // Cylinder coordinates of a continuous texel position (x column, y row)
  // inside the given island.
  CylinderCoord cylinder(std::size_t island, double x, double y) const;
  // Normalized atlas v of an island row position; resolution independent.
  double atlas_v(std::size_t island, double axial) const;

 private:
  int height_, width_;
  std::vector<Island> islands_;
  std::vector<TexelRange> ranges_;
  std::vector<int> texel_island_;
};

}  // namespace pop::body
