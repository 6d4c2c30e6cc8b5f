#include "pop/bodykit/atlas.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pop/core/error.hpp"

namespace pop::body {

UVAtlas::UVAtlas(std::vector<Island> islands) : islands_(std::move(islands)) {
  for (std::size_t i = 0; i < islands_.size(); ++i) {
    const Island& a = islands_[i];
    if (!(a.u0 >= 0 && a.v0 >= 0 && a.u1 <= 1 && a.v1 <= 1 && a.u0 < a.u1 && a.v0 < a.v1)) {
      throw std::invalid_argument("atlas island outside the unit square or empty");
    }
    for (std::size_t j = 0; j < i; ++j) {
      const Island& b = islands_[j];
      if (a.bone == b.bone) throw std::invalid_argument("two atlas islands for one bone");
      const bool apart = a.u1 <= b.u0 || b.u1 <= a.u0 || a.v1 <= b.v0 || b.v1 <= a.v0;
      if (!apart) throw std::invalid_argument("atlas islands overlap");
    }
  }
}

UVAtlas UVAtlas::proxy(const Skeleton& skeleton) {
  // Inclusive texel boxes on a 32x32 grid: name, col0, col1, row0, row1.
  struct Box {
    const char* name;
    int c0, c1, r0, r1;
  };
  static constexpr Box kLayout[] = {
      {"thigh_l", 0, 10, 0, 8},       {"thigh_r", 12, 22, 0, 8},     {"shin_l", 24, 31, 0, 8},
      {"shin_r", 0, 7, 10, 18},       {"spine", 9, 22, 10, 16},      {"upperarm_l", 24, 30, 10, 16},
      {"head", 9, 20, 18, 22},        {"upperarm_r", 24, 30, 18, 24}, {"pelvis", 0, 14, 24, 28},
      {"forearm_l", 16, 21, 24, 29},  {"forearm_r", 24, 29, 26, 31},
  };
  std::vector<Island> islands;
  for (const Box& b : kLayout) {
    const int bone = skeleton.find(b.name);
    if (bone < 0) throw std::invalid_argument(std::string("proxy atlas needs joint '") + b.name + "'");
    islands.push_back({static_cast<std::size_t>(bone), b.c0 / 32.0, b.r0 / 32.0, (b.c1 + 1) / 32.0, (b.r1 + 1) / 32.0});
  }
  return UVAtlas(std::move(islands));
}

AtlasGrid UVAtlas::rasterize(int height, int width) const { return AtlasGrid(*this, height, width); }

AtlasGrid::AtlasGrid(const UVAtlas& atlas, int height, int width)
    : height_(height), width_(width), islands_(atlas.islands()) {
  if (height < 1 || width < 1) throw DimensionError("atlas resolution must be positive");
  texel_island_.assign(static_cast<std::size_t>(height) * width, -1);
  // Small slack keeps exact fractions such as 11/32 * 32 from rounding the wrong way.
  constexpr double kSlack = 1e-9;
  for (std::size_t i = 0; i < islands_.size(); ++i) {
    const Island& is = islands_[i];
    TexelRange r;
    r.col0 = static_cast<int>(std::ceil(is.u0 * width - kSlack));
    r.col1 = static_cast<int>(std::floor(is.u1 * width + kSlack)) - 1;
    r.row0 = static_cast<int>(std::ceil(is.v0 * height - kSlack));
    r.row1 = static_cast<int>(std::floor(is.v1 * height + kSlack)) - 1;
    r.valid = r.cols() >= 2 && r.rows() >= 2;
    ranges_.push_back(r);
    if (!r.valid) continue;
    for (int y = r.row0; y <= r.row1; ++y) {
      for (int x = r.col0; x <= r.col1; ++x) texel_island_[static_cast<std::size_t>(y) * width + x] = static_cast<int>(i);
    }
  }
}

int AtlasGrid::island_at(int x, int y) const {
  if (x < 0 || y < 0 || x >= width_ || y >= height_) return -1;
  return texel_island_[static_cast<std::size_t>(y) * width_ + x];
}

std::size_t AtlasGrid::valid_count() const {
  std::size_t n = 0;
  for (int id : texel_island_) n += id >= 0;
  return n;
}

CylinderCoord AtlasGrid::cylinder(std::size_t island, double x, double y) const {
  const TexelRange& r = ranges_.at(island);
  if (!r.valid) throw OutOfManifoldError("atlas island has no texels at this resolution");
  return {islands_[island].bone, 2.0 * std::numbers::pi * (x - r.col0) / (r.col1 - r.col0),
          (y - r.row0) / (r.row1 - r.row0)};
}

double AtlasGrid::atlas_v(std::size_t island, double axial) const {
  const Island& is = islands_.at(island);
  return is.v0 + axial * (is.v1 - is.v0);
}

}  // namespace pop::body
