#include "pop/popnet/query.hpp"

#include <set>

#include "pop/core/error.hpp"

namespace pop::net {

QuerySet::QuerySet(const body::SurfaceMap& surface, int factor)
    : factor_(factor), height_(surface.height()), width_(surface.width()) {
  if (factor < 1) throw std::invalid_argument("query factor must be >= 1");
  auto usable = [&](int x, int y) {
    const int id = surface.island_at(x, y);
    return id >= 0 && surface.island_at(x + 1, y) == id && surface.island_at(x, y + 1) == id &&
           surface.island_at(x + 1, y + 1) == id;
  };
  // Integer lattice coordinates (s*y, s*x), ordered row-major for determinism.
  std::set<std::pair<long, long>> lattice;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (!usable(x, y)) continue;
      for (int j = 0; j <= factor; ++j)
        for (int i = 0; i <= factor; ++i) lattice.emplace(static_cast<long>(y) * factor + j, static_cast<long>(x) * factor + i);
    }
  }
  texels_.reserve(lattice.size());
  cells_.reserve(lattice.size());
  for (const auto& [ly, lx] : lattice) {
    const Eigen::Vector2d t(static_cast<double>(lx) / factor, static_cast<double>(ly) / factor);
    texels_.push_back(t);
    cells_.push_back(surface.locate_texel(t.x(), t.y()));
  }
}

nk::BilinearTaps QuerySet::taps(std::size_t batch) const {
  nk::BilinearTaps taps;
  const std::size_t m = size();
  taps.batch.reserve(batch * m);
  taps.offsets.reserve(batch * m);
  taps.weights.reserve(batch * m);
  for (std::size_t b = 0; b < batch; ++b) {
    for (const auto& c : cells_) {
      taps.batch.push_back(b);
      std::array<std::size_t, 4> off;
      const auto corners = c.corners();
      for (int k = 0; k < 4; ++k) {
        off[k] = static_cast<std::size_t>(corners[k].second) * width_ + corners[k].first;
      }
      taps.offsets.push_back(off);
      taps.weights.push_back(c.weights());
    }
  }
  return taps;
}

QueryFrames query_frames(const QuerySet& queries, const body::SurfaceMap& surface) {
  if (surface.height() != queries.height() || surface.width() != queries.width()) {
    throw DimensionError("query set and surface map resolutions differ");
  }
  QueryFrames f;
  f.positions.reserve(queries.size());
  f.rotations.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto s = surface.query_cell(queries.cell(i));
    f.positions.push_back(s.position);
    f.rotations.push_back(s.rotation());
  }
  return f;
}

}  // namespace pop::net
