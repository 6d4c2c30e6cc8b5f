#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "doctest.h"
#include "pop/bodykit/body.hpp"
#include "pop/core/error.hpp"

using namespace pop;
using namespace pop::body;
using Eigen::Vector3d;

namespace {

struct Fixture {
  std::shared_ptr<const Skeleton> skeleton = std::make_shared<Skeleton>(Skeleton::proxy());
  std::shared_ptr<const UVAtlas> atlas = std::make_shared<UVAtlas>(UVAtlas::proxy(*skeleton));

  PosedBody posed(const Pose& p) const { return pose_body(skeleton, atlas, p); }
  Pose random_pose(std::mt19937_64& rng, double scale = 0.6) const {
    std::normal_distribution<double> n(0, scale);
    Pose p = Pose::identity(skeleton->size());
    for (auto& w : p.rotations) w = Vector3d(n(rng), n(rng), n(rng));
    p.translation = Vector3d(n(rng), n(rng), n(rng));
    return p;
  }
};

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("proxy skeleton and atlas layout") {
  Fixture f;
  CHECK(f.skeleton->size() == 11);
  CHECK(f.skeleton->joint(0).parent == -1);
  const AtlasGrid g = f.atlas->rasterize(32, 32);
  CHECK(g.valid_count() == 745);
  // Gutter between the two thigh islands.
  CHECK(g.valid(10, 0));
  CHECK_FALSE(g.valid(11, 0));
  CHECK(g.valid(12, 0));
  // Every valid texel belongs to exactly one bone; bones are all distinct.
  std::vector<int> seen(f.skeleton->size(), 0);
  for (const auto& is : g.islands()) ++seen[is.bone];
  for (int s : seen) CHECK(s == 1);

  const AtlasGrid fine = f.atlas->rasterize(128, 128);
  CHECK(fine.valid_count() == 745 * 16);
  const AtlasGrid coarse = f.atlas->rasterize(8, 8);
  CHECK(coarse.valid_count() > 0);
}

TEST_CASE("skeleton text round trip and parse errors") {
  Fixture f;
  const Skeleton back = Skeleton::parse(f.skeleton->serialize());
  REQUIRE(back.size() == f.skeleton->size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back.joint(i).name == f.skeleton->joint(i).name);
    CHECK(back.joint(i).offset == f.skeleton->joint(i).offset);
    CHECK(back.joint(i).radius == f.skeleton->joint(i).radius);
  }
  try {
    Skeleton::parse("root -1 0 0 0 0.1 0.2\nchild 0 1 0 zero 0.1 0.2\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(Skeleton::parse("a 1 0 0 0 0.1 0.2\n"), ParseError);
}

TEST_CASE("pose_body forward kinematics") {
  Fixture f;
  const PosedBody rest = f.posed(Pose::identity(11));
  // Rest transforms: accumulated offsets, rotation = bone frame.
  for (std::size_t j = 0; j < 11; ++j) {
    Vector3d pos = Vector3d::Zero();
    for (int k = static_cast<int>(j); k >= 0; k = f.skeleton->joint(k).parent) pos += f.skeleton->joint(k).offset;
    CHECK((rest.bone(j).translation - pos).norm() < 1e-15);
    CHECK(max_abs(rest.bone(j).rotation - f.skeleton->bone_frame(j)) < 1e-15);
  }

  Pose p = Pose::identity(11);
  p.rotations[0] = Vector3d(0.3, -0.7, 0.2);
  const PosedBody rot = f.posed(p);
  const Eigen::Matrix3d r = axis_angle_matrix(p.rotations[0]);
  for (std::size_t j = 0; j < 11; ++j) {
    const RigidTransform expect = RigidTransform{r, Vector3d::Zero()} * rest.bone(j);
    CHECK(max_abs(rot.bone(j).matrix() - expect.matrix()) < 1e-12);
  }

  Skeleton chain({{"root", -1, Vector3d::Zero(), 0.1, 1.0}, {"child", 0, Vector3d(1, 0, 0), 0.1, 1.0}});
  auto sk = std::make_shared<Skeleton>(chain);
  auto at = std::make_shared<UVAtlas>(std::vector<Island>{{0, 0, 0, 0.5, 1}, {1, 0.5, 0, 1, 1}});
  Pose cp = Pose::identity(2);
  cp.rotations[1] = Vector3d(0, 0, std::numbers::pi / 2);
  const PosedBody cb = pose_body(sk, at, cp);
  // Child starts at (1,0,0); its unit bone along +x turns to +y.
  CHECK((cb.bone_tip(1) - Vector3d(1, 1, 0)).norm() < 1e-12);

  CHECK_THROWS_AS(f.posed(Pose::identity(10)), DimensionError);

  std::mt19937_64 rng(3);
  const PosedBody any = f.posed(f.random_pose(rng));
  for (std::size_t j = 0; j < 11; ++j) {
    const Eigen::Matrix3d& rr = any.bone(j).rotation;
    CHECK(max_abs(rr.transpose() * rr - Eigen::Matrix3d::Identity()) < 1e-6);
  }
}

TEST_CASE("render_positional_map") {
  Fixture f;
  const PosedBody rest = f.posed(Pose::identity(11));
  const PositionalMap m = render_positional_map(rest, 32, 32);
  const AtlasGrid g = f.atlas->rasterize(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      CHECK(m.valid(x, y) == g.valid(x, y));
      if (!m.valid(x, y)) CHECK(m.at(x, y) == Vector3d::Zero());
    }

  // Spine island (cols 9-22, rows 10-16): texel (12, 13) sits at angle
  // 2 pi * 3/13 and axial fraction 3/6 of the 0.30 m bone of radius 0.11.
  const int spine = f.skeleton->find("spine");
  const double theta = 2 * std::numbers::pi * 3 / 13, axial = 0.5;
  const Vector3d local(0.11 * std::cos(theta), 0.11 * std::sin(theta), axial * 0.30);
  const Vector3d expect = f.skeleton->bone_frame(spine) * local + Vector3d(0, 0.20, 0);
  CHECK((m.at(12, 13) - expect).norm() < 1e-6);

  Pose p = Pose::identity(11);
  p.rotations[0] = Vector3d(0, 1.1, 0.4);
  const PositionalMap mr = render_positional_map(f.posed(p), 32, 32);
  const Eigen::Matrix3d r = axis_angle_matrix(p.rotations[0]);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      CHECK(mr.valid(x, y) == m.valid(x, y));
      if (m.valid(x, y)) CHECK((mr.at(x, y) - r * m.at(x, y)).norm() < 1e-6);
    }
}

TEST_CASE("surface_query") {
  Fixture f;
  std::mt19937_64 rng(5);
  const PosedBody body = f.posed(f.random_pose(rng));
  const SurfaceMap s = SurfaceMap::from_body(body, 32, 32);

  for (auto [x, y] : std::vector<std::pair<int, int>>{{12, 13}, {9, 10}, {22, 16}, {0, 0}, {31, 8}}) {
    const SurfaceSample q = s.query((x + 0.5) / 32, (y + 0.5) / 32);
    CHECK(q.position == s.position(x, y));
    CHECK(q.transform == s.transform(x, y));
  }

  const SurfaceSample mid = s.query(13.0 / 32, 14.0 / 32);  // center of texels (12..13, 13..14)
  const Vector3d mean = (s.position(12, 13) + s.position(13, 13) + s.position(12, 14) + s.position(13, 14)) / 4;
  CHECK((mid.position - mean).norm() < 1e-15);
  // One island is one rigid bone: the blend reproduces its transform.
  CHECK(max_abs(mid.transform - s.transform(12, 13)) < 1e-15);

  CHECK_THROWS_AS(s.query(11.5 / 32, 0.5 / 32), OutOfManifoldError);  // gutter column
  CHECK_THROWS_AS(s.query(10.9 / 32, 3.0 / 32), OutOfManifoldError);  // straddles island edge
  CHECK_THROWS_AS(s.query(0.999, 0.999), OutOfManifoldError);

  const SurfaceSample ref = surface_query(body, 13.0 / 32, 14.0 / 32, 32, 32);
  CHECK(ref.position == mid.position);
}

TEST_CASE("validity mask is pose independent") {
  Fixture f;
  std::mt19937_64 rng(7);
  const auto a = render_positional_map(f.posed(f.random_pose(rng)), 32, 32);
  const auto b = render_positional_map(f.posed(f.random_pose(rng)), 32, 32);
  CHECK(a.mask == b.mask);
}

TEST_CASE("rigid_repose") {
  Fixture f;
  std::mt19937_64 rng(9);
  const PosedBody src = f.posed(f.random_pose(rng, 0.15));
  const SurfaceMap ss = SurfaceMap::from_body(src, 64, 64);

  // Points on the source surface, well inside the spine island and on the
  // outer half of the left thigh (the inner side is 2 cm from the other leg).
  PointSet pts;
  std::vector<std::pair<double, double>> uvs;
  std::uniform_real_distribution<double> ux(20.0, 42.0), uy(23.0, 30.0), tx(11.0, 20.0), ty(3.0, 14.0);
  for (int i = 0; i < 50; ++i) {
    uvs.emplace_back((ux(rng) + 0.5) / 64, (uy(rng) + 0.5) / 64);
    uvs.emplace_back((tx(rng) + 0.5) / 64, (ty(rng) + 0.5) / 64);
  }
  for (auto [u, v] : uvs) pts.push_back(ss.query(u, v).position, Vector3d(0, 0, 1));

  const PointSet same = rigid_repose(pts, src, src, 64);
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK((same.points[i] - pts.points[i]).norm() < 1e-12);

  Pose rotated = src.pose();
  const Eigen::Matrix3d r = axis_angle_matrix(Vector3d(0.2, 0.9, -0.3));
  rotated.rotations[0] = matrix_axis_angle(r * axis_angle_matrix(rotated.rotations[0]));
  rotated.translation = r * rotated.translation;
  const PointSet turned = rigid_repose(pts, src, f.posed(rotated), 64);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK((turned.points[i] - r * pts.points[i]).norm() < 1e-9);
    CHECK((turned.normals[i] - r * pts.normals[i]).norm() < 1e-9);
  }

  const PosedBody dst = f.posed(f.random_pose(rng, 0.15));
  const SurfaceMap ds = SurfaceMap::from_body(dst, 64, 64);
  const PointSet moved = rigid_repose(pts, src, dst, 64);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK((moved.points[i] - ds.query(uvs[i].first, uvs[i].second).position).norm() < 1e-6);
  }

  CHECK_THROWS(rigid_repose(PointSet{}, src, dst));
}

TEST_CASE("import path reproduces the proxy surface") {
  Fixture f;
  std::mt19937_64 rng(11);
  const SurfaceMap s = SurfaceMap::from_body(f.posed(f.random_pose(rng)), 32, 32);
  const PositionalMap pm = s.positional_map();
  std::vector<float> tf(32 * 32 * 12, 0.0f), isl(32 * 32, -1.0f);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const std::size_t i = y * 32 + x;
      isl[i] = static_cast<float>(s.island_at(x, y));
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) tf[12 * i + 4 * r + c] = static_cast<float>(s.transform(x, y)(r, c));
    }
  const SurfaceMap imp = SurfaceMap::from_arrays(pm, tf, isl);
  const SurfaceSample a = imp.query(13.0 / 32, 14.0 / 32), b = s.query(13.0 / 32, 14.0 / 32);
  CHECK((a.position - b.position).norm() < 1e-6);
  CHECK(max_abs(a.transform - b.transform) < 1e-6);
}
