#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "pop/numkit/gradcheck.hpp"
#include "pop/numkit/ops.hpp"
#include "pop/objective/eval.hpp"
#include "pop/objective/losses.hpp"

using namespace pop;
using namespace pop::obj;
using Eigen::Vector3d;

namespace {

std::vector<Vector3d> random_points(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vector3d> out(n);
  for (auto& p : out) p = Vector3d(u(rng), u(rng), u(rng));
  return out;
}

double brute_chamfer(const std::vector<Vector3d>& x, const std::vector<Vector3d>& y) {
  auto directed = [](const std::vector<Vector3d>& a, const std::vector<Vector3d>& b) {
    double s = 0;
    for (const auto& p : a) {
      double best = INFINITY;
      for (const auto& q : b) best = std::min(best, (p - q).squaredNorm());
      s += best;
    }
    return s / a.size();
  };
  return directed(x, y) + directed(y, x);
}

PointSet with_normals(std::vector<Vector3d> pts, std::mt19937_64& rng) {
  PointSet ps;
  std::normal_distribution<double> n;
  for (auto& p : pts) ps.push_back(p, Vector3d(n(rng), n(rng), n(rng)).normalized());
  return ps;
}

}  // namespace

TEST_CASE("nearest-neighbor index matches exhaustive search") {
  std::mt19937_64 rng(1);
  const auto pts = random_points(1000, rng);
  const NNIndex idx(pts);
  for (std::size_t i = 0; i < 20; ++i) {
    const Neighbor nb = idx.nearest(pts[i * 7]);
    CHECK(nb.sq_dist == 0.0);
    CHECK(nb.index == i * 7);
  }
  for (const auto& q : random_points(1000, rng)) {
    const Neighbor a = idx.nearest(q), b = brute_force_nearest(pts, q);
    CHECK(a.index == b.index);
    CHECK(a.sq_dist == b.sq_dist);
  }
  const NNIndex one(std::vector<Vector3d>{Vector3d(1, 2, 3)});
  CHECK(one.nearest(Vector3d(-5, 0, 9)).index == 0);

  // Ties go to the smallest index, even across tree leaves.
  std::vector<Vector3d> grid;
  for (int i = 0; i < 40; ++i) grid.push_back(Vector3d(i % 2, 0, 0));
  const NNIndex tied(grid);
  CHECK(tied.nearest(Vector3d(0.5, 0, 0)).index == 0);
  CHECK(tied.nearest(Vector3d(1, 0, 0)).index == 1);

  CHECK_THROWS(build_nn_index(PointSet{}));
}

TEST_CASE("chamfer_l2") {
  std::mt19937_64 rng(2);
  const auto a = random_points(300, rng), b = random_points(200, rng);
  CHECK(chamfer_l2(a, a) == 0.0);
  CHECK(chamfer_l2(std::vector<Vector3d>{Vector3d::Zero()}, std::vector<Vector3d>{Vector3d(1, 0, 0)}) == 2.0);
  CHECK(chamfer_l2(a, b) == chamfer_l2(b, a));
  CHECK(std::abs(chamfer_l2(a, b) - brute_chamfer(a, b)) <= 1e-12 * brute_chamfer(a, b));
  CHECK_THROWS(chamfer_l2(std::vector<Vector3d>{}, b));
}

TEST_CASE("normal_loss") {
  PointSet x, y;
  x.push_back(Vector3d::Zero(), Vector3d(1, 0, 0));
  y.push_back(Vector3d(0.1, 0, 0), Vector3d(-1, 0, 0));
  CHECK(normal_loss(x, y) == 2.0);
  x.normals[0] = Vector3d(0, 0, 1);
  y.normals[0] = Vector3d(0, 1, 0);
  CHECK(normal_loss(x, y) == 2.0);
  CHECK(normal_loss(x, x) == 0.0);
  x.normals[0] = Vector3d(0, 0, 1.01);
  CHECK_THROWS_AS(normal_loss(x, y), std::invalid_argument);
}

TEST_CASE("regularizers") {
  CHECK(reg_displacement({Vector3d(1, 0, 0), Vector3d(0, 2, 0)}) == 2.5);
  CHECK(reg_displacement({Vector3d::Zero()}) == 0.0);
  CHECK(reg_geometry({std::vector<double>(8, 1.0)}) == 8.0);
  CHECK(reg_geometry({std::vector<double>(8, 0.0)}) == 0.0);

  using TD = nk::Tensor<double>;
  CHECK(displacement_regularizer(TD::from_vector({2, 3}, {1, 0, 0, 0, 2, 0})).item() == 2.5);
  CHECK(geometry_regularizer<double>({TD::full({2, 2, 2}, 1.0)}).item() == 8.0);
  CHECK(geometry_regularizer<double>({TD::full({2, 2, 2}, 1.0), TD::zeros({2, 2, 2})}).item() == 4.0);
}

TEST_CASE("total_loss") {
  const LossComponents ones{1, 1, 1, 1};
  CHECK(total_loss(ones, {0, 0, 0, 0}) == 0.0);
  CHECK(total_loss(ones, LossWeights::standard()) == doctest::Approx(22001.1).epsilon(1e-15));
  LossComponents twice = ones;
  twice.reg_displacement = 2;
  CHECK(total_loss(twice, LossWeights::standard()) - total_loss(ones, LossWeights::standard()) == 2.0e3);
  CHECK_THROWS((LossWeights{-1, 0, 0, 0}).validate());
}

TEST_CASE("differentiable point losses") {
  std::mt19937_64 rng(3);
  const PointSet y = with_normals(random_points(60, rng), rng);
  const Target target(y);
  const PointSet x = with_normals(random_points(40, rng), rng);
  using TD = nk::Tensor<double>;
  std::vector<double> xv, nv;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (int k = 0; k < 3; ++k) {
      xv.push_back(x.points[i][k]);
      nv.push_back(x.normals[i][k]);
    }
  const auto pl = point_losses(TD::from_vector({40, 3}, xv), TD::from_vector({40, 3}, nv), target);
  CHECK(pl.chamfer.item() == doctest::Approx(chamfer_l2(x, y)).epsilon(1e-14));
  CHECK(pl.normal.item() == doctest::Approx(normal_loss(x, y)).epsilon(1e-14));

  // Random clouds are far from argmin ties, so finite differences apply.
  nk::GradcheckOptions opts;
  auto f = [&](const std::vector<TD>& in) { return point_losses(in[0], in[1], target).chamfer; };
  CHECK(nk::max_relative_grad_error(f, {TD::from_vector({40, 3}, xv), TD::from_vector({40, 3}, nv)}, opts, 5) < 1e-4);
}

TEST_CASE("eval_stats") {
  auto s = eval_stats({{"a", "p0", 2e-4, 0.1}, {"a", "p1", 4e-4, 0.3}});
  CHECK(s.chamfer.mean == doctest::Approx(3e-4));
  CHECK(s.chamfer.outfit_median == s.chamfer.mean);
  CHECK(s.chamfer.outfit_max == s.chamfer.mean);

  s = eval_stats({{"a", "p0", 1, 0}, {"b", "p0", 2, 0}, {"b", "p1", 4, 0}});
  CHECK(s.chamfer.per_outfit.at("a") == 1.0);
  CHECK(s.chamfer.per_outfit.at("b") == 3.0);
  CHECK(s.chamfer.outfit_median == 2.0);
  CHECK(s.chamfer.outfit_max == 3.0);
  CHECK(s.chamfer.outfit_max >= s.chamfer.outfit_median);

  CHECK(5.92e-5 * kChamferTableScale == doctest::Approx(0.592));
  std::ostringstream os;
  const std::vector<EvalRecord> recs{{"a", "p0", 5.92e-5, 0.1115}};
  write_report(os, recs, eval_stats(recs));
  CHECK(os.str().find("mean 0.5920 1.1150") != std::string::npos);
  CHECK_THROWS(eval_stats({}));
}
