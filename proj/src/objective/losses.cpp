#include "pop/objective/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "pop/core/error.hpp"
#include "pop/numkit/ops.hpp"

namespace pop::obj {

namespace {

void require_nonempty(std::size_t a, std::size_t b, const char* what) {
  if (a == 0 || b == 0) throw std::invalid_argument(std::string(what) + ": empty point set");
}

void require_unit(const std::vector<Eigen::Vector3d>& normals, const char* which) {
  for (const auto& n : normals) {
    if (!(std::abs(n.norm() - 1.0) <= 1e-3)) {
      throw std::invalid_argument(std::string("normal_loss: non-unit normal in ") + which);
    }
  }
}

// Sum of nearest squared distances from each a to b, accumulated in index order.
double directed_sum(const std::vector<Eigen::Vector3d>& a, const NNIndex& b) {
  double s = 0;
  for (const auto& p : a) s += b.nearest(p).sq_dist;
  return s;
}

template <typename T>
std::vector<Eigen::Vector3d> rows_of(const nk::Tensor<T>& t) {
  if (t.rank() != 2 || t.dim(1) != 3) throw DimensionError("expected an [M x 3] tensor, got " + nk::to_string(t.shape()));
  std::vector<Eigen::Vector3d> out(t.dim(0));
  const auto v = t.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Eigen::Vector3d(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
  return out;
}

}  // namespace

NNIndex build_nn_index(const PointSet& y) {
  if (y.empty()) throw std::invalid_argument("nearest-neighbor index needs at least one point");
  return NNIndex(y.points);
}

double chamfer_l2(const std::vector<Eigen::Vector3d>& x, const std::vector<Eigen::Vector3d>& y) {
  require_nonempty(x.size(), y.size(), "chamfer_l2");
  const NNIndex ix(x), iy(y);
  return directed_sum(x, iy) / static_cast<double>(x.size()) + directed_sum(y, ix) / static_cast<double>(y.size());
}

double chamfer_l2(const PointSet& x, const PointSet& y) { return chamfer_l2(x.points, y.points); }

double normal_loss(const PointSet& x, const PointSet& y) {
  require_nonempty(x.size(), y.size(), "normal_loss");
  if (x.normals.size() != x.size() || y.normals.size() != y.size()) throw DimensionError("normal_loss: missing normals");
  require_unit(x.normals, "X");
  require_unit(y.normals, "Y");
  const NNIndex iy(y.points);
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += (x.normals[i] - y.normals[iy.nearest(x.points[i]).index]).lpNorm<1>();
  }
  return s / static_cast<double>(x.size());
}

void LossWeights::validate() const {
  for (double w : {lambda_d, lambda_n, lambda_rd, lambda_rg}) {
    if (!std::isfinite(w) || w < 0) throw std::invalid_argument("loss weights must be finite and non-negative");
  }
}

double total_loss(const LossComponents& c, const LossWeights& w) {
  return w.lambda_d * c.chamfer + w.lambda_n * c.normal + w.lambda_rd * c.reg_displacement +
         w.lambda_rg * c.reg_geometry;
}

Target::Target(PointSet c) : cloud(std::move(c)), index(build_nn_index(cloud)) {}

template <typename T>
PointLosses<T> point_losses(const nk::Tensor<T>& points, const nk::Tensor<T>& normals, const Target& target) {
  const std::vector<Eigen::Vector3d> x = rows_of(points);
  const std::vector<Eigen::Vector3d> nx = rows_of(normals);
  if (x.size() != nx.size()) throw DimensionError("point_losses: points and normals differ in count");
  require_nonempty(x.size(), target.cloud.size(), "point_losses");
  const auto& y = target.cloud.points;
  const auto& ny = target.cloud.normals;
  const std::size_t m = x.size(), n = y.size();

  std::vector<std::size_t> x_to_y(m), y_to_x(n);
  double forward = 0, backward = 0, normal = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const Neighbor nb = target.index.nearest(x[i]);
    x_to_y[i] = nb.index;
    forward += nb.sq_dist;
    normal += (nx[i] - ny[nb.index]).lpNorm<1>();
  }
  const NNIndex ix(x);
  for (std::size_t j = 0; j < n; ++j) {
    const Neighbor nb = ix.nearest(y[j]);
    y_to_x[j] = nb.index;
    backward += nb.sq_dist;
  }
  const double cd = forward / m + backward / n;

  // The closures keep their own copies so the target may go away before backprop.
  std::vector<Eigen::Vector3d> matched(m), matched_normals(m);
  for (std::size_t i = 0; i < m; ++i) {
    matched[i] = y[x_to_y[i]];
    matched_normals[i] = ny[x_to_y[i]];
  }

  PointLosses<T> out;
  out.chamfer = nk::make_result<T>(
      {1}, {static_cast<T>(cd)}, {points},
      [matched = std::move(matched), y_to_x = std::move(y_to_x), y, m, n](nk::detail::Node<T>& self) {
        auto* g = nk::grad_sink(self, 0);
        if (!g) return;
        const auto& xv = self.inputs[0]->value;
        const double gy = self.grad[0];
        for (std::size_t i = 0; i < m; ++i) {
          for (int k = 0; k < 3; ++k) (*g)[3 * i + k] += static_cast<T>(gy * 2.0 * (xv[3 * i + k] - matched[i][k]) / m);
        }
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t i = y_to_x[j];
          for (int k = 0; k < 3; ++k) (*g)[3 * i + k] += static_cast<T>(gy * 2.0 * (xv[3 * i + k] - y[j][k]) / n);
        }
      });
  out.normal = nk::make_result<T>({1}, {static_cast<T>(normal / m)}, {normals},
                                  [matched_normals = std::move(matched_normals), m](nk::detail::Node<T>& self) {
                                    auto* g = nk::grad_sink(self, 0);
                                    if (!g) return;
                                    const auto& nv = self.inputs[0]->value;
                                    const T gy = self.grad[0] / static_cast<T>(m);
                                    for (std::size_t i = 0; i < m; ++i) {
                                      for (int k = 0; k < 3; ++k) {
                                        const double d = nv[3 * i + k] - matched_normals[i][k];
                                        (*g)[3 * i + k] += d > 0 ? gy : d < 0 ? -gy : T(0);
                                      }
                                    }
                                  });
  return out;
}

template <typename T>
nk::Tensor<T> displacement_regularizer(const nk::Tensor<T>& displacements) {
  if (displacements.rank() != 2 || displacements.dim(0) == 0) {
    throw DimensionError("displacement regularizer expects [M x 3] with M > 0");
  }
  return nk::scale(nk::sum_squares(displacements), T(1) / static_cast<T>(displacements.dim(0)));
}

template <typename T>
nk::Tensor<T> geometry_regularizer(const std::vector<nk::Tensor<T>>& bank) {
  if (bank.empty()) return nk::Tensor<T>::scalar(T(0));
  std::vector<nk::Tensor<T>> terms;
  for (const auto& g : bank) terms.push_back(nk::sum_squares(g));
  return nk::weighted_sum(terms, std::vector<T>(terms.size(), T(1) / static_cast<T>(bank.size())));
}

double reg_displacement(const std::vector<Eigen::Vector3d>& r) {
  if (r.empty()) return 0.0;
  double s = 0;
  for (const auto& v : r) s += v.squaredNorm();
  return s / static_cast<double>(r.size());
}

double reg_geometry(const std::vector<std::vector<double>>& bank) {
  if (bank.empty()) return 0.0;
  double s = 0;
  for (const auto& g : bank)
    for (double v : g) s += v * v;
  return s / static_cast<double>(bank.size());
}

#define POP_OBJ_INSTANTIATE(T)                                                                         \
  template PointLosses<T> point_losses<T>(const nk::Tensor<T>&, const nk::Tensor<T>&, const Target&); \
  template nk::Tensor<T> displacement_regularizer<T>(const nk::Tensor<T>&);                            \
  template nk::Tensor<T> geometry_regularizer<T>(const std::vector<nk::Tensor<T>>&);

POP_OBJ_INSTANTIATE(float)
POP_OBJ_INSTANTIATE(double)

}  // namespace pop::obj
