#pragma once

#include <map>
#include <string>
#include <vector>

#include "pop/core/kdtree.hpp"
#include "pop/core/pointset.hpp"
#include "pop/numkit/tensor.hpp"

namespace pop::obj {

using NNIndex = KdTree;

NNIndex build_nn_index(const PointSet& y);
inline Neighbor query(const NNIndex& index, const Eigen::Vector3d& q) { return index.nearest(q); }

// Symmetric mean squared nearest-neighbor distance, m^2.
double chamfer_l2(const PointSet& x, const PointSet& y);
double chamfer_l2(const std::vector<Eigen::Vector3d>& x, const std::vector<Eigen::Vector3d>& y);

// Mean L1 difference between each x normal and the normal of its nearest y
// point. Normals must be unit length within 1e-3.
double normal_loss(const PointSet& x, const PointSet& y);

struct LossWeights {
  double lambda_d = 2.0e4;
  double lambda_n = 0.1;
  double lambda_rd = 2.0e3;
  double lambda_rg = 1.0;

  static LossWeights standard() { return {}; }
  void validate() const;
};

struct LossComponents {
  double chamfer = 0, normal = 0, reg_displacement = 0, reg_geometry = 0;
};

double total_loss(const LossComponents& c, const LossWeights& w);

// A ground-truth cloud with its search structure, built once.
struct Target {
  PointSet cloud;
  NNIndex index;

  explicit Target(PointSet cloud);
};

// Differentiable versions for training. Correspondences are fixed at the
// current nearest neighbors.
template <typename T>
struct PointLosses {
  nk::Tensor<T> chamfer;  // one-element tensors
  nk::Tensor<T> normal;
};

// points, normals: [M x 3] predictions for one example.
template <typename T>
PointLosses<T> point_losses(const nk::Tensor<T>& points, const nk::Tensor<T>& normals, const Target& target);

// mean_i ||r_i||^2 over the rows of r [M x 3].
template <typename T>
nk::Tensor<T> displacement_regularizer(const nk::Tensor<T>& displacements);
// (1/C) sum_m ||vec(G_m)||^2
template <typename T>
nk::Tensor<T> geometry_regularizer(const std::vector<nk::Tensor<T>>& bank);

// Plain-number versions of the regularizers.
double reg_displacement(const std::vector<Eigen::Vector3d>& r);
double reg_geometry(const std::vector<std::vector<double>>& bank);

}  // namespace pop::obj
