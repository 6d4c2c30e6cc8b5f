#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "pop/numkit/tensor.hpp"

namespace pop::nk {

// ---- dense algebra -------------------------------------------------------

// y = x W + b for x [B x I], W [I x O], b [O].
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise, identical shapes.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

// Reductions to a one-element tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& a);
template <typename T>
Tensor<T> mean(const Tensor<T>& a);
template <typename T>
Tensor<T> sum_squares(const Tensor<T>& a);

// Weighted sum of one-element tensors: sum_k w_k * s_k.
template <typename T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& scalars, const std::vector<T>& weights);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);

// Half-open range [begin, end) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end);

// ---- convolution (NCHW) --------------------------------------------------

// x [B x C x H x W], kernel [O x C x k x k]; output spatial size
// floor((H + 2 pad - k) / stride) + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t stride, std::size_t pad);

// Adjoint of conv2d with respect to its input. x [B x O x h x w] and the same
// kernel layout [O x C x k x k] as the conv2d it transposes; output is
// [B x C x H x W] with H = (h - 1) stride - 2 pad + k + output_padding.
template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t stride,
                           std::size_t pad, std::size_t output_padding = 0);

// x [B x C x ...] plus a per-channel bias [C].
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias);

// ---- normalization and activations ---------------------------------------

enum class NormMode { train, eval };

template <typename T>
struct RunningStats {
  std::vector<T> mean;
  std::vector<T> var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  explicit RunningStats(std::size_t channels = 0)
      : mean(channels, T(0)), var(channels, T(1)) {}
};

// Per-channel normalization over every axis except axis 1. Train mode uses
// batch statistics and updates `stats`; eval mode reads `stats` only.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    NormMode mode, RunningStats<T>& stats);

struct Activation {
  enum class Kind { relu, leaky_relu, softplus };
  Kind kind = Kind::relu;
  double param = 0.0;  // leaky slope or softplus beta

  static Activation relu() { return {Kind::relu, 0.0}; }
  static Activation leaky_relu(double alpha) { return {Kind::leaky_relu, alpha}; }
  static Activation softplus(double beta) { return {Kind::softplus, beta}; }
};

// Above this value of beta * x softplus returns x to avoid exp overflow.
inline constexpr double kSoftplusThreshold = 30.0;

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind);

// ---- point-wise geometry helpers -----------------------------------------

// Four-tap gather from feature maps. Each output row m reads map `batch[m]`
// at flattened spatial offsets `offsets[m]` with weights `weights[m]`.
struct BilinearTaps {
  std::vector<std::size_t> batch;
  std::vector<std::array<std::size_t, 4>> offsets;
  std::vector<std::array<double, 4>> weights;

  std::size_t size() const { return batch.size(); }
};

// F [B x C x H x W] -> [M x C].
template <typename T>
Tensor<T> bilinear_gather(const Tensor<T>& features, const BilinearTaps& taps);

// Rows scaled to unit Euclidean length.
template <typename T>
Tensor<T> normalize_rows(const Tensor<T>& x);

// y_m = R_m r_m for r [M x 3] and constant row-major 3x3 blocks R (9 M values).
template <typename T>
Tensor<T> rotate_rows(const Tensor<T>& r, const std::vector<T>& rotations);

}  // namespace pop::nk
