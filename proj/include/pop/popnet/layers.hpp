#pragma once

#include <string>
#include <vector>

#include "pop/numkit/init.hpp"
#include "pop/numkit/ops.hpp"

namespace pop::net {

// Flat registry of named trainable tensors and batchnorm statistics, used for
// optimizers, checkpoints and hashing.
template <typename T>
struct ParamList {
  std::vector<std::pair<std::string, nk::Tensor<T>>> params;
  std::vector<std::pair<std::string, nk::RunningStats<T>*>> stats;
};

template <typename T>
struct Linear {
  nk::Tensor<T> weight, bias;  // [in x out], [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, nk::Rng& rng);
  nk::Tensor<T> operator()(const nk::Tensor<T>& x) const { return nk::affine(x, weight, bias); }
  void collect(ParamList<T>& out, const std::string& prefix);
};

template <typename T>
struct Conv {
  nk::Tensor<T> kernel, bias;  // [out x in x k x k], [out]
  std::size_t stride = 1, pad = 0;

  Conv() = default;
  Conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad, nk::Rng& rng);
  nk::Tensor<T> operator()(const nk::Tensor<T>& x) const {
    return nk::add_channel_bias(nk::conv2d(x, kernel, stride, pad), bias);
  }
  void collect(ParamList<T>& out, const std::string& prefix);
};

// Transposed convolution; kernel [in x out x k x k] so that it is the adjoint
// of a conv from `out` to `in` channels.
template <typename T>
struct ConvTranspose {
  nk::Tensor<T> kernel, bias;
  std::size_t stride = 1, pad = 0, output_padding = 0;

  ConvTranspose() = default;
  ConvTranspose(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad,
                std::size_t output_padding, nk::Rng& rng);
  nk::Tensor<T> operator()(const nk::Tensor<T>& x) const {
    return nk::add_channel_bias(nk::conv2d_transpose(x, kernel, stride, pad, output_padding), bias);
  }
  void collect(ParamList<T>& out, const std::string& prefix);
};

template <typename T>
struct BatchNorm {
  nk::Tensor<T> gamma, beta;
  nk::RunningStats<T> stats;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels);
  nk::Tensor<T> operator()(const nk::Tensor<T>& x, nk::NormMode mode) {
    return nk::batchnorm(x, gamma, beta, mode, stats);
  }
  void collect(ParamList<T>& out, const std::string& prefix);
};

}  // namespace pop::net
