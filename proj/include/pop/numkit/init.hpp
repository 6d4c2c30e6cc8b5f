#pragma once

#include <cmath>
#include <random>

#include "pop/numkit/tensor.hpp"

namespace pop::nk {

using Rng = std::mt19937_64;

template <typename T>
Tensor<T> uniform(Shape shape, T low, T high, Rng& rng, bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(low, high);
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::from_vector(std::move(shape), std::move(v), requires_grad);
}

template <typename T>
Tensor<T> gaussian(Shape shape, T sigma, Rng& rng, bool requires_grad = false) {
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<T> v(numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::from_vector(std::move(shape), std::move(v), requires_grad);
}

// Uniform in +-1/sqrt(fan_in), the usual default for linear and conv layers.
template <typename T>
Tensor<T> fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const T bound = T(1) / std::sqrt(static_cast<T>(fan_in));
  return uniform<T>(std::move(shape), -bound, bound, rng, true);
}

}  // namespace pop::nk
