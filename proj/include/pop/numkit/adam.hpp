#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pop/numkit/tensor.hpp"

namespace pop::nk {

template <typename T>
struct AdamState {
  std::vector<T> first_moment;
  std::vector<T> second_moment;
  std::uint64_t step_count = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);
};

// One bias-corrected Adam update applied in place. Throws NumericalError on a
// non-finite gradient and leaves both the parameter and the state untouched.
template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamState<T>& state, T lr);

// Adam over a fixed list of tensors. Parameters whose gradient slot is empty
// (no gradient reached them this step) are skipped.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, T lr, T beta1 = T(0.9), T beta2 = T(0.999), T epsilon = T(1e-8));

  void step();
  void zero_grad();

  T learning_rate() const { return lr_; }
  const AdamState<T>& state(std::size_t i) const { return states_.at(i); }
  std::size_t size() const { return params_.size(); }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<AdamState<T>> states_;
  T lr_;
};

}  // namespace pop::nk
