#include "pop/numkit/adam.hpp"

#include <cmath>
#include <string>

#include "pop/core/error.hpp"

namespace pop::nk {

template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamState<T>& state, T lr) {
  if (param.size() != grad.size()) throw DimensionError("adam_step: gradient size differs from parameter");
  if (!(lr > T(0))) throw std::invalid_argument("adam_step: learning rate must be positive");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericalError("adam_step: non-finite gradient at element " + std::to_string(i));
    }
  }
  if (state.first_moment.empty()) {
    state.first_moment.assign(param.size(), T(0));
    state.second_moment.assign(param.size(), T(0));
  }
  if (state.first_moment.size() != param.size()) throw DimensionError("adam_step: moment shape mismatch");

  ++state.step_count;
  const T t = static_cast<T>(state.step_count);
  const T bc1 = T(1) - std::pow(state.beta1, t);
  const T bc2 = T(1) - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    T& m = state.first_moment[i];
    T& v = state.second_moment[i];
    m = state.beta1 * m + (T(1) - state.beta1) * grad[i];
    v = state.beta2 * v + (T(1) - state.beta2) * grad[i] * grad[i];
    const T m_hat = m / bc1;
    const T v_hat = v / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, T lr, T beta1, T beta2, T epsilon)
    : params_(std::move(params)), states_(params_.size()), lr_(lr) {
  if (!(lr > T(0))) throw std::invalid_argument("Adam: learning rate must be positive");
  for (auto& s : states_) {
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
  }
}

template <typename T>
void Adam<T>::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    adam_step<T>(p.mutable_data(), p.grad(), states_[i], lr_);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template void adam_step(std::span<float>, std::span<const float>, AdamState<float>&, float);
template void adam_step(std::span<double>, std::span<const double>, AdamState<double>&, double);
template class Adam<float>;
template class Adam<double>;

}  // namespace pop::nk
