#include "pop/popnet/layers.hpp"

namespace pop::net {

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, nk::Rng& rng)
    : weight(nk::fan_in_uniform<T>({in, out}, in, rng)), bias(nk::fan_in_uniform<T>({out}, in, rng)) {}

template <typename T>
void Linear<T>::collect(ParamList<T>& out, const std::string& prefix) {
  out.params.emplace_back(prefix + ".weight", weight);
  out.params.emplace_back(prefix + ".bias", bias);
}

template <typename T>
Conv<T>::Conv(std::size_t in, std::size_t out, std::size_t k, std::size_t stride_, std::size_t pad_, nk::Rng& rng)
    : kernel(nk::fan_in_uniform<T>({out, in, k, k}, in * k * k, rng)),
      bias(nk::fan_in_uniform<T>({out}, in * k * k, rng)),
      stride(stride_),
      pad(pad_) {}

template <typename T>
void Conv<T>::collect(ParamList<T>& out, const std::string& prefix) {
  out.params.emplace_back(prefix + ".weight", kernel);
  out.params.emplace_back(prefix + ".bias", bias);
}

template <typename T>
ConvTranspose<T>::ConvTranspose(std::size_t in, std::size_t out, std::size_t k, std::size_t stride_,
                                std::size_t pad_, std::size_t output_padding_, nk::Rng& rng)
    : kernel(nk::fan_in_uniform<T>({in, out, k, k}, out * k * k, rng)),
      bias(nk::fan_in_uniform<T>({out}, out * k * k, rng)),
      stride(stride_),
      pad(pad_),
      output_padding(output_padding_) {}

template <typename T>
void ConvTranspose<T>::collect(ParamList<T>& out, const std::string& prefix) {
  out.params.emplace_back(prefix + ".weight", kernel);
  out.params.emplace_back(prefix + ".bias", bias);
}

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels)
    : gamma(nk::Tensor<T>::full({channels}, T(1), true)), beta(nk::Tensor<T>::zeros({channels}, true)),
      stats(channels) {}

template <typename T>
void BatchNorm<T>::collect(ParamList<T>& out, const std::string& prefix) {
  out.params.emplace_back(prefix + ".gamma", gamma);
  out.params.emplace_back(prefix + ".beta", beta);
  out.stats.emplace_back(prefix, &stats);
}

template struct Linear<float>;
template struct Linear<double>;
template struct Conv<float>;
template struct Conv<double>;
template struct ConvTranspose<float>;
template struct ConvTranspose<double>;
template struct BatchNorm<float>;
template struct BatchNorm<double>;

}  // namespace pop::net
