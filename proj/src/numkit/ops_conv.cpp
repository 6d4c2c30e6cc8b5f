#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "pop/core/error.hpp"
#include "pop/numkit/ops.hpp"

namespace pop::nk {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

// Geometry of a strided convolution from an (in_h, in_w) image to (out_h, out_w).
struct ConvGeometry {
  std::size_t channels, in_h, in_w, out_h, out_w, k, stride, pad;

  std::size_t col_rows() const { return channels * k * k; }
  std::size_t col_cols() const { return out_h * out_w; }
};

template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* cols) {
  const std::size_t n = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = cols + ((c * g.k + ki) * g.k + kj) * n;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<long>(g.in_h) &&
                                iw < static_cast<long>(g.in_w);
            row[oh * g.out_w + ow] = inside ? image[(c * g.in_h + ih) * g.in_w + iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* image) {
  const std::size_t n = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = cols + ((c * g.k + ki) * g.k + kj) * n;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.in_h)) continue;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            if (iw < 0 || iw >= static_cast<long>(g.in_w)) continue;
            image[(c * g.in_h + ih) * g.in_w + iw] += row[oh * g.out_w + ow];
          }
        }
      }
    }
  }
}

void check_kernel(const Shape& ks, std::size_t stride, bool require_odd) {
  if (ks.size() != 4 || ks[2] != ks[3]) throw DimensionError("conv: kernel must be [O x C x k x k]");
  if (ks[2] == 0) throw DimensionError("conv: empty kernel");
  if (require_odd && ks[2] % 2 == 0) throw DimensionError("conv: kernel size must be odd, got " + std::to_string(ks[2]));
  if (stride == 0) throw DimensionError("conv: stride must be positive");
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t stride, std::size_t pad) {
  check_kernel(kernel.shape(), stride, true);
  if (x.rank() != 4) throw DimensionError("conv2d: input must be [B x C x H x W]");
  const std::size_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t out_c = kernel.dim(0), k = kernel.dim(2);
  if (kernel.dim(1) != channels) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) + " channels, input has " +
                         std::to_string(channels));
  }
  if (h + 2 * pad < k || w + 2 * pad < k) {
    throw DimensionError("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                         to_string(x.shape()));
  }
  const ConvGeometry g{channels, h, w, (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1,
                       k, stride, pad};

  std::vector<T> y(batch * out_c * g.col_cols());
  std::vector<T> cols(g.col_rows() * g.col_cols());
  CMapMat<T> km(kernel.data().data(), out_c, g.col_rows());
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.data().data() + b * channels * h * w, g, cols.data());
    MapMat<T>(y.data() + b * out_c * g.col_cols(), out_c, g.col_cols()).noalias() =
        km * CMapMat<T>(cols.data(), g.col_rows(), g.col_cols());
  }

  return make_result<T>({batch, out_c, g.out_h, g.out_w}, std::move(y), {x, kernel},
                        [g, batch, out_c](detail::Node<T>& self) {
                          const auto& xv = self.inputs[0]->value;
                          const auto& kv = self.inputs[1]->value;
                          auto* gx = grad_sink(self, 0);
                          auto* gk = grad_sink(self, 1);
                          std::vector<T> cols(g.col_rows() * g.col_cols());
                          CMapMat<T> km(kv.data(), out_c, g.col_rows());
                          const std::size_t in_plane = g.channels * g.in_h * g.in_w;
                          for (std::size_t b = 0; b < batch; ++b) {
                            CMapMat<T> gy(self.grad.data() + b * out_c * g.col_cols(), out_c, g.col_cols());
                            if (gk) {
                              im2col(xv.data() + b * in_plane, g, cols.data());
                              MapMat<T>(gk->data(), out_c, g.col_rows()).noalias() +=
                                  gy * CMapMat<T>(cols.data(), g.col_rows(), g.col_cols()).transpose();
                            }
                            if (gx) {
                              MapMat<T>(cols.data(), g.col_rows(), g.col_cols()).noalias() = km.transpose() * gy;
                              col2im_add(cols.data(), g, gx->data() + b * in_plane);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> conv2d_transpose(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t stride, std::size_t pad,
                           std::size_t output_padding) {
  // Even kernels are fine here: upsampling layers commonly use k = stride.
  check_kernel(kernel.shape(), stride, false);
  if (x.rank() != 4) throw DimensionError("conv2d_transpose: input must be [B x O x h x w]");
  if (output_padding >= stride) throw DimensionError("conv2d_transpose: output_padding must be < stride");
  const std::size_t batch = x.dim(0), in_c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t out_c = kernel.dim(1), k = kernel.dim(2);
  if (kernel.dim(0) != in_c) {
    throw DimensionError("conv2d_transpose: kernel expects " + std::to_string(kernel.dim(0)) +
                         " input channels, got " + std::to_string(in_c));
  }
  if (h == 0 || w == 0) throw DimensionError("conv2d_transpose: empty input");
  const long full_h = static_cast<long>((h - 1) * stride + k + output_padding) - 2 * static_cast<long>(pad);
  const long full_w = static_cast<long>((w - 1) * stride + k + output_padding) - 2 * static_cast<long>(pad);
  if (full_h < static_cast<long>(1) || full_w < 1 || full_h + 2 * static_cast<long>(pad) < static_cast<long>(k)) {
    throw DimensionError("conv2d_transpose: kernel " + std::to_string(k) + " larger than padded output");
  }
  // The transposed op scatters through the geometry of the forward conv that
  // maps the (big) output back onto the (small) input.
  const ConvGeometry g{out_c, static_cast<std::size_t>(full_h), static_cast<std::size_t>(full_w), h, w, k, stride, pad};

  const std::size_t out_plane = out_c * g.in_h * g.in_w;
  std::vector<T> y(batch * out_plane, T(0));
  std::vector<T> cols(g.col_rows() * g.col_cols());
  CMapMat<T> km(kernel.data().data(), in_c, g.col_rows());
  for (std::size_t b = 0; b < batch; ++b) {
    MapMat<T>(cols.data(), g.col_rows(), g.col_cols()).noalias() =
        km.transpose() * CMapMat<T>(x.data().data() + b * in_c * h * w, in_c, h * w);
    col2im_add(cols.data(), g, y.data() + b * out_plane);
  }

  return make_result<T>({batch, out_c, g.in_h, g.in_w}, std::move(y), {x, kernel},
                        [g, batch, in_c, out_plane](detail::Node<T>& self) {
                          const auto& xv = self.inputs[0]->value;
                          const auto& kv = self.inputs[1]->value;
                          auto* gx = grad_sink(self, 0);
                          auto* gk = grad_sink(self, 1);
                          std::vector<T> cols(g.col_rows() * g.col_cols());
                          CMapMat<T> km(kv.data(), in_c, g.col_rows());
                          const std::size_t hw = g.col_cols();
                          for (std::size_t b = 0; b < batch; ++b) {
                            im2col(self.grad.data() + b * out_plane, g, cols.data());
                            CMapMat<T> gc(cols.data(), g.col_rows(), hw);
                            if (gx) MapMat<T>(gx->data() + b * in_c * hw, in_c, hw).noalias() += km * gc;
                            if (gk) {
                              MapMat<T>(gk->data(), in_c, g.col_rows()).noalias() +=
                                  CMapMat<T>(xv.data() + b * in_c * hw, in_c, hw) * gc.transpose();
                            }
                          }
                        });
}

template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_channel_bias: bias " + to_string(bias.shape()) + " vs input " + to_string(x.shape()));
  }
  const std::size_t outer = x.dim(0), channels = x.dim(1), inner = x.numel() / (outer * channels);
  std::vector<T> y(x.data().begin(), x.data().end());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t c = 0; c < channels; ++c) {
      T* p = y.data() + (o * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) p[i] += bias.data()[c];
    }
  }
  return make_result<T>(x.shape(), std::move(y), {x, bias}, [outer, channels, inner](detail::Node<T>& self) {
    if (auto* g = grad_sink(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = grad_sink(self, 1)) {
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t c = 0; c < channels; ++c) {
          const T* p = self.grad.data() + (o * channels + c) * inner;
          T s = 0;
          for (std::size_t i = 0; i < inner; ++i) s += p[i];
          (*g)[c] += s;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, NormMode mode,
                    RunningStats<T>& stats) {
  if (x.rank() < 2) throw DimensionError("batchnorm: input needs a channel axis");
  const std::size_t outer = x.dim(0), channels = x.dim(1);
  if (gamma.numel() != channels || beta.numel() != channels || stats.mean.size() != channels ||
      stats.var.size() != channels) {
    throw DimensionError("batchnorm: per-channel parameters do not match " + std::to_string(channels) +
                         " channels");
  }
  const std::size_t inner = channels ? x.numel() / std::max<std::size_t>(outer * channels, 1) : 0;
  const std::size_t count = outer * inner;
  if (count == 0) throw DimensionError("batchnorm: empty batch");

  const auto xv = x.data();
  std::vector<T> mean_c(channels), invstd(channels);
  // Per-channel sums in memory order. With inner == 1 the input is a row-major
  // [rows x channels] matrix and the channel loop is the contiguous one.
  auto channel_sums = [&](auto&& value, std::vector<T>& out) {
    std::fill(out.begin(), out.end(), T(0));
    for (std::size_t o = 0; o < outer; ++o) {
      if (inner == 1) {
        for (std::size_t c = 0; c < channels; ++c) out[c] += value(o * channels + c, c);
      } else {
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t base = (o * channels + c) * inner;
          T s = 0;
          for (std::size_t i = 0; i < inner; ++i) s += value(base + i, c);
          out[c] += s;
        }
      }
    }
  };
  if (mode == NormMode::train) {
    std::vector<T> sq(channels);
    channel_sums([&](std::size_t k, std::size_t) { return xv[k]; }, mean_c);
    for (auto& m : mean_c) m /= static_cast<T>(count);
    channel_sums(
        [&](std::size_t k, std::size_t c) {
          const T d = xv[k] - mean_c[c];
          return d * d;
        },
        sq);
    for (std::size_t c = 0; c < channels; ++c) {
      const T var = sq[c] / static_cast<T>(count);
      invstd[c] = T(1) / std::sqrt(var + stats.eps);
      const T unbiased = count > 1 ? sq[c] / static_cast<T>(count - 1) : var;
      stats.mean[c] = (T(1) - stats.momentum) * stats.mean[c] + stats.momentum * mean_c[c];
      stats.var[c] = (T(1) - stats.momentum) * stats.var[c] + stats.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < channels; ++c) {
      mean_c[c] = stats.mean[c];
      invstd[c] = T(1) / std::sqrt(stats.var[c] + stats.eps);
    }
  }

  // xhat is kept for the backward pass only.
  const bool keep = grad_enabled() && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
  std::vector<T> xhat(keep ? x.numel() : 0), y(x.numel());
  const T* gp = gamma.data().data();
  const T* bp = beta.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    if (inner == 1) {
      const std::size_t base = o * channels;
      for (std::size_t c = 0; c < channels; ++c) {
        const T h = (xv[base + c] - mean_c[c]) * invstd[c];
        if (keep) xhat[base + c] = h;
        y[base + c] = gp[c] * h + bp[c];
      }
      continue;
    }
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (o * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const T h = (xv[base + i] - mean_c[c]) * invstd[c];
        if (keep) xhat[base + i] = h;
        y[base + i] = gp[c] * h + bp[c];
      }
    }
  }

  const bool train = mode == NormMode::train;
  return make_result<T>(
      x.shape(), std::move(y), {x, gamma, beta},
      [outer, channels, inner, count, invstd, xhat = std::move(xhat), train](detail::Node<T>& self) {
        const auto& gv = self.inputs[1]->value;
        const T* dy = self.grad.data();
        std::vector<T> sum_dy(channels, T(0)), sum_dy_xhat(channels, T(0));
        for (std::size_t o = 0; o < outer; ++o) {
          if (inner == 1) {
            const std::size_t base = o * channels;
            for (std::size_t c = 0; c < channels; ++c) {
              sum_dy[c] += dy[base + c];
              sum_dy_xhat[c] += dy[base + c] * xhat[base + c];
            }
            continue;
          }
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (o * channels + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              sum_dy[c] += dy[base + i];
              sum_dy_xhat[c] += dy[base + i] * xhat[base + i];
            }
          }
        }
        if (auto* g = grad_sink(self, 1)) {
          for (std::size_t c = 0; c < channels; ++c) (*g)[c] += sum_dy_xhat[c];
        }
        if (auto* g = grad_sink(self, 2)) {
          for (std::size_t c = 0; c < channels; ++c) (*g)[c] += sum_dy[c];
        }
        if (auto* g = grad_sink(self, 0)) {
          const T n = static_cast<T>(count);
          std::vector<T> k(channels), a(channels), b(channels);
          for (std::size_t c = 0; c < channels; ++c) {
            k[c] = gv[c] * invstd[c];
            a[c] = train ? sum_dy[c] / n : T(0);
            b[c] = train ? sum_dy_xhat[c] / n : T(0);
          }
          T* gx = g->data();
          for (std::size_t o = 0; o < outer; ++o) {
            if (inner == 1) {
              const std::size_t base = o * channels;
              for (std::size_t c = 0; c < channels; ++c) {
                gx[base + c] += k[c] * (dy[base + c] - a[c] - xhat[base + c] * b[c]);
              }
              continue;
            }
            for (std::size_t c = 0; c < channels; ++c) {
              const std::size_t base = (o * channels + c) * inner;
              for (std::size_t i = 0; i < inner; ++i) gx[base + i] += k[c] * (dy[base + i] - a[c] - xhat[base + i] * b[c]);
            }
          }
        }
      });
}

#define POP_NK_INSTANTIATE_CONV(T)                                                                      \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t);             \
  template Tensor<T> conv2d_transpose(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t,    \
                                      std::size_t);                                                    \
  template Tensor<T> add_channel_bias(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> batchnorm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, NormMode,         \
                               RunningStats<T>&);

POP_NK_INSTANTIATE_CONV(float)
POP_NK_INSTANTIATE_CONV(double)

}  // namespace pop::nk
