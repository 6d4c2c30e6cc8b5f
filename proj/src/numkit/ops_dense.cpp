#include <algorithm>
#include <cmath>
#include <numeric>

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

void require(bool ok, const char* msg) {
  if (!ok) throw DimensionError(msg);
}
void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require(x.rank() == 2 && weight.rank() == 2 && bias.rank() == 1, "affine: expects x[BxI], W[IxO], b[O]");
  const std::size_t rows = x.dim(0), in = x.dim(1), out = weight.dim(1);
  if (weight.dim(0) != in) {
    throw DimensionError("affine: inner dimensions differ " + to_string(x.shape()) + " vs " + to_string(weight.shape()));
  }
  if (bias.dim(0) != out) {
    throw DimensionError("affine: bias length " + std::to_string(bias.dim(0)) + " != " + std::to_string(out));
  }

  std::vector<T> y(rows * out);
  MapMat<T> ym(y.data(), rows, out);
  CMapMat<T> xm(x.data().data(), rows, in);
  CMapMat<T> wm(weight.data().data(), in, out);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bm(bias.data().data(), out);
  ym.noalias() = xm * wm;
  ym.rowwise() += bm;

  return make_result<T>({rows, out}, std::move(y), {x, weight, bias}, [rows, in, out](detail::Node<T>& self) {
    CMapMat<T> gy(self.grad.data(), rows, out);
    const auto& xv = self.inputs[0]->value;
    const auto& wv = self.inputs[1]->value;
    if (auto* gx = grad_sink(self, 0)) {
      MapMat<T>(gx->data(), rows, in).noalias() += gy * CMapMat<T>(wv.data(), in, out).transpose();
    }
    if (auto* gw = grad_sink(self, 1)) {
      MapMat<T>(gw->data(), in, out).noalias() += CMapMat<T>(xv.data(), rows, in).transpose() * gy;
    }
    if (auto* gb = grad_sink(self, 2)) {
      // Plain row order; Eigen's column reduction depends on buffer alignment.
      std::vector<T> acc(out, T(0));
      const T* g = self.grad.data();
      for (std::size_t r = 0; r < rows; ++r, g += out) {
        for (std::size_t c = 0; c < out; ++c) acc[c] += g[c];
      }
      for (std::size_t c = 0; c < out; ++c) (*gb)[c] += acc[c];
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: incompatible shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> y(m * n);
  MapMat<T>(y.data(), m, n).noalias() = CMapMat<T>(a.data().data(), m, k) * CMapMat<T>(b.data().data(), k, n);
  return make_result<T>({m, n}, std::move(y), {a, b}, [m, k, n](detail::Node<T>& self) {
    CMapMat<T> gy(self.grad.data(), m, n);
    if (auto* ga = grad_sink(self, 0)) {
      MapMat<T>(ga->data(), m, k).noalias() += gy * CMapMat<T>(self.inputs[1]->value.data(), k, n).transpose();
    }
    if (auto* gb = grad_sink(self, 1)) {
      MapMat<T>(gb->data(), k, n).noalias() += CMapMat<T>(self.inputs[0]->value.data(), m, k).transpose() * gy;
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(y), {a, b}, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = grad_sink(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] - b.data()[i];
  return make_result<T>(a.shape(), std::move(y), {a, b}, [](detail::Node<T>& self) {
    if (auto* g = grad_sink(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = grad_sink(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(y), {a, b}, [](detail::Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* g = grad_sink(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (auto* g = grad_sink(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * factor;
  return make_result<T>(a.shape(), std::move(y), {a}, [factor](detail::Node<T>& self) {
    if (auto* g = grad_sink(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * factor;
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = std::accumulate(a.data().begin(), a.data().end(), T(0));
  return make_result<T>({1}, {s}, {a}, [](detail::Node<T>& self) {
    if (auto* g = grad_sink(self, 0)) {
      for (auto& v : *g) v += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  require(a.numel() > 0, "mean of empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> sum_squares(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.data()) s += v * v;
  return make_result<T>({1}, {s}, {a}, [](detail::Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    if (auto* g = grad_sink(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += T(2) * av[i] * self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> weighted_sum(const std::vector<Tensor<T>>& scalars, const std::vector<T>& weights) {
  require(scalars.size() == weights.size(), "weighted_sum: term and weight counts differ");
  T s = 0;
  for (std::size_t k = 0; k < scalars.size(); ++k) {
    require(scalars[k].numel() == 1, "weighted_sum: terms must be scalars");
    s += weights[k] * scalars[k].data()[0];
  }
  return make_result<T>({1}, {s}, scalars, [weights](detail::Node<T>& self) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (auto* g = grad_sink(self, k)) (*g)[0] += weights[k] * self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.numel()) throw DimensionError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  std::vector<T> y(a.data().begin(), a.data().end());
  return make_result<T>(std::move(shape), std::move(y), {a}, [](detail::Node<T>& self) {
    if (auto* g = grad_sink(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

namespace {

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& ref = parts[0].shape();
  require(axis < ref.size(), "concat: axis out of range");
  Shape out_shape = ref;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    require(p.rank() == ref.size(), "concat: rank mismatch");
    for (std::size_t i = 0; i < ref.size(); ++i) {
      require(i == axis || p.dim(i) == ref[i],
              "concat: shape mismatch " + to_string(p.shape()) + " vs " + to_string(ref));
    }
    lens.push_back(p.dim(axis));
    out_shape[axis] += p.dim(axis);
  }
  const AxisSplit o = split_axis(out_shape, axis);
  std::vector<T> y(numel(out_shape));
  std::size_t start = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto src = parts[k].data();
    const std::size_t chunk = lens[k] * o.inner;
    for (std::size_t a = 0; a < o.outer; ++a) {
      std::copy_n(src.data() + a * chunk, chunk, y.data() + a * o.len * o.inner + start * o.inner);
    }
    start += lens[k];
  }
  return make_result<T>(out_shape, std::move(y), parts, [o, lens](detail::Node<T>& self) {
    std::size_t begin = 0;
    for (std::size_t k = 0; k < lens.size(); ++k) {
      const std::size_t chunk = lens[k] * o.inner;
      if (auto* g = grad_sink(self, k)) {
        for (std::size_t a = 0; a < o.outer; ++a) {
          const T* src = self.grad.data() + a * o.len * o.inner + begin * o.inner;
          T* dst = g->data() + a * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
      begin += lens[k];
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  require(axis < a.rank() && begin <= end && end <= a.dim(axis),
          "slice: range [" + std::to_string(begin) + "," + std::to_string(end) + ") invalid for " +
              to_string(a.shape()));
  const AxisSplit in = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * in.inner;
  std::vector<T> y(numel(out_shape));
  for (std::size_t o = 0; o < in.outer; ++o) {
    std::copy_n(a.data().data() + o * in.len * in.inner + begin * in.inner, chunk, y.data() + o * chunk);
  }
  return make_result<T>(out_shape, std::move(y), {a}, [in, begin, chunk](detail::Node<T>& self) {
    if (auto* g = grad_sink(self, 0)) {
      for (std::size_t o = 0; o < in.outer; ++o) {
        T* dst = g->data() + o * in.len * in.inner + begin * in.inner;
        const T* src = self.grad.data() + o * chunk;
        for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation act) {
  if (act.kind != Activation::Kind::relu && !(act.param > 0.0)) {
    throw std::invalid_argument("activation parameter must be positive");
  }
  const T p = static_cast<T>(act.param);
  const std::size_t n = x.numel();
  // The slope is only needed by the backward pass.
  const bool keep = grad_enabled() && x.requires_grad();
  std::vector<T> y(n), slope(keep ? n : 0);
  const auto xv = x.data();
  switch (act.kind) {
    case Activation::Kind::relu:
      for (std::size_t i = 0; i < n; ++i) {
        y[i] = xv[i] > T(0) ? xv[i] : T(0);
        if (keep) slope[i] = xv[i] > T(0) ? T(1) : T(0);
      }
      break;
    case Activation::Kind::leaky_relu:
      for (std::size_t i = 0; i < n; ++i) {
        y[i] = xv[i] > T(0) ? xv[i] : p * xv[i];
        if (keep) slope[i] = xv[i] > T(0) ? T(1) : p;
      }
      break;
    case Activation::Kind::softplus: {
      // Chunks small enough for the stack let exp and log run vectorized
      // without temporaries. log1p(e) is recovered as log(u) e / (u - 1) with
      // u = 1 + e, which stays accurate for small e. The lower clamp keeps e
      // out of the slow subnormal range; softplus is below 1e-34 there anyway.
      constexpr Eigen::Index kChunk = 512;
      using Chunk = Eigen::Array<T, Eigen::Dynamic, 1, 0, kChunk, 1>;
      for (std::size_t start = 0; start < n; start += kChunk) {
        const auto len = static_cast<Eigen::Index>(std::min<std::size_t>(kChunk, n - start));
        const T* xs = xv.data() + start;
        const Chunk e = (p * Eigen::Map<const Chunk>(xs, len)).max(T(-80)).min(T(kSoftplusThreshold)).exp();
        const Chunk u = T(1) + e;
        const Chunk ratio = u.log() * e / (u - T(1));  // NaN where u == 1, replaced below
        T* ys = y.data() + start;
        for (Eigen::Index i = 0; i < len; ++i) {
          const bool linear = p * xs[i] > T(kSoftplusThreshold);
          ys[i] = linear ? xs[i] : (u[i] == T(1) ? e[i] : ratio[i]) / p;
        }
        if (!keep) continue;
        const Chunk sigmoid = e / u;
        T* ss = slope.data() + start;
        for (Eigen::Index i = 0; i < len; ++i) ss[i] = p * xs[i] > T(kSoftplusThreshold) ? T(1) : sigmoid[i];
      }
      break;
    }
  }
  return make_result<T>(x.shape(), std::move(y), {x}, [slope = std::move(slope)](detail::Node<T>& self) {
    auto* g = grad_sink(self, 0);
    if (!g) return;
    T* gx = g->data();
    const T* dy = self.grad.data();
    for (std::size_t i = 0; i < slope.size(); ++i) gx[i] += dy[i] * slope[i];
  });
}

template <typename T>
Tensor<T> bilinear_gather(const Tensor<T>& features, const BilinearTaps& taps) {
  require(features.rank() == 4, "bilinear_gather: features must be [B x C x H x W]");
  const std::size_t batch = features.dim(0), channels = features.dim(1);
  const std::size_t plane = features.dim(2) * features.dim(3);
  const std::size_t m = taps.size();
  require(taps.offsets.size() == m && taps.weights.size() == m, "bilinear_gather: ragged taps");
  for (std::size_t i = 0; i < m; ++i) {
    require(taps.batch[i] < batch, "bilinear_gather: batch index out of range");
    for (auto off : taps.offsets[i]) require(off < plane, "bilinear_gather: offset out of range");
  }
  std::vector<T> y(m * channels);
  const T* f = features.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* base = f + taps.batch[i] * channels * plane;
    T* out = y.data() + i * channels;
    for (int k = 0; k < 4; ++k) {
      const T w = static_cast<T>(taps.weights[i][k]);
      if (w == T(0)) continue;
      const std::size_t off = taps.offsets[i][k];
      for (std::size_t c = 0; c < channels; ++c) out[c] += w * base[c * plane + off];
    }
  }
  return make_result<T>({m, channels}, std::move(y), {features},
                        [taps, channels, plane](detail::Node<T>& self) {
                          auto* g = grad_sink(self, 0);
                          if (!g) return;
                          for (std::size_t i = 0; i < taps.size(); ++i) {
                            T* base = g->data() + taps.batch[i] * channels * plane;
                            const T* gy = self.grad.data() + i * channels;
                            for (int k = 0; k < 4; ++k) {
                              const T w = static_cast<T>(taps.weights[i][k]);
                              if (w == T(0)) continue;
                              const std::size_t off = taps.offsets[i][k];
                              for (std::size_t c = 0; c < channels; ++c) base[c * plane + off] += w * gy[c];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> normalize_rows(const Tensor<T>& x) {
  require(x.rank() == 2, "normalize_rows: expects a matrix");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> y(x.numel());
  std::vector<T> norms(rows);
  const auto xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    T s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += xv[r * cols + c] * xv[r * cols + c];
    // A zero row has no direction; the floor keeps the output finite.
    norms[r] = std::max(std::sqrt(s), T(1e-12));
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = xv[r * cols + c] / norms[r];
  }
  auto out = make_result<T>(x.shape(), y, {x}, [rows, cols, norms, y](detail::Node<T>& self) {
    auto* g = grad_sink(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += y[r * cols + c] * self.grad[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        (*g)[r * cols + c] += (self.grad[r * cols + c] - y[r * cols + c] * dot) / norms[r];
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> rotate_rows(const Tensor<T>& r, const std::vector<T>& rotations) {
  require(r.rank() == 2 && r.dim(1) == 3, "rotate_rows: expects [M x 3]");
  const std::size_t m = r.dim(0);
  require(rotations.size() == 9 * m, "rotate_rows: need 9 values per row");
  std::vector<T> y(3 * m);
  const auto rv = r.data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* R = rotations.data() + 9 * i;
    for (int a = 0; a < 3; ++a) {
      y[3 * i + a] = R[3 * a] * rv[3 * i] + R[3 * a + 1] * rv[3 * i + 1] + R[3 * a + 2] * rv[3 * i + 2];
    }
  }
  return make_result<T>({m, 3}, std::move(y), {r}, [m, rotations](detail::Node<T>& self) {
    auto* g = grad_sink(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < m; ++i) {
      const T* R = rotations.data() + 9 * i;
      const T* gy = self.grad.data() + 3 * i;
      for (int b = 0; b < 3; ++b) {
        (*g)[3 * i + b] += R[b] * gy[0] + R[3 + b] * gy[1] + R[6 + b] * gy[2];
      }
    }
  });
}

#define POP_NK_INSTANTIATE_DENSE(T)                                                             \
  template Tensor<T> affine(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale(const Tensor<T>&, T);                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                    \
  template Tensor<T> mean(const Tensor<T>&);                                                   \
  template Tensor<T> sum_squares(const Tensor<T>&);                                            \
  template Tensor<T> weighted_sum(const std::vector<Tensor<T>>&, const std::vector<T>&);       \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                         \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                       \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);           \
  template Tensor<T> activation(const Tensor<T>&, Activation);                                 \
  template Tensor<T> bilinear_gather(const Tensor<T>&, const BilinearTaps&);                   \
  template Tensor<T> normalize_rows(const Tensor<T>&);                                         \
  template Tensor<T> rotate_rows(const Tensor<T>&, const std::vector<T>&);

POP_NK_INSTANTIATE_DENSE(float)
POP_NK_INSTANTIATE_DENSE(double)

}  // namespace pop::nk
