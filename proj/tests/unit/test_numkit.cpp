#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "pop/core/error.hpp"
#include "pop/numkit/adam.hpp"
#include "pop/numkit/archive.hpp"
#include "pop/numkit/gradcheck.hpp"
#include "pop/numkit/init.hpp"
#include "pop/numkit/ops.hpp"

using namespace pop;
using namespace pop::nk;
using TD = Tensor<double>;

namespace {

std::vector<double> naive_matmul(const TD& a, const TD& b) {
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t t = 0; t < k; ++t) out[i * m + j] += a.at(i * k + t) * b.at(t * m + j);
  return out;
}

// Direct nested-loop convolution used as an oracle.
std::vector<double> naive_conv(const TD& x, const TD& kern, std::size_t stride, std::size_t pad) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = kern.dim(0), k = kern.dim(2);
  const std::size_t oh = (H + 2 * pad - k) / stride + 1, ow = (W + 2 * pad - k) / stride + 1;
  std::vector<double> y(B * O * oh * ow, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          double s = 0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t u = 0; u < k; ++u)
              for (std::size_t v = 0; v < k; ++v) {
                const long r = long(i * stride + u) - long(pad), q = long(j * stride + v) - long(pad);
                if (r < 0 || q < 0 || r >= long(H) || q >= long(W)) continue;
                s += x.at(((b * C + c) * H + r) * W + q) * kern.at(((o * C + c) * k + u) * k + v);
              }
          y[((b * O + o) * oh + i) * ow + j] = s;
        }
  return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("affine identity, zero weights and naive oracle") {
  TD x = TD::from_vector({1, 2}, {1, 2});
  auto y = affine(x, TD::from_vector({2, 2}, {1, 0, 0, 1}), TD::zeros({2}));
  CHECK(y.at(0) == 1.0);
  CHECK(y.at(1) == 2.0);
  y = affine(x, TD::zeros({2, 2}), TD::from_vector({2}, {5, 7}));
  CHECK(y.at(0) == 5.0);
  CHECK(y.at(1) == 7.0);

  Rng rng(1);
  TD a = gaussian<double>({3, 4}, 1.0, rng), w = gaussian<double>({4, 2}, 1.0, rng);
  y = affine(a, w, TD::zeros({2}));
  auto ref = naive_matmul(a, w);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(y.at(i) - ref[i]) <= 1e-12 * std::abs(ref[i]) + 1e-15);

  CHECK_THROWS_AS(affine(a, TD::zeros({3, 2}), TD::zeros({2})), DimensionError);
  CHECK_THROWS_AS(affine(a, w, TD::zeros({3})), DimensionError);
}

TEST_CASE("conv2d examples") {
  TD x = TD::from_vector({1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = conv2d(x, TD::full({1, 1, 1, 1}, 1.0), 1, 0);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.at(i) == x.at(i));

  y = conv2d(TD::full({1, 1, 3, 3}, 1.0), TD::full({1, 1, 3, 3}, 1.0), 1, 0);
  CHECK(y.numel() == 1);
  CHECK(y.item() == 9.0);

  y = conv2d(TD::zeros({1, 1, 4, 4}), TD::zeros({1, 1, 3, 3}), 2, 1);
  CHECK(y.shape() == Shape{1, 1, 2, 2});

  CHECK_THROWS_AS(conv2d(TD::zeros({1, 1, 2, 2}), TD::zeros({1, 1, 5, 5}), 1, 1), DimensionError);
  CHECK_THROWS_AS(conv2d(TD::zeros({1, 2, 4, 4}), TD::zeros({1, 1, 3, 3}), 1, 1), DimensionError);

  Rng rng(2);
  for (std::size_t stride : {1, 2, 3}) {
    TD xi = gaussian<double>({2, 3, 7, 6}, 1.0, rng), k = gaussian<double>({4, 3, 3, 3}, 1.0, rng);
    auto out = conv2d(xi, k, stride, 1);
    auto ref = naive_conv(xi, k, stride, 1);
    REQUIRE(out.numel() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(out.at(i) == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d_transpose shapes and adjoint identity") {
  TD x = TD::from_vector({1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = conv2d_transpose(x, TD::full({1, 1, 1, 1}, 1.0), 1, 0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.at(i) == x.at(i));
  CHECK(conv2d_transpose(x, TD::full({1, 1, 2, 2}, 1.0), 2, 0).shape() == Shape{1, 1, 4, 4});
  CHECK(conv2d_transpose(TD::zeros({1, 1, 4, 4}), TD::zeros({1, 1, 3, 3}), 2, 1, 1).shape() ==
        Shape{1, 1, 8, 8});

  Rng rng(3);
  for (std::size_t k : {1, 3, 5}) {
    for (std::size_t stride : {1, 2, 3}) {
      for (std::size_t pad = 0; pad <= k / 2; ++pad) {
        TD xi = gaussian<double>({2, 3, 9, 8}, 1.0, rng), kern = gaussian<double>({4, 3, k, k}, 1.0, rng);
        auto fwd = conv2d(xi, kern, stride, pad);
        // Output padding recovers the exact input size when the stride drops a remainder.
        const std::size_t op = (9 + 2 * pad - k) % stride;
        TD yy = gaussian<double>(fwd.shape(), 1.0, rng);
        if ((8 + 2 * pad - k) % stride != op) continue;
        auto back = conv2d_transpose(yy, kern, stride, pad, op);
        REQUIRE(back.shape() == xi.shape());
        CHECK(std::abs(dot(fwd.data(), yy.data()) - dot(xi.data(), back.data())) < 1e-10);
      }
    }
  }
}

TEST_CASE("batchnorm") {
  RunningStats<double> stats(2);
  auto y = batchnorm(TD::full({4, 2}, 3.0), TD::full({2}, 1.0), TD::zeros({2}), NormMode::train, stats);
  for (double v : y.data()) CHECK(v == 0.0);

  Rng rng(4);
  TD x = gaussian<double>({5, 3, 4, 4}, 2.0, rng);
  RunningStats<double> s3(3);
  y = batchnorm(x, TD::full({3}, 1.0), TD::zeros({3}), NormMode::train, s3);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t b = 0; b < 5; ++b)
      for (std::size_t i = 0; i < 16; ++i) m += y.at((b * 3 + c) * 16 + i);
    m /= 80;
    for (std::size_t b = 0; b < 5; ++b)
      for (std::size_t i = 0; i < 16; ++i) v += std::pow(y.at((b * 3 + c) * 16 + i) - m, 2);
    v /= 80;
    CHECK(std::abs(m) < 1e-6);
    CHECK(std::abs(v - 1.0) < 1e-4);
  }

  TD xa = slice(x, 0, 0, 2), xb = slice(x, 0, 2, 5);
  auto full = batchnorm(x, TD::full({3}, 1.5), TD::full({3}, 0.1), NormMode::eval, s3);
  auto ya = batchnorm(xa, TD::full({3}, 1.5), TD::full({3}, 0.1), NormMode::eval, s3);
  auto yb = batchnorm(xb, TD::full({3}, 1.5), TD::full({3}, 0.1), NormMode::eval, s3);
  for (std::size_t i = 0; i < ya.numel(); ++i) CHECK(ya.at(i) == full.at(i));
  for (std::size_t i = 0; i < yb.numel(); ++i) CHECK(yb.at(i) == full.at(ya.numel() + i));

  CHECK_THROWS_AS(batchnorm(TD::zeros({0, 3}), TD::full({3}, 1.0), TD::zeros({3}), NormMode::train, s3),
                  DimensionError);
}

TEST_CASE("activations") {
  CHECK(activation(TD::scalar(-1.0), Activation::leaky_relu(0.2)).item() == doctest::Approx(-0.2));
  CHECK(activation(TD::scalar(-1.0), Activation::relu()).item() == 0.0);
  CHECK(activation(TD::scalar(0.0), Activation::softplus(20)).item() ==
        doctest::Approx(std::log(1.0 + std::exp(0.0)) / 20.0).epsilon(1e-12));
  CHECK(activation(TD::scalar(0.0), Activation::softplus(20)).item() == doctest::Approx(0.0346574).epsilon(1e-6));
  CHECK(std::abs(activation(TD::scalar(10.0), Activation::softplus(20)).item() - 10.0) < 1e-6);
  // Far past exp overflow the result stays finite.
  CHECK(std::isfinite(activation(Tensor<float>::scalar(1e4f), Activation::softplus(20)).item()));
}

TEST_CASE("backprop") {
  TD x = TD::from_vector({3}, {1, -2, 3});
  TD w = TD::from_vector({3}, {0.5, 0.1, 2}, true);
  backprop(sum(mul(x, w)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(w.grad()[i] == x.at(i));
  CHECK_FALSE(x.has_grad());

  backprop(sum(mul(x, w)));
  CHECK(w.grad()[0] == 2.0);
  w.zero_grad();
  CHECK_FALSE(w.has_grad());

  CHECK_THROWS_AS(backprop(mul(x, w)), DimensionError);

  Rng rng(5);
  GradcheckOptions opts;
  auto chain = [](const std::vector<TD>& in) {
    return affine(activation(affine(in[0], in[1], in[2]), Activation::softplus(3)), in[3], in[4]);
  };
  for (int rep = 0; rep < 3; ++rep) {
    std::vector<TD> in{gaussian<double>({3, 4}, 1.0, rng), gaussian<double>({4, 5}, 1.0, rng),
                       gaussian<double>({5}, 1.0, rng), gaussian<double>({5, 2}, 1.0, rng),
                       gaussian<double>({2}, 1.0, rng)};
    CHECK(max_relative_grad_error(chain, in, opts, 11 + rep) < 1e-4);
  }
}

TEST_CASE("no_grad guard skips recording") {
  TD w = TD::full({2}, 1.0, true);
  NoGradGuard guard;
  auto y = sum(w);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("gradcheck suite over every op") {
  for (const auto& r : run_gradcheck_suite()) {
    INFO(r.op << " max rel error " << r.max_rel_error);
    CHECK(r.instances >= 10);
    CHECK(r.passed);
  }
}

TEST_CASE("adam") {
  std::vector<double> p{1.0, 1.0};
  AdamState<double> st;
  std::vector<double> g{0.0, 0.0};
  adam_step<double>(p, g, st, 3e-4);
  CHECK(p[0] == 1.0);
  CHECK(st.step_count == 1);

  AdamState<double> fresh;
  std::vector<double> q{0.0}, g1{1.0};
  adam_step<double>(q, g1, fresh, 3e-4);
  // m_hat = 1, v_hat = 1 at t = 1.
  CHECK(q[0] == doctest::Approx(-3e-4 / (1 + 1e-8)).epsilon(1e-12));

  Rng rng(6);
  std::normal_distribution<double> n;
  std::vector<double> a{0.3, 0.3};
  AdamState<double> sa;
  for (int i = 0; i < 50; ++i) {
    const double gi = n(rng);
    std::vector<double> gg{gi, gi};
    adam_step<double>(a, gg, sa, 1e-2);
  }
  CHECK(a[0] == a[1]);

  std::vector<double> bad{std::nan("")};
  const double before = q[0];
  CHECK_THROWS_AS(adam_step<double>(q, bad, fresh, 3e-4), NumericalError);
  CHECK(q[0] == before);
}

TEST_CASE("tensor archive round trip") {
  TensorArchive ar;
  ar.put("w", Tensor<float>::from_vector({2, 3}, {1, 2, 3, 4, 5, 6.5f}));
  ar.put("config/lr", Shape{1}, std::vector<float>{3e-4f});
  const auto path = std::filesystem::temp_directory_path() / "pop_numkit_test.tarc";
  ar.save(path);
  auto back = TensorArchive::load(path);
  REQUIRE(back.entries().size() == 2);
  CHECK(back.get("w").shape == Shape{2, 3});
  CHECK(back.get("w").values[5] == 6.5f);
  CHECK(back.scalar("config/lr") == 3e-4f);
  CHECK(back.serialize() == ar.serialize());
  CHECK(ar.serialize().rfind("TARC\n2\nw f32 2 2 3\n", 0) == 0);
  std::filesystem::remove(path);

  std::string bytes = ar.serialize();
  CHECK_THROWS_AS(TensorArchive::deserialize(bytes.substr(0, bytes.size() - 2)), FormatError);
  CHECK_THROWS_AS(TensorArchive::deserialize("TARX\n0\n"), FormatError);
}

TEST_CASE("forward ops are deterministic") {
  Rng r1(9), r2(9);
  auto x1 = gaussian<float>({2, 3, 8, 8}, 1.0f, r1), k1 = gaussian<float>({4, 3, 3, 3}, 1.0f, r1);
  auto x2 = gaussian<float>({2, 3, 8, 8}, 1.0f, r2), k2 = gaussian<float>({4, 3, 3, 3}, 1.0f, r2);
  auto a = conv2d(x1, k1, 2, 1), b = conv2d(x2, k2, 2, 1);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
}
