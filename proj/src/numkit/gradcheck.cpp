#include "pop/numkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pop/numkit/init.hpp"
#include "pop/numkit/ops.hpp"

namespace pop::nk {

namespace {

using TD = Tensor<double>;
using Fn = std::function<TD(const std::vector<TD>&)>;

double weighted_output(const Fn& f, const std::vector<TD>& inputs, const std::vector<double>& w) {
  NoGradGuard guard;
  const TD y = f(inputs);
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += y.data()[i] * w[i];
  return s;
}

// Values bounded away from zero so that relu-style kinks are never straddled
// by a finite-difference step.
TD away_from_zero(Shape shape, Rng& rng) {
  std::uniform_real_distribution<double> mag(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return TD::from_vector(std::move(shape), std::move(v));
}

std::vector<double> random_rotations(std::size_t rows, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> out;
  out.reserve(9 * rows);
  for (std::size_t m = 0; m < rows; ++m) {
    // Gram-Schmidt on a random 3x3 gives an orthonormal frame.
    double a[3][3];
    for (auto& r : a)
      for (auto& x : r) x = n(rng);
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < i; ++j) {
        double d = 0;
        for (int k = 0; k < 3; ++k) d += a[i][k] * a[j][k];
        for (int k = 0; k < 3; ++k) a[i][k] -= d * a[j][k];
      }
      double len = std::sqrt(a[i][0] * a[i][0] + a[i][1] * a[i][1] + a[i][2] * a[i][2]);
      for (int k = 0; k < 3; ++k) a[i][k] /= len;
    }
    for (auto& r : a)
      for (double x : r) out.push_back(x);
  }
  return out;
}

struct Case {
  std::string name;
  // Builds fresh inputs and the op closure for one random instance.
  std::function<std::pair<Fn, std::vector<TD>>(Rng&)> make;
};

std::vector<Case> suite_cases() {
  std::vector<Case> cases;
  auto dims = [](Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  cases.push_back({"affine", [dims](Rng& rng) {
                     const std::size_t b = dims(rng, 1, 4), i = dims(rng, 1, 5), o = dims(rng, 1, 4);
                     return std::pair<Fn, std::vector<TD>>(
                         [](const std::vector<TD>& in) { return affine(in[0], in[1], in[2]); },
                         {gaussian<double>({b, i}, 1.0, rng), gaussian<double>({i, o}, 1.0, rng),
                          gaussian<double>({o}, 1.0, rng)});
                   }});
  cases.push_back({"matmul", [dims](Rng& rng) {
                     const std::size_t a = dims(rng, 1, 4), b = dims(rng, 1, 4), c = dims(rng, 1, 4);
                     return std::pair<Fn, std::vector<TD>>(
                         [](const std::vector<TD>& in) { return matmul(in[0], in[1]); },
                         {gaussian<double>({a, b}, 1.0, rng), gaussian<double>({b, c}, 1.0, rng)});
                   }});
  cases.push_back({"add_sub_mul_scale", [dims](Rng& rng) {
                     const Shape s{dims(rng, 1, 3), dims(rng, 1, 4)};
                     return std::pair<Fn, std::vector<TD>>(
                         [](const std::vector<TD>& in) {
                           return scale(mul(add(in[0], in[1]), sub(in[0], in[2])), 1.7);
                         },
                         {gaussian<double>(s, 1.0, rng), gaussian<double>(s, 1.0, rng),
                          gaussian<double>(s, 1.0, rng)});
                   }});
  cases.push_back({"reductions", [dims](Rng& rng) {
                     const Shape s{dims(rng, 1, 4), dims(rng, 1, 4)};
                     return std::pair<Fn, std::vector<TD>>(
                         [](const std::vector<TD>& in) {
                           return weighted_sum<double>({sum(in[0]), mean(in[0]), sum_squares(in[0])},
                                                       {0.3, -1.1, 0.7});
                         },
                         {gaussian<double>(s, 1.0, rng)});
                   }});
  cases.push_back({"reshape_concat_slice", [dims](Rng& rng) {
                     const std::size_t r = dims(rng, 1, 3), c1 = dims(rng, 1, 3), c2 = dims(rng, 2, 4);
                     return std::pair<Fn, std::vector<TD>>(
                         [r, c1, c2](const std::vector<TD>& in) {
                           TD cat = concat<double>({in[0], in[1]}, 1);
                           TD part = slice(cat, 1, 1, c1 + c2);
                           return reshape(part, {r * (c1 + c2 - 1)});
                         },
                         {gaussian<double>({r, c1}, 1.0, rng), gaussian<double>({r, c2}, 1.0, rng)});
                   }});
  cases.push_back({"conv2d", [dims](Rng& rng) {
                     const std::size_t k = 2 * dims(rng, 0, 2) + 1, stride = dims(rng, 1, 2), pad = dims(rng, 0, k / 2);
                     const std::size_t h = dims(rng, std::max<std::size_t>(k, 3), 6);
                     const std::size_t b = dims(rng, 1, 2), c = dims(rng, 1, 3), o = dims(rng, 1, 3);
                     return std::pair<Fn, std::vector<TD>>(
                         [stride, pad](const std::vector<TD>& in) { return conv2d(in[0], in[1], stride, pad); },
                         {gaussian<double>({b, c, h, h + 1}, 1.0, rng), gaussian<double>({o, c, k, k}, 1.0, rng)});
                   }});
  cases.push_back({"conv2d_transpose", [dims](Rng& rng) {
                     const std::size_t k = dims(rng, 1, 5), stride = dims(rng, 1, 3), pad = dims(rng, 0, (k - 1) / 2);
                     const std::size_t op = dims(rng, 0, stride - 1);
                     const std::size_t h = dims(rng, 1, 4);
                     const std::size_t b = dims(rng, 1, 2), c = dims(rng, 1, 3), o = dims(rng, 1, 3);
                     return std::pair<Fn, std::vector<TD>>(
                         [stride, pad, op](const std::vector<TD>& in) {
                           return conv2d_transpose(in[0], in[1], stride, pad, op);
                         },
                         {gaussian<double>({b, o, h, h + 1}, 1.0, rng), gaussian<double>({o, c, k, k}, 1.0, rng)});
                   }});
  cases.push_back({"add_channel_bias", [dims](Rng& rng) {
                     const std::size_t c = dims(rng, 1, 4);
                     return std::pair<Fn, std::vector<TD>>(
                         [](const std::vector<TD>& in) { return add_channel_bias(in[0], in[1]); },
                         {gaussian<double>({dims(rng, 1, 3), c, dims(rng, 1, 3), 2}, 1.0, rng),
                          gaussian<double>({c}, 1.0, rng)});
                   }});
  for (NormMode mode : {NormMode::train, NormMode::eval}) {
    cases.push_back({mode == NormMode::train ? "batchnorm_train" : "batchnorm_eval", [dims, mode](Rng& rng) {
                       const std::size_t c = dims(rng, 1, 3);
                       auto stats = std::make_shared<RunningStats<double>>(c);
                       for (std::size_t i = 0; i < c; ++i) {
                         stats->mean[i] = std::normal_distribution<double>(0, 1)(rng);
                         stats->var[i] = std::uniform_real_distribution<double>(0.5, 2)(rng);
                       }
                       const Shape xs = dims(rng, 0, 1) ? Shape{dims(rng, 2, 5), c} : Shape{dims(rng, 1, 3), c, 2, 3};
                       return std::pair<Fn, std::vector<TD>>(
                           [mode, stats](const std::vector<TD>& in) {
                             return batchnorm(in[0], in[1], in[2], mode, *stats);
                           },
                           {gaussian<double>(xs, 1.0, rng), gaussian<double>({c}, 1.0, rng),
                            gaussian<double>({c}, 1.0, rng)});
                     }});
  }
  const std::vector<std::pair<std::string, Activation>> acts{{"relu", Activation::relu()},
                                                             {"leaky_relu", Activation::leaky_relu(0.2)},
                                                             {"softplus", Activation::softplus(20.0)}};
  for (const auto& [name, act] : acts) {
    cases.push_back({name, [dims, act = act](Rng& rng) {
                       return std::pair<Fn, std::vector<TD>>(
                           [act](const std::vector<TD>& in) { return activation(in[0], act); },
                           {away_from_zero({dims(rng, 1, 4), dims(rng, 1, 4)}, rng)});
                     }});
  }
  cases.push_back({"bilinear_gather", [dims](Rng& rng) {
                     const std::size_t b = dims(rng, 1, 2), c = dims(rng, 1, 3), h = dims(rng, 2, 4), w = dims(rng, 2, 4);
                     const std::size_t m = dims(rng, 1, 6);
                     BilinearTaps taps;
                     std::uniform_real_distribution<double> u(0, 1);
                     for (std::size_t i = 0; i < m; ++i) {
                       taps.batch.push_back(dims(rng, 0, b - 1));
                       std::array<std::size_t, 4> off;
                       std::array<double, 4> wt;
                       for (int t = 0; t < 4; ++t) {
                         off[t] = dims(rng, 0, h * w - 1);
                         wt[t] = u(rng);
                       }
                       taps.offsets.push_back(off);
                       taps.weights.push_back(wt);
                     }
                     return std::pair<Fn, std::vector<TD>>(
                         [taps](const std::vector<TD>& in) { return bilinear_gather(in[0], taps); },
                         {gaussian<double>({b, c, h, w}, 1.0, rng)});
                   }});
  cases.push_back({"normalize_rows", [dims](Rng& rng) {
                     return std::pair<Fn, std::vector<TD>>(
                         [](const std::vector<TD>& in) { return normalize_rows(in[0]); },
                         {away_from_zero({dims(rng, 1, 5), 3}, rng)});
                   }});
  cases.push_back({"rotate_rows", [dims](Rng& rng) {
                     const std::size_t m = dims(rng, 1, 5);
                     auto rot = random_rotations(m, rng);
                     return std::pair<Fn, std::vector<TD>>(
                         [rot](const std::vector<TD>& in) { return rotate_rows(in[0], rot); },
                         {gaussian<double>({m, 3}, 1.0, rng)});
                   }});
  return cases;
}

}  // namespace

double max_relative_grad_error(const Fn& f, std::vector<TD> inputs, const GradcheckOptions& options,
                               std::uint64_t weight_seed, std::size_t* entries) {
  for (auto& in : inputs) in = in.clone(true);
  Rng rng(weight_seed);
  std::vector<double> w;
  {
    NoGradGuard guard;
    w.resize(f(inputs).numel());
  }
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& x : w) x = n(rng);

  const TD y = f(inputs);
  const TD weights = TD::from_vector(y.shape(), w);
  backprop(sum(mul(y, weights)));

  double worst = 0.0;
  std::size_t count = 0;
  for (auto& in : inputs) {
    auto values = in.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = weighted_output(f, inputs, w);
      values[i] = saved - options.step;
      const double down = weighted_output(f, inputs, w);
      values[i] = saved;
      const double numeric = (up - down) / (2 * options.step);
      const double analytic = in.has_grad() ? in.grad()[i] : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
      ++count;
    }
  }
  if (entries) *entries += count;
  return worst;
}

std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& options) {
  std::vector<GradcheckResult> results;
  Rng rng(options.seed);
  for (const auto& c : suite_cases()) {
    GradcheckResult r;
    r.op = c.name;
    for (std::size_t i = 0; i < options.instances; ++i) {
      auto [fn, inputs] = c.make(rng);
      r.max_rel_error = std::max(r.max_rel_error, max_relative_grad_error(fn, inputs, options, rng(), &r.entries));
      ++r.instances;
    }
    r.passed = r.max_rel_error < options.tolerance;
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace pop::nk
