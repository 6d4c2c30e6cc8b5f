#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pop/numkit/tensor.hpp"

namespace pop::nk {

struct GradcheckResult {
  std::string op;
  std::size_t instances = 0;
  std::size_t entries = 0;  // number of gradient components compared
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradcheckOptions {
  std::size_t instances = 10;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor so that components which are zero both analytically
  // and numerically do not produce 0/0.
  double floor = 1e-6;
  std::uint64_t seed = 7;
};

// f maps the inputs to an arbitrary-shape tensor; the checked scalar is
// sum(f(inputs) * w) for a fixed random w. Every input is perturbed.
double max_relative_grad_error(const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                               std::vector<Tensor<double>> inputs, const GradcheckOptions& options,
                               std::uint64_t weight_seed, std::size_t* entries = nullptr);

// Runs the finite-difference check over every differentiable numkit op.
std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& options = {});

}  // namespace pop::nk
