#pragma once

#include <string>

#include "pop/trainer/trainer.hpp"

namespace pop::io {

struct RunConfig {
  train::TrainConfig train;
  train::FitConfig fit;
};

// Keys (all optional):
//   preset, learning_rate, batch_size, epochs, normal_activation, gt_points,
//   seed, save_every, lambda_d, lambda_n, lambda_rd, lambda_rg,
//   fit_iterations, fit_learning_rate, fit_init (zeros | gaussian)
// The lambda keys set both training and fitting weights.
RunConfig parse_run_config(const std::string& text);
std::string format_run_config(const RunConfig& cfg);

}  // namespace pop::io
