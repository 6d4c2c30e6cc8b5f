#include "pop/dataio/config.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <stdexcept>

#include "pop/dataio/formats.hpp"

namespace pop::io {

namespace {

double as_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument("config key " + key + ": bad number '" + v + "'");
  return d;
}

long long as_integer(const std::string& key, const std::string& v) {
  const double d = as_real(key, v);
  if (d != std::floor(d) || d < 0) throw std::invalid_argument("config key " + key + ": expected a non-negative integer");
  return static_cast<long long>(d);
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, Setter> setters{
      {"preset", [&](auto&, auto& v) { c.train.preset = train::parse_preset(v); }},
      {"learning_rate", [&](auto& k, auto& v) { c.train.learning_rate = as_real(k, v); }},
      {"batch_size", [&](auto& k, auto& v) { c.train.batch_size = as_integer(k, v); }},
      {"epochs", [&](auto& k, auto& v) { c.train.epochs = static_cast<int>(as_integer(k, v)); }},
      {"normal_activation", [&](auto& k, auto& v) { c.train.normal_activation = as_real(k, v); }},
      {"gt_points", [&](auto& k, auto& v) { c.train.gt_points = c.fit.gt_points = as_integer(k, v); }},
      {"seed", [&](auto& k, auto& v) { c.train.seed = c.fit.seed = as_integer(k, v); }},
      {"save_every", [&](auto& k, auto& v) { c.train.save_every = static_cast<int>(as_integer(k, v)); }},
      {"lambda_d", [&](auto& k, auto& v) { c.train.weights.lambda_d = c.fit.weights.lambda_d = as_real(k, v); }},
      {"lambda_n", [&](auto& k, auto& v) { c.train.weights.lambda_n = c.fit.weights.lambda_n = as_real(k, v); }},
      {"lambda_rd", [&](auto& k, auto& v) { c.train.weights.lambda_rd = c.fit.weights.lambda_rd = as_real(k, v); }},
      {"lambda_rg", [&](auto& k, auto& v) { c.train.weights.lambda_rg = c.fit.weights.lambda_rg = as_real(k, v); }},
      {"fit_iterations", [&](auto& k, auto& v) { c.fit.iterations = static_cast<int>(as_integer(k, v)); }},
      {"fit_learning_rate", [&](auto& k, auto& v) { c.fit.learning_rate = as_real(k, v); }},
      {"fit_init",
       [&](auto&, auto& v) {
         if (v == "zeros") c.fit.init = train::FitConfig::Init::zeros;
         else if (v == "gaussian") c.fit.init = train::FitConfig::Init::gaussian;
         else throw std::invalid_argument("config key fit_init: expected zeros or gaussian");
       }},
  };
  for (const auto& [key, value] : parse_key_values(text)) {
    auto it = setters.find(key);
    if (it == setters.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    it->second(key, value);
  }
  c.train.validate();
  c.fit.validate();
  return c;
}

std::string format_run_config(const RunConfig& c) {
  char buf[1024];
  const auto& t = c.train;
  std::snprintf(buf, sizeof buf,
                "preset = %s\nlearning_rate = %.17g\nbatch_size = %zu\nepochs = %d\nnormal_activation = %.17g\n"
                "gt_points = %zu\nseed = %llu\nsave_every = %d\nlambda_d = %.17g\nlambda_n = %.17g\n"
                "lambda_rd = %.17g\nlambda_rg = %.17g\nfit_iterations = %d\nfit_learning_rate = %.17g\nfit_init = %s\n",
                train::preset_name(t.preset).c_str(), t.learning_rate, t.batch_size, t.epochs, t.normal_activation,
                t.gt_points, static_cast<unsigned long long>(t.seed), t.save_every, t.weights.lambda_d,
                t.weights.lambda_n, t.weights.lambda_rd, t.weights.lambda_rg, c.fit.iterations, c.fit.learning_rate,
                c.fit.init == train::FitConfig::Init::zeros ? "zeros" : "gaussian");
  return buf;
}

}  // namespace pop::io
