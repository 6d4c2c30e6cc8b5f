#include "pop/trainer/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

#include "pop/core/error.hpp"
#include "pop/numkit/adam.hpp"
#include "pop/numkit/archive.hpp"
#include "pop/numkit/init.hpp"
#include "pop/numkit/ops.hpp"

namespace pop::train {

using body::Pose;
using Eigen::Matrix3d;
using Eigen::Vector3d;
using nk::Tensor;

Preset parse_preset(const std::string& name) {
  if (name == "desk") return Preset::desk;
  if (name == "paper-parity") return Preset::paper_parity;
  throw std::invalid_argument("unknown preset '" + name + "' (expected desk or paper-parity)");
}

std::string preset_name(Preset p) { return p == Preset::desk ? "desk" : "paper-parity"; }

net::PopConfig model_config(Preset p, std::uint64_t seed) {
  net::PopConfig c = p == Preset::desk ? net::PopConfig::desk() : net::PopConfig::paper_parity();
  c.seed = seed;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch size must be at least 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (!(normal_activation > 0 && normal_activation < 1)) {
    throw std::invalid_argument("normal-loss activation fraction must lie in (0, 1)");
  }
  if (gt_points < 1) throw std::invalid_argument("GT sample count must be at least 1");
  if (save_every < 0) throw std::invalid_argument("save interval must be non-negative");
  weights.validate();
}

int TrainConfig::activation_epoch() const {
  return static_cast<int>(std::lround(normal_activation * epochs));
}

void FitConfig::validate() const {
  if (iterations < 1) throw std::invalid_argument("fit iterations must be at least 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("fit learning rate must be positive");
  if (gt_points < 1) throw std::invalid_argument("GT sample count must be at least 1");
  if (!(divergence_factor > 1)) throw std::invalid_argument("divergence factor must exceed 1");
  weights.validate();
}

BodyContext BodyContext::proxy() {
  auto skeleton = std::make_shared<const body::Skeleton>(body::Skeleton::proxy());
  auto atlas = std::make_shared<const body::UVAtlas>(body::UVAtlas::proxy(*skeleton));
  return {skeleton, atlas};
}

body::PosedBody BodyContext::posed(const Pose& pose) const { return body::pose_body(skeleton, atlas, pose); }

body::SurfaceMap BodyContext::surface(const Pose& pose, int resolution) const {
  return body::SurfaceMap::from_body(posed(pose), resolution, resolution);
}

// ---- normalization -----------------------------------------------------------

namespace {

void check_pose(const Pose& pose, const body::Skeleton& skeleton) {
  if (pose.size() != skeleton.size()) {
    throw DimensionError("pose has " + std::to_string(pose.size()) + " joints, skeleton has " +
                         std::to_string(skeleton.size()));
  }
}

}  // namespace

bool is_normalized(const Pose& pose) {
  return !pose.rotations.empty() && pose.rotations[0].isZero(0) && pose.translation.isZero(0);
}

TrainingExample normalize_example(const PointSet& scan, const Pose& pose, const body::Skeleton& skeleton) {
  check_pose(pose, skeleton);
  const Matrix3d rt = body::axis_angle_matrix(pose.rotations[0]).transpose();
  const Vector3d o = skeleton.joint(0).offset;
  TrainingExample ex;
  ex.pose = pose;
  ex.pose.rotations[0].setZero();
  ex.pose.translation.setZero();
  ex.cloud.reserve(scan.size());
  for (std::size_t i = 0; i < scan.size(); ++i) {
    ex.cloud.push_back(rt * (scan.points[i] - pose.translation - o) + o, rt * scan.normals[i]);
  }
  return ex;
}

PointSet denormalize(const PointSet& cloud, const Pose& pose, const body::Skeleton& skeleton) {
  check_pose(pose, skeleton);
  const Matrix3d r = body::axis_angle_matrix(pose.rotations[0]);
  const Vector3d o = skeleton.joint(0).offset;
  PointSet out;
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out.push_back(r * (cloud.points[i] - o) + pose.translation + o, r * cloud.normals[i]);
  }
  return out;
}

void write_log_line(std::ostream& out, const EpochLoss& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "epoch %d L_d %.9e L_n %.9e L_rd %.9e L_rg %.9e total %.9e\n", e.epoch,
                e.weighted.chamfer, e.weighted.normal, e.weighted.reg_displacement, e.weighted.reg_geometry, e.total);
  out << buf;
}

// ---- training ----------------------------------------------------------------

namespace {

// Everything about one example that does not change during training.
struct Prepared {
  const TrainingExample* example;
  net::PreparedPose<float> pose;
  obj::Target target;
};

PointSet leading(const PointSet& cloud, std::size_t n) {
  if (cloud.empty()) throw std::invalid_argument("training example has an empty GT cloud");
  PointSet out;
  const std::size_t k = std::min(n, cloud.size());
  out.points.assign(cloud.points.begin(), cloud.points.begin() + k);
  out.normals.assign(cloud.normals.begin(), cloud.normals.begin() + k);
  return out;
}

struct PreparedSet {
  std::unique_ptr<net::QuerySet> queries;
  std::vector<Prepared> items;
};

PreparedSet prepare(const Model& model, const BodyContext& body, const std::vector<TrainingExample>& dataset,
                    std::size_t gt_points) {
  if (dataset.empty()) throw std::invalid_argument("empty training set");
  const int res = model.config().map_resolution;
  PreparedSet out;
  out.items.reserve(dataset.size());
  for (const auto& ex : dataset) {
    if (!is_normalized(ex.pose)) throw std::invalid_argument("example " + ex.name + " is not normalized");
    const body::SurfaceMap surface = body.surface(ex.pose, res);
    // The atlas mask is pose independent, so one lattice serves every pose.
    if (!out.queries) out.queries = std::make_unique<net::QuerySet>(surface, model.config().query_factor);
    out.items.push_back({&ex, net::prepare_pose<float>(surface, *out.queries), obj::Target(leading(ex.cloud, gt_points))});
  }
  return out;
}

struct BatchLoss {
  Tensor<float> total;
  obj::LossComponents raw;
};

obj::LossComponents weigh(const obj::LossComponents& c, const obj::LossWeights& w) {
  return {w.lambda_d * c.chamfer, w.lambda_n * c.normal, w.lambda_rd * c.reg_displacement,
          w.lambda_rg * c.reg_geometry};
}

// Loss of one forward pass over `batch` examples. The geometry term covers the
// distinct tensors in the batch.
BatchLoss batch_loss(const Model::Output& out, const std::vector<const obj::Target*>& targets,
                     const std::vector<Tensor<float>>& distinct_geometry, const obj::LossWeights& w,
                     std::size_t queries) {
  const std::size_t batch = targets.size();
  std::vector<Tensor<float>> chamfer, normal;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto x = batch == 1 ? out.points : nk::slice(out.points, 0, b * queries, (b + 1) * queries);
    const auto n = batch == 1 ? out.normals : nk::slice(out.normals, 0, b * queries, (b + 1) * queries);
    auto pl = obj::point_losses(x, n, *targets[b]);
    chamfer.push_back(pl.chamfer);
    normal.push_back(pl.normal);
  }
  const std::vector<float> avg(batch, 1.0f / static_cast<float>(batch));
  const Tensor<float> terms[4] = {nk::weighted_sum(chamfer, avg), nk::weighted_sum(normal, avg),
                                  obj::displacement_regularizer(out.displacement),
                                  obj::geometry_regularizer(distinct_geometry)};
  BatchLoss r;
  r.raw = {terms[0].item(), terms[1].item(), terms[2].item(), terms[3].item()};
  r.total = nk::weighted_sum<float>({terms[0], terms[1], terms[2], terms[3]},
                                    {static_cast<float>(w.lambda_d), static_cast<float>(w.lambda_n),
                                     static_cast<float>(w.lambda_rd), static_cast<float>(w.lambda_rg)});
  return r;
}

bool finite(const obj::LossComponents& c) {
  return std::isfinite(c.chamfer) && std::isfinite(c.normal) && std::isfinite(c.reg_displacement) &&
         std::isfinite(c.reg_geometry);
}

void save_checkpoint(Model& model, const std::string& path) {
  nk::TensorArchive archive;
  model.save(archive);
  archive.save(path);
}

class ModeGuard {
 public:
  ModeGuard(Model& model, nk::NormMode mode) : model_(model), saved_(model.mode()) { model.set_mode(mode); }
  ~ModeGuard() { model_.set_mode(saved_); }

 private:
  Model& model_;
  nk::NormMode saved_;
};

}  // namespace

TrainResult train(Model& model, const BodyContext& body, const std::vector<TrainingExample>& dataset,
                  const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  nk::retain_freed_memory();
  for (const auto& ex : dataset) model.add_outfit(ex.outfit);
  PreparedSet data = prepare(model, body, dataset, cfg.gt_points);
  const net::QuerySet& queries = *data.queries;

  std::vector<Tensor<float>> params = model.network_parameters();
  for (const auto& [id, g] : model.bank()) params.push_back(g);
  for (auto& p : params) p.set_requires_grad(true);
  nk::Adam<float> adam(params, static_cast<float>(cfg.learning_rate));

  ModeGuard mode(model, nk::NormMode::train);
  nk::Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.items.size());
  TrainResult result;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    obj::LossWeights w = cfg.weights;
    if (epoch < cfg.activation_epoch()) w.lambda_n = 0;

    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

    obj::LossComponents sum;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<const net::PreparedPose<float>*> poses;
      std::vector<Tensor<float>> geometry, distinct;
      std::vector<const obj::Target*> targets;
      std::set<std::string> seen;
      for (std::size_t k = start; k < end; ++k) {
        const Prepared& item = data.items[order[k]];
        // Every example of an outfit reads and writes the bank's single tensor.
        const Tensor<float>& g = model.geometry(item.example->outfit);
        poses.push_back(&item.pose);
        geometry.push_back(g);
        targets.push_back(&item.target);
        if (seen.insert(item.example->outfit).second) distinct.push_back(g);
      }
      const auto out = model.forward(poses, geometry, queries);
      BatchLoss loss = batch_loss(out, targets, distinct, w, queries.size());
      if (!finite(loss.raw) || !std::isfinite(loss.total.item())) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "non-finite loss at epoch %d, batch %zu (L_d %g, L_n %g, L_rd %g, L_rg %g)",
                      epoch, start / cfg.batch_size, loss.raw.chamfer, loss.raw.normal, loss.raw.reg_displacement,
                      loss.raw.reg_geometry);
        throw NumericalError(buf);
      }
      nk::backprop(loss.total);
      adam.step();
      adam.zero_grad();
      const double n = static_cast<double>(end - start);
      sum.chamfer += n * loss.raw.chamfer;
      sum.normal += n * loss.raw.normal;
      sum.reg_displacement += n * loss.raw.reg_displacement;
      sum.reg_geometry += n * loss.raw.reg_geometry;
    }

    EpochLoss e;
    e.epoch = epoch;
    const double count = static_cast<double>(order.size());
    e.raw = {sum.chamfer / count, sum.normal / count, sum.reg_displacement / count, sum.reg_geometry / count};
    e.weighted = weigh(e.raw, w);
    e.total = total_loss(e.raw, w);
    result.epochs.push_back(e);
    if (hooks.log) {
      write_log_line(*hooks.log, e);
      hooks.log->flush();
    }
    if (hooks.on_epoch) hooks.on_epoch(e);
    if (!cfg.checkpoint_path.empty() && cfg.save_every > 0 && (epoch + 1) % cfg.save_every == 0 &&
        epoch + 1 < cfg.epochs) {
      save_checkpoint(model, cfg.checkpoint_path);
    }
  }

  result.final_eval = evaluate_loss(model, body, dataset, cfg);
  result.final_eval.epoch = cfg.epochs;
  if (hooks.log) {
    *hooks.log << "final ";
    write_log_line(*hooks.log, result.final_eval);
  }
  if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.checkpoint_path);
  return result;
}

EpochLoss evaluate_loss(Model& model, const BodyContext& body, const std::vector<TrainingExample>& dataset,
                        const TrainConfig& cfg) {
  cfg.validate();
  PreparedSet data = prepare(model, body, dataset, cfg.gt_points);
  nk::NoGradGuard no_grad;
  ModeGuard mode(model, nk::NormMode::eval);
  obj::LossComponents sum;
  for (const Prepared& item : data.items) {
    const Tensor<float>& g = model.geometry(item.example->outfit);
    const auto out = model.forward({&item.pose}, {g}, *data.queries);
    const BatchLoss loss = batch_loss(out, {&item.target}, {g}, cfg.weights, data.queries->size());
    sum.chamfer += loss.raw.chamfer;
    sum.normal += loss.raw.normal;
    sum.reg_displacement += loss.raw.reg_displacement;
    sum.reg_geometry += loss.raw.reg_geometry;
  }
  const double count = static_cast<double>(data.items.size());
  EpochLoss e;
  e.raw = {sum.chamfer / count, sum.normal / count, sum.reg_displacement / count, sum.reg_geometry / count};
  e.weighted = weigh(e.raw, cfg.weights);
  e.total = total_loss(e.raw, cfg.weights);
  return e;
}

// ---- fitting -------------------------------------------------------------------

FitResult fit_unseen(Model& model, const BodyContext& body, const TrainingExample& scan, const FitConfig& cfg) {
  cfg.validate();
  nk::retain_freed_memory();
  if (!is_normalized(scan.pose)) throw std::invalid_argument("scan must be normalized before fitting");
  const int res = model.config().map_resolution;
  const body::SurfaceMap surface = body.surface(scan.pose, res);
  const net::QuerySet queries(surface, model.config().query_factor);
  const net::PreparedPose<float> pose = net::prepare_pose<float>(surface, queries);
  const obj::Target target(leading(scan.cloud, cfg.gt_points));

  ModeGuard mode(model, nk::NormMode::eval);
  // Freeze the network: no gradient reaches its parameters, and eval-mode
  // batchnorm leaves the running statistics alone.
  std::vector<Tensor<float>> frozen = model.network_parameters();
  std::vector<bool> flags;
  for (auto& p : frozen) {
    flags.push_back(p.requires_grad());
    p.set_requires_grad(false);
  }
  struct Restore {
    std::vector<Tensor<float>>& params;
    std::vector<bool>& flags;
    ~Restore() {
      for (std::size_t i = 0; i < params.size(); ++i) params[i].set_requires_grad(flags[i]);
    }
  } restore{frozen, flags};

  Tensor<float> pose_features;
  {
    nk::NoGradGuard no_grad;
    pose_features = model.encode(pose.map);
  }

  FitResult r;
  r.geometry = cfg.init == FitConfig::Init::zeros ? model.zero_geometry() : model.random_geometry(cfg.seed);
  nk::Adam<float> adam({r.geometry}, static_cast<float>(cfg.learning_rate));

  auto step_loss = [&]() {
    const auto out = model.decode(pose_features, model.smooth({r.geometry}), queries, {&pose});
    return batch_loss(out, {&target}, {r.geometry}, cfg.weights, queries.size());
  };

  double start = 0;
  for (int it = 0; it < cfg.iterations; ++it) {
    BatchLoss loss = step_loss();
    const double total = loss.total.item();
    if (!std::isfinite(total)) throw NumericalError("non-finite loss while fitting at iteration " + std::to_string(it));
    if (it == 0) start = total;
    if (total > cfg.divergence_factor * start) {
      throw NumericalError("fit diverged at iteration " + std::to_string(it) + ": loss " + std::to_string(total) +
                           " exceeds " + std::to_string(cfg.divergence_factor) + "x the initial " +
                           std::to_string(start));
    }
    r.losses.push_back(total);
    nk::backprop(loss.total);
    adam.step();
    adam.zero_grad();
  }
  {
    nk::NoGradGuard no_grad;
    const BatchLoss loss = step_loss();
    r.final_components = loss.raw;
    r.final_loss = total_loss(loss.raw, cfg.weights);
  }
  r.geometry = r.geometry.clone(false);
  return r;
}

// ---- generation ----------------------------------------------------------------

std::vector<PointSet> animate(Model& model, const BodyContext& body, const Tensor<float>& geometry,
                              const std::vector<Pose>& poses, int factor) {
  model.check_geometry(geometry);
  const int s = factor > 0 ? factor : model.config().query_factor;
  std::vector<PointSet> out;
  out.reserve(poses.size());
  for (const auto& pose : poses) {
    check_pose(pose, *body.skeleton);
    Pose normalized = pose;
    normalized.rotations[0].setZero();
    normalized.translation.setZero();
    const PointSet cloud = model.generate(geometry, body.surface(normalized, model.config().map_resolution), s);
    out.push_back(denormalize(cloud, pose, *body.skeleton));
  }
  return out;
}

obj::EvalRecord evaluate_example(Model& model, const BodyContext& body, const TrainingExample& example,
                                 const Tensor<float>& geometry, int factor) {
  if (!is_normalized(example.pose)) throw std::invalid_argument("example " + example.name + " is not normalized");
  const int s = factor > 0 ? factor : model.config().query_factor;
  const PointSet gen = model.generate(geometry, body.surface(example.pose, model.config().map_resolution), s);
  return {example.outfit, example.name, obj::chamfer_l2(gen, example.cloud), obj::normal_loss(gen, example.cloud)};
}

std::vector<obj::EvalRecord> evaluate(Model& model, const BodyContext& body, const std::vector<TrainingExample>& examples,
                                      int factor) {
  std::vector<obj::EvalRecord> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(evaluate_example(model, body, ex, model.geometry(ex.outfit), factor));
  return out;
}

}  // namespace pop::train
