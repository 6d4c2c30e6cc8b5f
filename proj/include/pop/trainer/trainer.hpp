#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "pop/bodykit/body.hpp"
#include "pop/objective/eval.hpp"
#include "pop/objective/losses.hpp"
#include "pop/popnet/model.hpp"

namespace pop::train {

using Model = net::PopModel<float>;

enum class Preset { desk, paper_parity };

Preset parse_preset(const std::string& name);
std::string preset_name(Preset p);
net::PopConfig model_config(Preset p, std::uint64_t seed);

struct TrainConfig {
  double learning_rate = 3.0e-4;
  std::size_t batch_size = 4;
  int epochs = 400;
  double normal_activation = 0.625;  // fraction of epochs before lambda_n switches on
  obj::LossWeights weights = obj::LossWeights::standard();
  std::size_t gt_points = 4000;      // leading GT points used per example
  std::uint64_t seed = 1;
  Preset preset = Preset::desk;
  int save_every = 0;                // epochs between checkpoints, 0 = only at the end
  std::string checkpoint_path;       // empty = no checkpoint files

  void validate() const;
  // First epoch (0-based) with the normal loss on.
  int activation_epoch() const;
};

// The body the examples are posed on.
struct BodyContext {
  std::shared_ptr<const body::Skeleton> skeleton;
  std::shared_ptr<const body::UVAtlas> atlas;

  static BodyContext proxy();
  body::PosedBody posed(const body::Pose& pose) const;
  body::SurfaceMap surface(const body::Pose& pose, int resolution) const;
};

struct TrainingExample {
  std::string outfit;
  std::string name;  // pose label used in reports
  body::Pose pose;
  PointSet cloud;
};

// Removes the root translation and global orientation from a scan and its
// pose. The normalized root joint sits at its rest offset.
TrainingExample normalize_example(const PointSet& scan, const body::Pose& pose, const body::Skeleton& skeleton);
// Places a cloud given in the normalized frame of `pose` back into world space.
PointSet denormalize(const PointSet& cloud, const body::Pose& pose, const body::Skeleton& skeleton);
bool is_normalized(const body::Pose& pose);

struct EpochLoss {
  int epoch = 0;
  obj::LossComponents raw;       // unweighted epoch means
  obj::LossComponents weighted;  // lambda * term with the epoch's weights
  double total = 0;
};

void write_log_line(std::ostream& out, const EpochLoss& e);

struct TrainResult {
  std::vector<EpochLoss> epochs;
  EpochLoss final_eval;  // eval-mode loss of the final weights over the dataset
};

struct TrainHooks {
  std::ostream* log = nullptr;
  std::function<void(const EpochLoss&)> on_epoch;
};

// Joint Adam on the network and every outfit's geometry tensor. Missing bank
// entries are created on first sight.
TrainResult train(Model& model, const BodyContext& body, const std::vector<TrainingExample>& dataset,
                  const TrainConfig& cfg, const TrainHooks& hooks = {});

// Eval-mode loss of the current model over the dataset with the final
// (post-activation) weights, in the same units as the log.
EpochLoss evaluate_loss(Model& model, const BodyContext& body, const std::vector<TrainingExample>& dataset,
                        const TrainConfig& cfg);

struct FitConfig {
  int iterations = 500;
  double learning_rate = 1.0e-3;
  enum class Init { zeros, gaussian } init = Init::zeros;
  obj::LossWeights weights = obj::LossWeights::standard();
  std::size_t gt_points = 4000;
  std::uint64_t seed = 1;  // gaussian initialization only
  double divergence_factor = 10.0;

  void validate() const;
};

struct FitResult {
  nk::Tensor<float> geometry;
  std::vector<double> losses;  // total loss per iteration, before the update
  double final_loss = 0;
  obj::LossComponents final_components;
};

// Optimizes a new geometry tensor against one normalized scan with every
// network weight frozen.
FitResult fit_unseen(Model& model, const BodyContext& body, const TrainingExample& scan, const FitConfig& cfg);

// One generated cloud per pose, in world space. Deterministic.
std::vector<PointSet> animate(Model& model, const BodyContext& body, const nk::Tensor<float>& geometry,
                              const std::vector<body::Pose>& poses, int factor = 0);

obj::EvalRecord evaluate_example(Model& model, const BodyContext& body, const TrainingExample& example,
                                 const nk::Tensor<float>& geometry, int factor = 0);

// Generates every example from its outfit's geometry and scores it against
// the full GT cloud. `factor` 0 uses the model's query factor.
std::vector<obj::EvalRecord> evaluate(Model& model, const BodyContext& body, const std::vector<TrainingExample>& examples,
                                      int factor = 0);

}  // namespace pop::train
