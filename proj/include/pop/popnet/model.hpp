#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "pop/bodykit/body.hpp"
#include "pop/core/pointset.hpp"
#include "pop/numkit/archive.hpp"
#include "pop/popnet/layers.hpp"
#include "pop/popnet/query.hpp"

namespace pop::net {

inline constexpr double kSoftplusBeta = 20.0;
inline constexpr double kLeakySlope = 0.2;

struct PopConfig {
  int map_resolution = 32;          // H = W of positional map, pose and geometry features
  std::size_t pose_channels = 16;   // Cp
  std::size_t geom_channels = 16;   // Cg
  std::size_t decoder_width = 128;
  std::size_t unet_base = 16;       // channels of the first encoder block
  std::size_t unet_cap = 64;        // channel ceiling for deeper blocks
  int query_factor = 2;             // s
  double geom_init_sigma = 0.01;
  std::uint64_t seed = 1;

  static PopConfig desk();
  static PopConfig paper_parity();
};

// UNet over the positional map; depth log2(H) down and up blocks.
template <typename T>
class PoseEncoder {
 public:
  PoseEncoder() = default;
  PoseEncoder(int resolution, std::size_t out_channels, std::size_t base, std::size_t cap, nk::Rng& rng);

  // [B x 3 x H x W] -> [B x Cp x H x W]
  nk::Tensor<T> operator()(const nk::Tensor<T>& maps, nk::NormMode mode);
  void collect(ParamList<T>& out, const std::string& prefix);
  std::size_t depth() const { return down_.size(); }

 private:
  int resolution_ = 0;
  std::vector<Conv<T>> down_;
  std::vector<BatchNorm<T>> down_bn_;  // none for the innermost block
  std::vector<ConvTranspose<T>> up_;
  std::vector<BatchNorm<T>> up_bn_;    // none for the outermost block
};

// Three channel-preserving 5x5 convolutions with leaky relu in between.
template <typename T>
class FeatureSmoother {
 public:
  FeatureSmoother() = default;
  FeatureSmoother(std::size_t channels, nk::Rng& rng);

  nk::Tensor<T> operator()(const nk::Tensor<T>& g) const;
  void collect(ParamList<T>& out, const std::string& prefix);
  std::array<Conv<T>, 3>& layers() { return layers_; }

 private:
  std::array<Conv<T>, 3> layers_;
};

// Shared per-point MLP: five trunk layers with the input re-injected before
// the fifth, then a displacement head and a normal head of three layers each.
template <typename T>
class ShapeDecoder {
 public:
  struct Output {
    nk::Tensor<T> displacement;  // [M x 3]
    nk::Tensor<T> normal;        // [M x 3], unit rows
  };

  ShapeDecoder() = default;
  ShapeDecoder(std::size_t in_dim, std::size_t width, nk::Rng& rng);

  Output operator()(const nk::Tensor<T>& x, nk::NormMode mode);
  void collect(ParamList<T>& out, const std::string& prefix);
  std::size_t input_dim() const { return in_dim_; }

  std::vector<Linear<T>*> linear_layers();

 private:
  Output rows(const nk::Tensor<T>& x, nk::NormMode mode);

  std::size_t in_dim_ = 0;
  std::array<Linear<T>, 5> trunk_;
  std::array<BatchNorm<T>, 5> trunk_bn_;
  std::array<Linear<T>, 3> disp_, norm_;
  std::array<BatchNorm<T>, 2> disp_bn_, norm_bn_;
};

// One posed body prepared for a fixed query set.
template <typename T>
struct PreparedPose {
  nk::Tensor<T> map;          // [1 x 3 x H x W], invalid texels zero
  nk::Tensor<T> positions;    // [M x 3] body points p at the queries
  std::vector<T> rotations;   // 9 M, row-major blended rotation blocks
};

template <typename T>
PreparedPose<T> prepare_pose(const body::SurfaceMap& surface, const QuerySet& queries);

// [3 x H x W] channel-first copy of a positional map.
template <typename T>
nk::Tensor<T> map_tensor(const body::PositionalMap& map);

template <typename T>
class PopModel {
 public:
  struct Output {
    nk::Tensor<T> displacement;  // r, local frame
    nk::Tensor<T> local_normal;
    nk::Tensor<T> points;        // x = R r + p
    nk::Tensor<T> normals;       // normalize(R n_local)
  };

  explicit PopModel(const PopConfig& config = PopConfig::desk());
  PopModel(const PopModel&) = delete;
  PopModel& operator=(const PopModel&) = delete;

  const PopConfig& config() const { return config_; }
  void set_mode(nk::NormMode mode) { mode_ = mode; }
  nk::NormMode mode() const { return mode_; }

  // Geometry bank. add_outfit draws N(0, sigma^2) features from a seed derived
  // from the model seed and the outfit id; an existing entry is kept.
  nk::Tensor<T>& add_outfit(const std::string& id);
  bool has_outfit(const std::string& id) const { return bank_.count(id) != 0; }
  const nk::Tensor<T>& geometry(const std::string& id) const;
  const std::map<std::string, nk::Tensor<T>>& bank() const { return bank_; }
  nk::Tensor<T> zero_geometry() const;
  nk::Tensor<T> random_geometry(std::uint64_t seed) const;
  void check_geometry(const nk::Tensor<T>& g) const;

  // [B x 3 x H x W] -> [B x Cp x H x W]
  nk::Tensor<T> encode(const nk::Tensor<T>& maps);
  // Stack of [Cg x H x W] -> smoothed [B x Cg x H x W]
  nk::Tensor<T> smooth(const std::vector<nk::Tensor<T>>& geometry);
  // Decode every query of every batch entry from precomputed feature maps.
  Output decode(const nk::Tensor<T>& pose_features, const nk::Tensor<T>& geom_features, const QuerySet& queries,
                const std::vector<const PreparedPose<T>*>& poses);
  Output forward(const std::vector<const PreparedPose<T>*>& poses, const std::vector<nk::Tensor<T>>& geometry,
                 const QuerySet& queries);

  // Eval-mode, gradient-free point cloud at query factor s.
  PointSet generate(const nk::Tensor<T>& geometry, const body::SurfaceMap& surface, int factor);
  PointSet generate(const std::string& outfit, const body::SurfaceMap& surface, int factor) {
    return generate(geometry(outfit), surface, factor);
  }

  PoseEncoder<T>& encoder() { return encoder_; }
  FeatureSmoother<T>& smoother() { return smoother_; }
  ShapeDecoder<T>& decoder() { return decoder_; }

  // Network parameters (encoder, smoother, decoder) and batchnorm statistics.
  ParamList<T> network();
  std::vector<nk::Tensor<T>> network_parameters();
  // FNV-1a over every network parameter and batchnorm statistic.
  std::uint64_t network_hash();

  void save(nk::TensorArchive& archive);
  static std::unique_ptr<PopModel> load(const nk::TensorArchive& archive);

 private:
  PopConfig config_;
  PoseEncoder<T> encoder_;
  FeatureSmoother<T> smoother_;
  ShapeDecoder<T> decoder_;
  std::map<std::string, nk::Tensor<T>> bank_;
  nk::NormMode mode_ = nk::NormMode::train;
};

// Helpers on single points.
template <typename T>
nk::Tensor<T> sample_feature(const nk::Tensor<T>& features, const body::SurfaceMap& surface, double u, double v);

// Runs the decoder on one query [u, v, zP, zG] in eval mode; differentiable
// with respect to zP and zG.
template <typename T>
typename ShapeDecoder<T>::Output decode_point(ShapeDecoder<T>& decoder, const Eigen::Vector2d& uv,
                                              const nk::Tensor<T>& pose_code, const nk::Tensor<T>& geom_code);

struct ReconstructedPoint {
  Eigen::Vector3d position, normal;
};
ReconstructedPoint reconstruct_point(const Eigen::Vector3d& r, const Eigen::Vector3d& n_local,
                                     const Eigen::Matrix3d& rotation, const Eigen::Vector3d& p);

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t state = 1469598103934665603ull);

}  // namespace pop::net
