#include "pop/popnet/model.hpp"

#include <bit>
#include <cmath>

#include "pop/core/error.hpp"

namespace pop::net {

using nk::Activation;
using nk::NormMode;
using nk::Tensor;

PopConfig PopConfig::desk() { return PopConfig{}; }

PopConfig PopConfig::paper_parity() {
  PopConfig c;
  c.map_resolution = 128;
  c.pose_channels = 64;
  c.geom_channels = 64;
  c.decoder_width = 256;
  c.unet_base = 64;
  c.unet_cap = 512;
  c.query_factor = 2;
  return c;
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t state) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    state ^= p[i];
    state *= 1099511628211ull;
  }
  return state;
}

// ---- PoseEncoder -----------------------------------------------------------

template <typename T>
PoseEncoder<T>::PoseEncoder(int resolution, std::size_t out_channels, std::size_t base, std::size_t cap,
                            nk::Rng& rng)
    : resolution_(resolution) {
  if (resolution < 8 || !std::has_single_bit(static_cast<unsigned>(resolution))) {
    throw DimensionError("pose encoder needs a power-of-two map size >= 8, got " + std::to_string(resolution));
  }
  const std::size_t depth = std::bit_width(static_cast<unsigned>(resolution)) - 1;
  std::vector<std::size_t> ch(depth);
  for (std::size_t i = 0; i < depth; ++i) ch[i] = std::min(base << i, cap);

  for (std::size_t i = 0; i < depth; ++i) {
    down_.emplace_back(i == 0 ? 3 : ch[i - 1], ch[i], 3, 2, 1, rng);
    if (i + 1 < depth) down_bn_.emplace_back(ch[i]);
  }
  // up_[i] produces level i's resolution; built innermost first so the
  // random stream follows the data flow.
  up_.resize(depth);
  up_bn_.resize(depth);
  for (std::size_t i = depth; i-- > 0;) {
    const std::size_t in = i + 1 == depth ? ch[i] : 2 * ch[i];
    const std::size_t out = i == 0 ? out_channels : ch[i - 1];
    up_[i] = ConvTranspose<T>(in, out, 3, 2, 1, 1, rng);
    if (i > 0) up_bn_[i] = BatchNorm<T>(out);
  }
}

template <typename T>
Tensor<T> PoseEncoder<T>::operator()(const Tensor<T>& maps, NormMode mode) {
  if (maps.rank() != 4 || maps.dim(1) != 3 || maps.dim(2) != static_cast<std::size_t>(resolution_) ||
      maps.dim(3) != static_cast<std::size_t>(resolution_)) {
    throw DimensionError("pose encoder expects [B x 3 x " + std::to_string(resolution_) + " x " +
                         std::to_string(resolution_) + "], got " + nk::to_string(maps.shape()));
  }
  const std::size_t depth = down_.size();
  std::vector<Tensor<T>> skips;
  Tensor<T> h = maps;
  for (std::size_t i = 0; i < depth; ++i) {
    h = down_[i](h);
    if (i + 1 < depth) h = down_bn_[i](h, mode);
    h = nk::activation(h, Activation::leaky_relu(kLeakySlope));
    skips.push_back(h);
  }
  Tensor<T> u = skips.back();
  for (std::size_t i = depth; i-- > 0;) {
    Tensor<T> in = i + 1 == depth ? u : nk::concat<T>({u, skips[i]}, 1);
    u = up_[i](nk::activation(in, Activation::relu()));
    if (i > 0) u = up_bn_[i](u, mode);
  }
  return u;
}

template <typename T>
void PoseEncoder<T>::collect(ParamList<T>& out, const std::string& prefix) {
  for (std::size_t i = 0; i < down_.size(); ++i) {
    down_[i].collect(out, prefix + ".down" + std::to_string(i));
    if (i < down_bn_.size()) down_bn_[i].collect(out, prefix + ".down" + std::to_string(i) + ".bn");
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    up_[i].collect(out, prefix + ".up" + std::to_string(i));
    if (i > 0) up_bn_[i].collect(out, prefix + ".up" + std::to_string(i) + ".bn");
  }
}

// ---- FeatureSmoother -------------------------------------------------------

template <typename T>
FeatureSmoother<T>::FeatureSmoother(std::size_t channels, nk::Rng& rng)
    : layers_{Conv<T>(channels, channels, 5, 1, 2, rng), Conv<T>(channels, channels, 5, 1, 2, rng),
              Conv<T>(channels, channels, 5, 1, 2, rng)} {}

template <typename T>
Tensor<T> FeatureSmoother<T>::operator()(const Tensor<T>& g) const {
  Tensor<T> h = layers_[0](g);
  h = layers_[1](nk::activation(h, Activation::leaky_relu(kLeakySlope)));
  return layers_[2](nk::activation(h, Activation::leaky_relu(kLeakySlope)));
}

template <typename T>
void FeatureSmoother<T>::collect(ParamList<T>& out, const std::string& prefix) {
  for (std::size_t i = 0; i < 3; ++i) layers_[i].collect(out, prefix + ".conv" + std::to_string(i));
}

// ---- ShapeDecoder ----------------------------------------------------------

template <typename T>
ShapeDecoder<T>::ShapeDecoder(std::size_t in_dim, std::size_t width, nk::Rng& rng) : in_dim_(in_dim) {
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t in = i == 0 ? in_dim : i == 4 ? width + in_dim : width;
    trunk_[i] = Linear<T>(in, width, rng);
    trunk_bn_[i] = BatchNorm<T>(width);
  }
  for (auto* head : {&disp_, &norm_}) {
    (*head)[0] = Linear<T>(width, width, rng);
    (*head)[1] = Linear<T>(width, width, rng);
    (*head)[2] = Linear<T>(width, 3, rng);
  }
  for (std::size_t i = 0; i < 2; ++i) {
    disp_bn_[i] = BatchNorm<T>(width);
    norm_bn_[i] = BatchNorm<T>(width);
  }
}

template <typename T>
typename ShapeDecoder<T>::Output ShapeDecoder<T>::operator()(const Tensor<T>& x, NormMode mode) {
  if (x.rank() != 2 || x.dim(1) != in_dim_) {
    throw DimensionError("decoder expects [M x " + std::to_string(in_dim_) + "], got " + nk::to_string(x.shape()));
  }
  // Rows are independent outside training, so large inference batches run in
  // blocks that keep each layer's activations in cache.
  constexpr std::size_t kBlock = 1024;
  const std::size_t m = x.dim(0);
  if (nk::grad_enabled() || mode == NormMode::train || m <= kBlock) return rows(x, mode);
  std::vector<Tensor<T>> disp, normal;
  for (std::size_t begin = 0; begin < m; begin += kBlock) {
    Output part = rows(nk::slice(x, 0, begin, std::min(m, begin + kBlock)), mode);
    disp.push_back(std::move(part.displacement));
    normal.push_back(std::move(part.normal));
  }
  return {nk::concat(disp, 0), nk::concat(normal, 0)};
}

template <typename T>
typename ShapeDecoder<T>::Output ShapeDecoder<T>::rows(const Tensor<T>& x, NormMode mode) {
  const Activation act = Activation::softplus(kSoftplusBeta);
  Tensor<T> h = x;
  for (std::size_t i = 0; i < 5; ++i) {
    if (i == 4) h = nk::concat<T>({h, x}, 1);
    h = nk::activation(trunk_bn_[i](trunk_[i](h), mode), act);
  }
  auto head = [&](std::array<Linear<T>, 3>& layers, std::array<BatchNorm<T>, 2>& bns) {
    Tensor<T> y = h;
    for (std::size_t i = 0; i < 2; ++i) y = nk::activation(bns[i](layers[i](y), mode), act);
    return layers[2](y);
  };
  Output out;
  out.displacement = head(disp_, disp_bn_);
  out.normal = nk::normalize_rows(head(norm_, norm_bn_));
  return out;
}

template <typename T>
void ShapeDecoder<T>::collect(ParamList<T>& out, const std::string& prefix) {
  for (std::size_t i = 0; i < 5; ++i) {
    trunk_[i].collect(out, prefix + ".fc" + std::to_string(i + 1));
    trunk_bn_[i].collect(out, prefix + ".fc" + std::to_string(i + 1) + ".bn");
  }
  for (std::size_t i = 0; i < 3; ++i) {
    disp_[i].collect(out, prefix + ".disp" + std::to_string(i + 6));
    if (i < 2) disp_bn_[i].collect(out, prefix + ".disp" + std::to_string(i + 6) + ".bn");
  }
  for (std::size_t i = 0; i < 3; ++i) {
    norm_[i].collect(out, prefix + ".normal" + std::to_string(i + 6));
    if (i < 2) norm_bn_[i].collect(out, prefix + ".normal" + std::to_string(i + 6) + ".bn");
  }
}

template <typename T>
std::vector<Linear<T>*> ShapeDecoder<T>::linear_layers() {
  std::vector<Linear<T>*> out;
  for (auto& l : trunk_) out.push_back(&l);
  for (auto& l : disp_) out.push_back(&l);
  for (auto& l : norm_) out.push_back(&l);
  return out;
}

// ---- poses and queries ------------------------------------------------------

template <typename T>
Tensor<T> map_tensor(const body::PositionalMap& map) {
  const std::size_t h = map.height, w = map.width, n = h * w;
  std::vector<T> v(3 * n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    if (!map.mask[i]) continue;
    for (std::size_t c = 0; c < 3; ++c) v[c * n + i] = static_cast<T>(map.values[3 * i + c]);
  }
  return Tensor<T>::from_vector({3, h, w}, std::move(v));
}

template <typename T>
PreparedPose<T> prepare_pose(const body::SurfaceMap& surface, const QuerySet& queries) {
  PreparedPose<T> out;
  const Tensor<T> m = map_tensor<T>(surface.positional_map());
  out.map = nk::reshape(m, {1, 3, m.dim(1), m.dim(2)});
  const QueryFrames f = query_frames(queries, surface);
  std::vector<T> pos(3 * queries.size());
  out.rotations.resize(9 * queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    for (int k = 0; k < 3; ++k) pos[3 * i + k] = static_cast<T>(f.positions[i][k]);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out.rotations[9 * i + 3 * r + c] = static_cast<T>(f.rotations[i](r, c));
  }
  out.positions = Tensor<T>::from_vector({queries.size(), 3}, std::move(pos));
  return out;
}

// ---- PopModel ----------------------------------------------------------------

template <typename T>
PopModel<T>::PopModel(const PopConfig& config) : config_(config) {
  if (config.pose_channels == 0 || config.geom_channels == 0 || config.decoder_width == 0 || config.unet_base == 0 ||
      config.query_factor < 1 || !(config.geom_init_sigma >= 0)) {
    throw std::invalid_argument("invalid model configuration");
  }
  nk::Rng rng(config.seed);
  encoder_ = PoseEncoder<T>(config.map_resolution, config.pose_channels, config.unet_base, config.unet_cap, rng);
  smoother_ = FeatureSmoother<T>(config.geom_channels, rng);
  decoder_ = ShapeDecoder<T>(2 + config.pose_channels + config.geom_channels, config.decoder_width, rng);
}

template <typename T>
Tensor<T> PopModel<T>::zero_geometry() const {
  const std::size_t r = config_.map_resolution;
  return Tensor<T>::zeros({config_.geom_channels, r, r}, true);
}

template <typename T>
Tensor<T> PopModel<T>::random_geometry(std::uint64_t seed) const {
  nk::Rng rng(seed);
  const std::size_t r = config_.map_resolution;
  return nk::gaussian<T>({config_.geom_channels, r, r}, static_cast<T>(config_.geom_init_sigma), rng, true);
}

template <typename T>
void PopModel<T>::check_geometry(const Tensor<T>& g) const {
  const std::size_t r = config_.map_resolution;
  if (!g.defined() || g.shape() != nk::Shape{config_.geom_channels, r, r}) {
    throw DimensionError("geometry tensor must be [" + std::to_string(config_.geom_channels) + " x " +
                         std::to_string(r) + " x " + std::to_string(r) + "]");
  }
}

template <typename T>
Tensor<T>& PopModel<T>::add_outfit(const std::string& id) {
  auto it = bank_.find(id);
  if (it != bank_.end()) return it->second;
  const std::uint64_t seed = fnv1a(id.data(), id.size(), fnv1a(&config_.seed, sizeof config_.seed));
  return bank_.emplace(id, random_geometry(seed)).first->second;
}

template <typename T>
const Tensor<T>& PopModel<T>::geometry(const std::string& id) const {
  auto it = bank_.find(id);
  if (it == bank_.end()) throw std::out_of_range("unknown outfit '" + id + "'");
  return it->second;
}

template <typename T>
Tensor<T> PopModel<T>::encode(const Tensor<T>& maps) {
  return encoder_(maps, mode_);
}

template <typename T>
Tensor<T> PopModel<T>::smooth(const std::vector<Tensor<T>>& geometry) {
  std::vector<Tensor<T>> stack;
  for (const auto& g : geometry) {
    check_geometry(g);
    stack.push_back(nk::reshape(g, {1, g.dim(0), g.dim(1), g.dim(2)}));
  }
  return smoother_(stack.size() == 1 ? stack[0] : nk::concat(stack, 0));
}

template <typename T>
typename PopModel<T>::Output PopModel<T>::decode(const Tensor<T>& pose_features, const Tensor<T>& geom_features,
                                                 const QuerySet& queries,
                                                 const std::vector<const PreparedPose<T>*>& poses) {
  const std::size_t batch = poses.size(), m = queries.size();
  if (pose_features.dim(0) != batch || geom_features.dim(0) != batch) {
    throw DimensionError("feature batch does not match the number of poses");
  }
  const nk::BilinearTaps taps = queries.taps(batch);
  std::vector<T> uv(2 * batch * m);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i) {
      const Eigen::Vector2d q = queries.uv(i);
      uv[2 * (b * m + i)] = static_cast<T>(q.x());
      uv[2 * (b * m + i) + 1] = static_cast<T>(q.y());
    }
  const Tensor<T> input = nk::concat<T>({Tensor<T>::from_vector({batch * m, 2}, std::move(uv)),
                                         nk::bilinear_gather(pose_features, taps),
                                         nk::bilinear_gather(geom_features, taps)},
                                        1);
  auto dec = decoder_(input, mode_);

  std::vector<T> rotations;
  rotations.reserve(9 * batch * m);
  std::vector<Tensor<T>> positions;
  for (const auto* p : poses) {
    if (p->positions.dim(0) != m) throw DimensionError("prepared pose was built for a different query set");
    rotations.insert(rotations.end(), p->rotations.begin(), p->rotations.end());
    positions.push_back(p->positions);
  }
  Output out;
  out.displacement = dec.displacement;
  out.local_normal = dec.normal;
  out.points = nk::add(nk::rotate_rows(dec.displacement, rotations),
                       batch == 1 ? positions[0] : nk::concat(positions, 0));
  out.normals = nk::normalize_rows(nk::rotate_rows(dec.normal, rotations));
  return out;
}

template <typename T>
typename PopModel<T>::Output PopModel<T>::forward(const std::vector<const PreparedPose<T>*>& poses,
                                                  const std::vector<Tensor<T>>& geometry, const QuerySet& queries) {
  if (poses.empty() || poses.size() != geometry.size()) throw DimensionError("forward: poses and geometry differ in count");
  std::vector<Tensor<T>> maps;
  for (const auto* p : poses) maps.push_back(p->map);
  const Tensor<T> stacked = maps.size() == 1 ? maps[0] : nk::concat(maps, 0);
  return decode(encode(stacked), smooth(geometry), queries, poses);
}

template <typename T>
PointSet PopModel<T>::generate(const Tensor<T>& geometry, const body::SurfaceMap& surface, int factor) {
  check_geometry(geometry);
  if (surface.height() != config_.map_resolution || surface.width() != config_.map_resolution) {
    throw DimensionError("surface map resolution differs from the model's");
  }
  nk::NoGradGuard no_grad;
  const NormMode saved = mode_;
  mode_ = NormMode::eval;
  const QuerySet queries(surface, factor);
  const PreparedPose<T> pose = prepare_pose<T>(surface, queries);
  Output out;
  try {
    out = forward({&pose}, {geometry}, queries);
  } catch (...) {
    mode_ = saved;
    throw;
  }
  mode_ = saved;
  PointSet ps;
  ps.reserve(queries.size());
  const auto x = out.points.data();
  const auto n = out.normals.data();
  for (std::size_t i = 0; i < queries.size(); ++i) {
    ps.push_back(Eigen::Vector3d(x[3 * i], x[3 * i + 1], x[3 * i + 2]),
                 Eigen::Vector3d(n[3 * i], n[3 * i + 1], n[3 * i + 2]).normalized());
  }
  return ps;
}

template <typename T>
ParamList<T> PopModel<T>::network() {
  ParamList<T> out;
  encoder_.collect(out, "encoder");
  smoother_.collect(out, "smoother");
  decoder_.collect(out, "decoder");
  return out;
}

template <typename T>
std::vector<Tensor<T>> PopModel<T>::network_parameters() {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : network().params) out.push_back(t);
  return out;
}

template <typename T>
std::uint64_t PopModel<T>::network_hash() {
  std::uint64_t h = 1469598103934665603ull;
  const ParamList<T> net = network();
  for (const auto& [name, t] : net.params) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(t.data().data(), t.numel() * sizeof(T), h);
  }
  for (const auto& [name, s] : net.stats) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(s->mean.data(), s->mean.size() * sizeof(T), h);
    h = fnv1a(s->var.data(), s->var.size() * sizeof(T), h);
  }
  return h;
}

namespace {

struct ConfigField {
  const char* name;
  double PopConfig::*real = nullptr;
  std::size_t PopConfig::*count = nullptr;
  int PopConfig::*integer = nullptr;
};

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields{
      {"map_resolution", nullptr, nullptr, &PopConfig::map_resolution},
      {"pose_channels", nullptr, &PopConfig::pose_channels, nullptr},
      {"geom_channels", nullptr, &PopConfig::geom_channels, nullptr},
      {"decoder_width", nullptr, &PopConfig::decoder_width, nullptr},
      {"unet_base", nullptr, &PopConfig::unet_base, nullptr},
      {"unet_cap", nullptr, &PopConfig::unet_cap, nullptr},
      {"query_factor", nullptr, nullptr, &PopConfig::query_factor},
      {"geom_init_sigma", &PopConfig::geom_init_sigma, nullptr, nullptr},
  };
  return fields;
}

}  // namespace

template <typename T>
void PopModel<T>::save(nk::TensorArchive& archive) {
  auto put_scalar = [&](const std::string& name, double v) {
    const float f = static_cast<float>(v);
    archive.put(name, nk::Shape{1}, std::span<const float>(&f, 1));
  };
  for (const auto& f : config_fields()) {
    const double v = f.real ? config_.*f.real : f.count ? static_cast<double>(config_.*f.count) : config_.*f.integer;
    put_scalar("config/" + std::string(f.name), v);
  }
  // The 64-bit seed as four 16-bit words, each exact in a float.
  std::vector<float> words(4);
  for (int k = 0; k < 4; ++k) words[k] = static_cast<float>((config_.seed >> (16 * (3 - k))) & 0xffff);
  archive.put("config/seed", nk::Shape{4}, words);
  const ParamList<T> net = network();
  if (!net.stats.empty()) {
    put_scalar("config/bn_momentum", net.stats.front().second->momentum);
    put_scalar("config/bn_eps", net.stats.front().second->eps);
  }
  for (const auto& [name, t] : net.params) archive.put("net/" + name, t);
  for (const auto& [name, s] : net.stats) {
    const std::vector<float> mean(s->mean.begin(), s->mean.end()), var(s->var.begin(), s->var.end());
    archive.put("bn/" + name + ".mean", nk::Shape{mean.size()}, mean);
    archive.put("bn/" + name + ".var", nk::Shape{var.size()}, var);
  }
  for (const auto& [id, g] : bank_) archive.put("G/" + id, g);
}

template <typename T>
std::unique_ptr<PopModel<T>> PopModel<T>::load(const nk::TensorArchive& archive) {
  PopConfig c;
  for (const auto& f : config_fields()) {
    const double v = archive.scalar("config/" + std::string(f.name));
    if (f.real) c.*f.real = v;
    else if (f.count) c.*f.count = static_cast<std::size_t>(v);
    else c.*f.integer = static_cast<int>(v);
  }
  const auto& words = archive.get("config/seed").values;
  if (words.size() != 4) throw FormatError("checkpoint seed entry must hold 4 words");
  c.seed = 0;
  for (float w : words) c.seed = (c.seed << 16) | static_cast<std::uint64_t>(w);
  auto model = std::make_unique<PopModel<T>>(c);
  ParamList<T> net = model->network();
  for (auto& [name, t] : net.params) {
    const auto& e = archive.get("net/" + name);
    if (e.shape != t.shape()) throw FormatError("checkpoint entry net/" + name + " has the wrong shape");
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(e.values[i]);
  }
  for (auto& [name, s] : net.stats) {
    const auto& mean = archive.get("bn/" + name + ".mean").values;
    const auto& var = archive.get("bn/" + name + ".var").values;
    if (mean.size() != s->mean.size() || var.size() != s->var.size()) {
      throw FormatError("checkpoint statistics bn/" + name + " have the wrong size");
    }
    for (std::size_t i = 0; i < mean.size(); ++i) {
      s->mean[i] = static_cast<T>(mean[i]);
      s->var[i] = static_cast<T>(var[i]);
    }
    if (archive.contains("config/bn_momentum")) s->momentum = static_cast<T>(archive.scalar("config/bn_momentum"));
    if (archive.contains("config/bn_eps")) s->eps = static_cast<T>(archive.scalar("config/bn_eps"));
  }
  for (const auto& e : archive.entries()) {
    if (e.name.rfind("G/", 0) != 0) continue;
    Tensor<T> g = archive.tensor<T>(e.name, true);
    model->check_geometry(g);
    model->bank_[e.name.substr(2)] = g;
  }
  return model;
}

// ---- single-point helpers ----------------------------------------------------

template <typename T>
Tensor<T> sample_feature(const Tensor<T>& features, const body::SurfaceMap& surface, double u, double v) {
  if (features.rank() != 3 || features.dim(1) != static_cast<std::size_t>(surface.height()) ||
      features.dim(2) != static_cast<std::size_t>(surface.width())) {
    throw DimensionError("feature map must be [C x H x W] at the surface resolution");
  }
  const body::BilinearCell cell = surface.locate(u, v);
  nk::BilinearTaps taps;
  taps.batch.push_back(0);
  std::array<std::size_t, 4> off;
  const auto corners = cell.corners();
  for (int k = 0; k < 4; ++k) off[k] = static_cast<std::size_t>(corners[k].second) * surface.width() + corners[k].first;
  taps.offsets.push_back(off);
  taps.weights.push_back(cell.weights());
  const Tensor<T> f4 = nk::reshape(features, {1, features.dim(0), features.dim(1), features.dim(2)});
  return nk::reshape(nk::bilinear_gather(f4, taps), {features.dim(0)});
}

template <typename T>
typename ShapeDecoder<T>::Output decode_point(ShapeDecoder<T>& decoder, const Eigen::Vector2d& uv,
                                              const Tensor<T>& pose_code, const Tensor<T>& geom_code) {
  const Tensor<T> u = Tensor<T>::from_vector({1, 2}, {static_cast<T>(uv.x()), static_cast<T>(uv.y())});
  const Tensor<T> x = nk::concat<T>(
      {u, nk::reshape(pose_code, {1, pose_code.numel()}), nk::reshape(geom_code, {1, geom_code.numel()})}, 1);
  return decoder(x, NormMode::eval);
}

ReconstructedPoint reconstruct_point(const Eigen::Vector3d& r, const Eigen::Vector3d& n_local,
                                     const Eigen::Matrix3d& rotation, const Eigen::Vector3d& p) {
  return {rotation * r + p, (rotation * n_local).normalized()};
}

#define POP_NET_INSTANTIATE(T)                                                                                  \
  template class PoseEncoder<T>;                                                                                \
  template class FeatureSmoother<T>;                                                                            \
  template class ShapeDecoder<T>;                                                                               \
  template class PopModel<T>;                                                                                   \
  template Tensor<T> map_tensor<T>(const body::PositionalMap&);                                                 \
  template PreparedPose<T> prepare_pose<T>(const body::SurfaceMap&, const QuerySet&);                           \
  template Tensor<T> sample_feature<T>(const Tensor<T>&, const body::SurfaceMap&, double, double);              \
  template ShapeDecoder<T>::Output decode_point<T>(ShapeDecoder<T>&, const Eigen::Vector2d&, const Tensor<T>&, \
                                                   const Tensor<T>&);

POP_NET_INSTANTIATE(float)
POP_NET_INSTANTIATE(double)

}  // namespace pop::net
