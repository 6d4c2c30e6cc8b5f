#include "pop/dataio/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>

#include <Eigen/Geometry>

#include "pop/core/error.hpp"
#include "pop/dataio/formats.hpp"
#include "pop/popnet/model.hpp"

namespace pop::io {

using Eigen::Vector3d;
using std::numbers::pi;

namespace {

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t mix(std::uint64_t seed, const std::string& tag) {
  return net::fnv1a(tag.data(), tag.size(), net::fnv1a(&seed, sizeof seed));
}

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? std::string(1, sep) : "") + v[i];
  return out;
}

}  // namespace

void SyntheticOutfitSpec::validate(const body::Skeleton& skeleton) const {
  if (id.empty() || id.find_first_of(" \t\n/\\") != std::string::npos) {
    throw std::invalid_argument("outfit id must be a non-empty word without slashes");
  }
  if (!std::isfinite(base) || !std::isfinite(amplitude) || !std::isfinite(coupling)) {
    throw std::invalid_argument("outfit " + id + ": parameters must be finite");
  }
  if (base < 0 || amplitude < 0) throw std::invalid_argument("outfit " + id + ": A and B must be non-negative");
  if (frequency < 0) throw std::invalid_argument("outfit " + id + ": wrinkle frequency must be non-negative");
  const double reach = base + amplitude + std::abs(coupling) * pi;
  if (!(reach < kRadiusBound)) {
    throw std::invalid_argument("outfit " + id + ": A + B + C pi = " + std::to_string(reach) +
                                " m exceeds the bound of " + std::to_string(kRadiusBound) + " m");
  }
  if (coverage.empty()) throw std::invalid_argument("outfit " + id + ": coverage is empty");
  for (const auto& name : coverage) {
    if (skeleton.find(name) < 0) throw std::invalid_argument("outfit " + id + ": unknown bone '" + name + "'");
  }
}

std::vector<SyntheticOutfitSpec> default_suite() {
  const std::vector<std::string> all{"pelvis",     "spine",     "head",    "upperarm_l", "forearm_l", "upperarm_r",
                                     "forearm_r",  "thigh_l",   "shin_l",  "thigh_r",    "shin_r"};
  return {
      {"tight", 0.01, 0.002, 6, 0.01, all},
      {"loose", 0.03, 0.008, 3, 0.04, {"pelvis", "spine", "thigh_l", "thigh_r"}},
      {"skirt", 0.05, 0.01, 4, 0.06, {"pelvis", "thigh_l", "thigh_r"}},
  };
}

SyntheticOutfitSpec unseen_outfit() { return {"shorts", 0.02, 0.005, 5, 0.05, {"pelvis", "thigh_l", "thigh_r"}}; }

// ---- ground truth ----------------------------------------------------------------

GroundTruthSurface::GroundTruthSurface(SyntheticOutfitSpec spec, body::PosedBody body, int normal_resolution)
    : spec_(std::move(spec)), body_(std::move(body)), islands_(body_.atlas().islands()) {
  const body::Skeleton& sk = body_.skeleton();
  spec_.validate(sk);
  const body::AtlasGrid grid = body_.atlas().rasterize(normal_resolution, normal_resolution);
  const std::set<std::string> clothed(spec_.coverage.begin(), spec_.coverage.end());
  for (std::size_t i = 0; i < islands_.size(); ++i) {
    const std::size_t bone = islands_[i].bone;
    covered_.push_back(clothed.count(sk.joint(bone).name) != 0);
    const int child = sk.first_child(bone);
    bend_.push_back(child < 0 ? 0.0 : body_.pose().rotations[child].norm());
    const body::TexelRange& r = grid.range(i);
    if (!r.valid) {
      throw std::invalid_argument("island of bone " + sk.joint(bone).name + " has no texels at resolution " +
                                  std::to_string(normal_resolution));
    }
    // Very coarse grids would make the stencil wrap around the cylinder.
    dtheta_.push_back(std::min(2 * pi / (r.col1 - r.col0), pi / 4));
    daxial_.push_back(std::min(1.0 / (r.row1 - r.row0), 0.25));
  }
}

Vector3d GroundTruthSurface::displacement(const Coord& c) const {
  if (!covered_.at(c.island)) return Vector3d::Zero();
  const body::Island& is = islands_[c.island];
  const double v = is.v0 + c.axial * (is.v1 - is.v0);
  const double radial = spec_.base + spec_.amplitude * std::sin(2 * pi * spec_.frequency * v);
  return {radial * std::cos(c.theta), radial * std::sin(c.theta), spec_.coupling * std::sin(bend_[c.island])};
}

Vector3d GroundTruthSurface::position(const Coord& c) const {
  const body::CylinderCoord cc{islands_.at(c.island).bone, c.theta, c.axial};
  return body_.bone(cc.bone).apply(body_.local_surface_point(cc) + displacement(c));
}

GroundTruthSurface::Point GroundTruthSurface::evaluate(const Coord& c) const {
  const double ht = dtheta_.at(c.island), ha = daxial_[c.island];
  const Vector3d dt = position({c.island, c.theta + ht, c.axial}) - position({c.island, c.theta - ht, c.axial});
  const Vector3d da = position({c.island, c.theta, c.axial + ha}) - position({c.island, c.theta, c.axial - ha});
  Vector3d n = dt.cross(da);
  const Vector3d outward = body_.bone(islands_[c.island].bone).rotation * Vector3d(std::cos(c.theta), std::sin(c.theta), 0);
  if (n.dot(outward) < 0) n = -n;
  return {position(c), n.normalized()};
}

PointSet GroundTruthSurface::sample(std::size_t n, std::uint64_t seed, std::vector<Coord>* coords) const {
  if (n < 1) throw std::invalid_argument("sample count must be at least 1");
  std::vector<double> cumulative;
  double total = 0;
  for (const auto& is : islands_) cumulative.push_back(total += (is.u1 - is.u0) * (is.v1 - is.v0));
  std::mt19937_64 rng(seed);
  PointSet out;
  out.reserve(n);
  if (coords) coords->clear();
  for (std::size_t k = 0; k < n; ++k) {
    const double pick = unit(rng) * total;
    std::size_t i = 0;
    while (i + 1 < cumulative.size() && pick >= cumulative[i]) ++i;
    const Coord c{i, 2 * pi * unit(rng), unit(rng)};
    const Point p = evaluate(c);
    out.push_back(p.position, p.normal);
    if (coords) coords->push_back(c);
  }
  return out;
}

GroundTruthSurface gen_outfit(const SyntheticOutfitSpec& spec, const body::PosedBody& body, int normal_resolution) {
  return GroundTruthSurface(spec, body, normal_resolution);
}

PointSet sample_gt(const GroundTruthSurface& surface, std::size_t n, std::uint64_t seed) {
  return surface.sample(n, seed);
}

// ---- poses -------------------------------------------------------------------------

std::vector<body::Pose> pose_trajectory(const body::Skeleton& skeleton, std::size_t count, std::uint64_t seed) {
  // Per-joint (bias, amplitude) of each axis-angle component, radians.
  struct Range {
    Vector3d bias, amp;
  };
  auto range_of = [](const std::string& name) -> Range {
    if (name == "pelvis") return {Vector3d::Zero(), Vector3d(0.4, 1.2, 0.3)};
    if (name == "spine") return {Vector3d::Zero(), Vector3d(0.25, 0.25, 0.15)};
    if (name == "head") return {Vector3d::Zero(), Vector3d(0.3, 0.4, 0.2)};
    if (name == "upperarm_l") return {Vector3d(0, 0, -0.6), Vector3d(0.5, 0.3, 0.5)};
    if (name == "upperarm_r") return {Vector3d(0, 0, 0.6), Vector3d(0.5, 0.3, 0.5)};
    if (name == "forearm_l") return {Vector3d(0, 0.6, 0), Vector3d(0.1, 0.6, 0.1)};
    if (name == "forearm_r") return {Vector3d(0, -0.6, 0), Vector3d(0.1, 0.6, 0.1)};
    if (name == "thigh_l") return {Vector3d(-0.2, 0, 0.08), Vector3d(0.6, 0.2, 0.08)};
    if (name == "thigh_r") return {Vector3d(-0.2, 0, -0.08), Vector3d(0.6, 0.2, 0.08)};
    if (name == "shin_l" || name == "shin_r") return {Vector3d(0.6, 0, 0), Vector3d(0.6, 0.05, 0.05)};
    return {Vector3d::Zero(), Vector3d::Constant(0.2)};
  };
  std::mt19937_64 rng(seed);
  const std::size_t joints = skeleton.size();
  std::vector<Vector3d> freq(joints), phase(joints);
  for (std::size_t j = 0; j < joints; ++j)
    for (int k = 0; k < 3; ++k) {
      freq[j][k] = 1.0 + static_cast<double>(rng() % 2);
      phase[j][k] = 2 * pi * unit(rng);
    }
  Vector3d tphase;
  for (int k = 0; k < 3; ++k) tphase[k] = 2 * pi * unit(rng);

  std::vector<body::Pose> out;
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(count);
    body::Pose p = body::Pose::identity(joints);
    for (std::size_t j = 0; j < joints; ++j) {
      const Range r = range_of(skeleton.joint(j).name);
      for (int k = 0; k < 3; ++k) p.rotations[j][k] = r.bias[k] + r.amp[k] * std::sin(2 * pi * freq[j][k] * t + phase[j][k]);
    }
    for (int k = 0; k < 3; ++k) p.translation[k] = 0.5 * std::sin(2 * pi * t + tphase[k]);
    out.push_back(p);
  }
  return out;
}

// ---- manifest ----------------------------------------------------------------------

std::string DatasetManifest::format() const {
  std::string out = "# synthetic clothing dataset\nversion " + std::to_string(version) + "\nseed " +
                    std::to_string(seed) + "\n";
  char buf[512];
  for (const auto& o : outfits) {
    std::snprintf(buf, sizeof buf, "outfit %s %.17g %.17g %d %.17g %s\n", o.id.c_str(), o.base, o.amplitude,
                  o.frequency, o.coupling, join(o.coverage, ',').c_str());
    out += buf;
  }
  for (const auto& e : entries) {
    out += "example " + e.outfit + " " + e.name + " " + e.pose_file.generic_string() + " " +
           e.cloud_file.generic_string() + " " + (e.train ? "train" : "test") + "\n";
  }
  return out;
}

DatasetManifest DatasetManifest::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  DatasetManifest m;
  bool have_seed = false, have_version = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string kind;
    if (!(ls >> kind)) continue;
    std::string extra;
    if (kind == "version") {
      if (!(ls >> m.version) || m.version != 1) throw ParseError("unsupported manifest version", line_no);
      have_version = true;
    } else if (kind == "seed") {
      if (!(ls >> m.seed)) throw ParseError("expected 'seed <integer>'", line_no);
      have_seed = true;
    } else if (kind == "outfit") {
      SyntheticOutfitSpec o;
      std::string coverage;
      if (!(ls >> o.id >> o.base >> o.amplitude >> o.frequency >> o.coupling >> coverage)) {
        throw ParseError("expected 'outfit id A B k C bone,bone,...'", line_no);
      }
      std::istringstream cs(coverage);
      for (std::string name; std::getline(cs, name, ',');) o.coverage.push_back(name);
      m.outfits.push_back(o);
    } else if (kind == "example") {
      ManifestEntry e;
      std::string pose, cloud, split;
      if (!(ls >> e.outfit >> e.name >> pose >> cloud >> split) || (split != "train" && split != "test")) {
        throw ParseError("expected 'example outfit name pose-file cloud-file train|test'", line_no);
      }
      e.pose_file = pose;
      e.cloud_file = cloud;
      e.train = split == "train";
      m.entries.push_back(e);
    } else {
      throw ParseError("unknown manifest record '" + kind + "'", line_no);
    }
    if (ls >> extra) throw ParseError("trailing token '" + extra + "'", line_no);
  }
  if (!have_version || !have_seed) throw ParseError("manifest needs 'version' and 'seed' lines", line_no);
  return m;
}

void DatasetManifest::validate(const std::filesystem::path& root) const {
  std::set<std::pair<std::string, std::string>> names;
  std::set<std::string> ids;
  for (const auto& o : outfits) ids.insert(o.id);
  for (const auto& e : entries) {
    if (!ids.empty() && !ids.count(e.outfit)) throw std::invalid_argument("manifest example of unknown outfit " + e.outfit);
    if (!names.insert({e.outfit, e.name}).second) {
      throw std::invalid_argument("manifest lists " + e.outfit + "/" + e.name + " twice");
    }
    for (const auto& f : {e.pose_file, e.cloud_file}) {
      if (!std::filesystem::exists(root / f)) throw std::invalid_argument("manifest file is missing: " + (root / f).string());
    }
  }
}

DatasetManifest gen_dataset(const std::vector<SyntheticOutfitSpec>& specs, std::uint64_t seed,
                            const std::filesystem::path& dir, const GenOptions& options) {
  if (specs.empty()) throw std::invalid_argument("no outfits to generate");
  if (options.poses_per_outfit < 1 || options.points < 1 || options.test_every < 2) {
    throw std::invalid_argument("invalid dataset generation options");
  }
  const train::BodyContext ctx = train::BodyContext::proxy();
  for (const auto& s : specs) s.validate(*ctx.skeleton);

  DatasetManifest m;
  m.seed = seed;
  m.outfits = specs;
  std::filesystem::create_directories(dir);
  for (const auto& spec : specs) {
    std::filesystem::create_directories(dir / spec.id);
    const auto poses = pose_trajectory(*ctx.skeleton, options.poses_per_outfit, mix(seed, "poses/" + spec.id));
    for (std::size_t i = 0; i < poses.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "pose_%03zu", i);
      ManifestEntry e{spec.id, name, std::filesystem::path(spec.id) / (std::string(name) + ".pose"),
                      std::filesystem::path(spec.id) / (std::string(name) + ".ply"),
                      i % options.test_every != options.test_every - 1};
      const GroundTruthSurface gt(spec, ctx.posed(poses[i]), options.normal_resolution);
      write_pose(poses[i], *ctx.skeleton, dir / e.pose_file);
      write_ply(gt.sample(options.points, mix(seed, "points/" + spec.id + "/" + name)), dir / e.cloud_file);
      m.entries.push_back(e);
    }
  }
  write_text(dir / "manifest.txt", m.format());
  return m;
}

std::vector<train::TrainingExample> load_examples(const std::filesystem::path& manifest_path,
                                                  const body::Skeleton& skeleton, bool train_split) {
  const DatasetManifest m = DatasetManifest::parse(read_text(manifest_path));
  const auto root = manifest_path.parent_path();
  m.validate(root);
  std::vector<train::TrainingExample> out;
  for (const auto& e : m.entries) {
    if (e.train != train_split) continue;
    train::TrainingExample ex =
        train::normalize_example(read_ply(root / e.cloud_file), read_pose(root / e.pose_file, skeleton), skeleton);
    ex.outfit = e.outfit;
    ex.name = e.name;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace pop::io
