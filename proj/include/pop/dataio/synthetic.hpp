#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pop/bodykit/body.hpp"
#include "pop/trainer/trainer.hpp"

namespace pop::io {

// Ceiling on the largest possible offset A + B + C pi of an analytic outfit.
inline constexpr double kRadiusBound = 0.25;

// Analytic garment: a displacement field over the body's atlas islands.
struct SyntheticOutfitSpec {
  std::string id;
  double base = 0;       // A, m
  double amplitude = 0;  // B, m
  int frequency = 0;     // k
  double coupling = 0;   // C, m/rad
  std::vector<std::string> coverage;  // clothed bones by name

  void validate(const body::Skeleton& skeleton) const;
};

std::vector<SyntheticOutfitSpec> default_suite();
// A pose-coupled outfit kept out of the default suite for fitting experiments.
SyntheticOutfitSpec unseen_outfit();

// Ground-truth surface of one outfit on one posed body. Uncovered islands
// show the bare body.
class GroundTruthSurface {
 public:
  struct Point {
    Eigen::Vector3d position, normal;
  };
  struct Coord {
    std::size_t island = 0;
    double theta = 0, axial = 0;
  };

  GroundTruthSurface(SyntheticOutfitSpec spec, body::PosedBody body, int normal_resolution = 32);

  const SyntheticOutfitSpec& spec() const { return spec_; }
  const body::PosedBody& body() const { return body_; }
  bool covered(std::size_t island) const { return covered_.at(island); }

  // Offset r* in the bone's cylinder frame.
  Eigen::Vector3d displacement(const Coord& c) const;
  Eigen::Vector3d position(const Coord& c) const;
  // Position plus the finite-difference normal with a one-texel step.
  Point evaluate(const Coord& c) const;

  // n points uniform over atlas area; seed-deterministic.
  PointSet sample(std::size_t n, std::uint64_t seed, std::vector<Coord>* coords = nullptr) const;

 private:
  SyntheticOutfitSpec spec_;
  body::PosedBody body_;
  std::vector<body::Island> islands_;
  std::vector<bool> covered_;
  std::vector<double> bend_;              // child joint angle per island
  std::vector<double> dtheta_, daxial_;  // one-texel steps
};

GroundTruthSurface gen_outfit(const SyntheticOutfitSpec& spec, const body::PosedBody& body, int normal_resolution = 32);
PointSet sample_gt(const GroundTruthSurface& surface, std::size_t n, std::uint64_t seed);

// Smooth joint-angle trajectory; frame i of `count`. Includes a root
// orientation and translation that normalization removes.
std::vector<body::Pose> pose_trajectory(const body::Skeleton& skeleton, std::size_t count, std::uint64_t seed);

struct ManifestEntry {
  std::string outfit;
  std::string name;
  std::filesystem::path pose_file, cloud_file;  // relative to the manifest
  bool train = true;
};

struct DatasetManifest {
  std::uint64_t seed = 0;
  int version = 1;
  std::vector<SyntheticOutfitSpec> outfits;
  std::vector<ManifestEntry> entries;

  std::string format() const;
  static DatasetManifest parse(const std::string& text);
  void validate(const std::filesystem::path& root) const;
};

struct GenOptions {
  std::size_t poses_per_outfit = 24;
  std::size_t test_every = 3;      // every n-th pose goes to the test split
  std::size_t points = 20000;
  int normal_resolution = 32;
};

// Writes pose files, GT PLYs and manifest.txt under `dir`. Pure function of
// (specs, seed, options).
DatasetManifest gen_dataset(const std::vector<SyntheticOutfitSpec>& specs, std::uint64_t seed,
                            const std::filesystem::path& dir, const GenOptions& options = {});

// Loads and normalizes the examples of one split.
std::vector<train::TrainingExample> load_examples(const std::filesystem::path& manifest_path,
                                                  const body::Skeleton& skeleton, bool train_split);

}  // namespace pop::io
