#pragma once

// Dataset layout:
//   <root>/profile.cfg       key=value DatasetProfile
//   <root>/rgb/<id>.png      8- or 16-bit colour image
//   <root>/depth/<id>.png    16-bit depth, raw * depth_scale = meters, 0 = missing
//   <root>/train.txt         newline-delimited ids
//   <root>/test.txt          newline-delimited ids
//   <root>/val.txt           optional explicit validation ids

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "depthkit/augment.hpp"
#include "depthkit/config.hpp"
#include "depthkit/core.hpp"

namespace depthkit {

struct Size2 {
  int height = 0;
  int width = 0;
  bool operator==(const Size2&) const = default;
};

struct DatasetProfile {
  std::string name = "toy";
  std::filesystem::path root;
  std::filesystem::path rgb_dir = "rgb";
  std::filesystem::path depth_dir = "depth";
  double depth_scale = 0.001;
  double d_min = 0.4;
  double d_max = 10.0;
  double max_depth_m = 10.0;
  std::optional<Size2> train_resize;
  std::optional<CropRect> eval_crop;
  bool sparse = false;

  void validate() const;

  std::filesystem::path rgb_path(const std::string& id) const;
  std::filesystem::path depth_path(const std::string& id) const;

  // Presets. Evaluation crops are not part of the presets; they are read from
  // the profile file shipped with each dataset.
  static DatasetProfile nyu();
  static DatasetProfile kitti();
  static DatasetProfile toy();

  /// Reads <root>/profile.cfg (or `file` when it names a file) and sets root.
  static DatasetProfile load(const std::filesystem::path& root_or_file);
  /// Reads profile keys from an already-parsed file; `prefix` is e.g. "data.".
  static DatasetProfile from_config(const KeyValueFile& kv, const std::string& prefix = "");
  std::string to_config() const;
  void save(const std::filesystem::path& file) const;
};

Size2 parse_size(const std::string& text);  // "HxW"
CropRect parse_crop(const std::string& text);  // "top,left,height,width"

struct Sample {
  RgbImage image;
  DepthMap depth;
  std::string id;
};

Sample load_sample(const DatasetProfile& profile, const std::string& id);

/// Front-propagating diffusion fill: each pass sets every missing pixel with
/// at least one valid 4-neighbour to the mean of those neighbours.
DepthMap inpaint_depth(const DepthMap& depth);

struct TrainingPair {
  RgbImage image;
  TargetMap target;
};

/// Inpaint (dense) or keep the mask (sparse), clip, resample to half the
/// input resolution, convert to reciprocal targets, then augment when a
/// policy is given.
TrainingPair prepare_training_pair(const Sample& sample, const DatasetProfile& profile,
                                   const AugmentPolicy* policy, Rng& rng);

std::vector<std::string> read_manifest(const std::filesystem::path& file);
void write_manifest(const std::filesystem::path& file, const std::vector<std::string>& ids);

struct ToyDatasetOptions {
  int count = 8;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 1;
  int test_count = 0;  // extra scenes listed in test.txt only
};

/// Procedural scenes: a background plane plus 3-8 nearer axis-aligned
/// rectangles on a 2-pixel grid, each region with its own random albedo,
/// shaded by distance.
void make_toy_dataset(const ToyDatasetOptions& options, const std::filesystem::path& out_dir);

/// Deterministic permutation of [0, n) for the given (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// Holds out ids whose seeded hash falls in the lowest `fraction`; at least
/// one id is held out when two or more are available.
std::pair<std::vector<std::string>, std::vector<std::string>> split_validation(
    const std::vector<std::string>& ids, std::uint64_t seed, double fraction = 0.05);

}  // namespace depthkit
