#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "depthkit/augment.hpp"
#include "depthkit/config.hpp"
#include "depthkit/data.hpp"
#include "depthkit/loss_params.hpp"
#include "depthkit/metrics.hpp"
#include "depthkit/model.hpp"

namespace depthkit {

struct Ablations {
  bool deeper_encoder = false;
  bool half_decoder = false;
  bool color_aug_off = false;
  bool random_init_encoder = false;
  bool no_skip_connections = false;

  /// Sets the flag called `name`; throws std::invalid_argument if unknown.
  void enable(const std::string& name);
  std::vector<std::string> enabled() const;
};

/// Rewrites the model and augmentation settings for the enabled ablations.
void apply_ablations(const Ablations& ablations, ModelConfig& model, AugmentPolicy& augment);

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 8;
  int max_iterations = 1000;
  int validation_interval = 100;
  std::uint64_t seed = 0;
  double validation_fraction = 0.05;
  bool augment = true;
  LossWeights loss_weights;
  std::optional<SsimParams> ssim_params;  // unset: derived from the dataset depth range
  AugmentPolicy augment_policy;
  Ablations ablations;

  void validate() const;
  SsimParams resolved_ssim(const DatasetProfile& profile) const;

  std::vector<std::pair<std::string, std::string>> to_items() const;
  /// Reads [train], [ssim] and [augment] keys.
  static TrainConfig from_config(const KeyValueFile& kv);
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::int64_t iteration, std::vector<std::string> batch_ids);
  std::int64_t iteration() const { return iteration_; }
  const std::vector<std::string>& batch_ids() const { return batch_ids_; }

 private:
  std::int64_t iteration_;
  std::vector<std::string> batch_ids_;
};

struct StepRecord {
  std::int64_t iteration = 0;  // 1-based
  double depth = 0.0;
  double grad = 0.0;
  double ssim = 0.0;
  double total = 0.0;
  double wall_time = 0.0;  // seconds since the trainer was created
};

struct ValidationRecord {
  std::int64_t iteration = 0;
  double train_loss = 0.0;       // composite loss on the training split, no augmentation
  double validation_loss = 0.0;  // composite loss on the held-out split
};

std::string format_step(const StepRecord& record);

class Trainer {
 public:
  /// Caches prepared training and validation pairs in memory. The model must
  /// already reflect cfg's ablations.
  Trainer(DepthNet model, DatasetProfile profile, const std::vector<Sample>& train,
          const std::vector<Sample>& validation, TrainConfig cfg);

  StepRecord step();
  /// Runs until max_iterations. With an output directory, appends to
  /// train_log.txt, writes validation.csv and checkpoints every
  /// validation_interval steps into <out>/checkpoint.
  void run(const std::optional<std::filesystem::path>& out_dir = std::nullopt,
           const std::function<void(const StepRecord&)>& on_step = {});

  double validation_loss();
  double training_loss();
  ValidationRecord validate_now();

  void save_checkpoint(const std::filesystem::path& dir) const;
  /// Restores weights, optimizer moments and the iteration counter.
  void load_checkpoint(const std::filesystem::path& dir);

  std::int64_t iteration() const { return iteration_; }
  const std::vector<StepRecord>& log() const { return log_; }
  const std::vector<ValidationRecord>& validation_curve() const { return curve_; }
  const std::vector<std::string>& train_ids() const { return train_ids_; }
  DepthNet model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  const DatasetProfile& profile() const { return profile_; }

  /// Sample ids of the batch used at the given 1-based iteration.
  std::vector<std::string> batch_ids(std::int64_t iteration) const;

 private:
  std::vector<std::size_t> batch_indices(std::int64_t iteration) const;
  double mean_loss(const std::vector<TrainingPair>& pairs);

  DepthNet model_;
  DatasetProfile profile_;
  TrainConfig cfg_;
  SsimParams ssim_;
  std::vector<TrainingPair> train_;
  std::vector<std::string> train_ids_;
  std::vector<TrainingPair> validation_;
  std::unique_ptr<torch::optim::Adam> optimizer_;
  std::int64_t iteration_ = 0;
  std::vector<StepRecord> log_;
  std::vector<ValidationRecord> curve_;
  std::chrono::steady_clock::time_point start_;
};

/// Loads every sample of the dataset's train.txt and splits off validation
/// ids (val.txt when present, otherwise a seeded hash split).
std::pair<std::vector<Sample>, std::vector<Sample>> load_training_split(const DatasetProfile& profile,
                                                                        std::uint64_t seed, double fraction);

// --- checkpoints -------------------------------------------------------------------

/// Builds a model from <dir>/manifest.cfg and loads <dir>/model.pt.
DepthNet load_model(const std::filesystem::path& checkpoint_dir);
/// Profile recorded alongside the model (depth range and max depth).
DatasetProfile load_checkpoint_profile(const std::filesystem::path& checkpoint_dir);

// --- inference -----------------------------------------------------------------------

/// Network in target space: (B,3,H,W) -> (B,1,H/2,W/2).
using TargetPredictor = std::function<torch::Tensor(const torch::Tensor&)>;

/// Mirror-averaged prediction in metres at the input resolution:
/// (f(x) + flip(f(flip(x)))) / 2, clamped to [m/d_max, m/d_min], mapped back to
/// depth, then upsampled 2x.
DepthMap predict_with_mirror(const TargetPredictor& f, const RgbImage& image, const DatasetProfile& profile);
/// Runs the model in eval mode and restores its previous mode afterwards.
DepthMap predict_with_mirror(DepthNet model, const RgbImage& image, const DatasetProfile& profile);

/// Predicts every test id, then scores with evaluate_pairs using the
/// profile's evaluation crop.
MetricReport evaluate_model(const TargetPredictor& f, const DatasetProfile& profile,
                            const std::vector<std::string>& ids, bool scaled, bool qualitative = true);
MetricReport evaluate_model(DepthNet model, const DatasetProfile& profile, const std::vector<std::string>& ids,
                            bool scaled, bool qualitative = true);

}  // namespace depthkit
