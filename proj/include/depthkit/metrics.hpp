#pragma once

// Depth-estimation error metrics. Quantitative metrics are computed in
// meters over pixels valid in both maps; everything runs in double precision.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "depthkit/core.hpp"
#include "depthkit/data.hpp"
#include "depthkit/loss_params.hpp"

namespace depthkit {

/// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

struct QualitativeMetrics {
  double mssim = 0.0;
  double edge_f1 = 0.0;
  double mean_normal_error = 0.0;
  bool operator==(const QualitativeMetrics&) const = default;
};

struct MetricReport {
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double rel = 0.0;
  double rms = 0.0;
  double log10 = 0.0;
  double sq_rel = 0.0;
  std::optional<QualitativeMetrics> qualitative;
  std::size_t n_images = 0;

  bool operator==(const MetricReport&) const = default;
};

// --- per-image quantitative metrics -----------------------------------------

double rel(const DepthMap& gt, const DepthMap& pred);
double rms(const DepthMap& gt, const DepthMap& pred);
double log10_error(const DepthMap& gt, const DepthMap& pred);
double sq_rel(const DepthMap& gt, const DepthMap& pred);
/// Fraction of pixels with max(gt/pred, pred/gt) strictly below threshold.
double delta_accuracy(const DepthMap& gt, const DepthMap& pred, double threshold);

/// Median of the valid values (mean of the two middle values for even counts).
double median_valid(const DepthMap& depth);
/// pred * median(gt) / median(pred), medians over pixels valid in both maps.
DepthMap median_scale(const DepthMap& gt, const DepthMap& pred);

// --- qualitative measures ----------------------------------------------------

/// Linear map of depth in [lo, hi] onto [0, 1], clamped; lo == hi gives 0.5.
Grid<double> render_grayscale(const DepthMap& depth, double lo, double hi);
/// Renders gt and pred with the range of the ground truth's valid pixels.
std::pair<Grid<double>, Grid<double>> render_grayscale_pair(const DepthMap& gt, const DepthMap& pred);

/// Mean uniform-window SSIM over every window position that fits inside the
/// map (and, with a mask, whose pixels are all valid). Returns 1 when no
/// window qualifies.
double ssim_index(const Grid<double>& a, const Grid<double>& b, const SsimParams& params,
                  const Mask* mask = nullptr);
double mssim(std::span<const Grid<double>> gt_set, std::span<const Grid<double>> pred_set,
             const SsimParams& params);

/// 3x3 Sobel gradient magnitude with replicated borders.
Grid<double> sobel_magnitude(const Grid<double>& depth);
Grid<double> sobel_magnitude(const DepthMap& depth);

/// F1 of thresholded Sobel edges (gt edges are the positives). Both edge sets
/// empty gives 1, exactly one empty gives 0. With `support`, only pixels
/// where support != 0 take part.
double edge_f1(const DepthMap& gt, const DepthMap& pred, double threshold = 0.5,
               const Mask* support = nullptr);

using Normal = std::array<double, 3>;
using NormalMap = Grid<Normal>;

/// n = normalize(-dd/dx, -dd/dy, 1) with central differences on a
/// replicate-padded map.
NormalMap normals_from_depth(const DepthMap& depth);
double mean_normal_error(const DepthMap& gt, const DepthMap& pred, const Mask* support = nullptr);

/// Pixels whose 3x3 neighbourhood (replicate border) is valid in `depth`.
Mask neighbourhood_support(const DepthMap& depth);

// --- set evaluation ------------------------------------------------------------

struct EvalOptions {
  std::optional<CropRect> crop;
  bool median_scaling = false;
  bool qualitative = true;
  double edge_threshold = 0.5;
  SsimParams ssim{};  // renderings live in [0,1], so dynamic_range = 1
};

struct EvalPair {
  DepthMap gt;
  DepthMap pred;  // gt resolution, or exactly half of it (upsampled 2x)
  std::string id;
};

/// Per-image metrics averaged over the set with compensated summation.
MetricReport evaluate_pairs(std::span<const EvalPair> pairs, const EvalOptions& options);

/// Ground truth from `gt_root` (a dataset directory, ids from test.txt),
/// predictions from `pred_dir/<id>.png` as 16-bit millimetres.
MetricReport evaluate_set(const std::filesystem::path& gt_root, const std::filesystem::path& pred_dir,
                          const DatasetProfile& profile, const EvalOptions& options);

constexpr double kPredictionDepthScale = 0.001;

std::string report_to_text(const MetricReport& report);
std::string report_to_json(const MetricReport& report);
MetricReport report_from_json(const std::string& json);
MetricReport report_from_text(const std::string& text);
void write_report(const std::filesystem::path& stem, const MetricReport& report);

}  // namespace depthkit
