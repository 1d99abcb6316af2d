#pragma once

// Composite training loss on reciprocal-depth targets:
//   total = lambda * l_depth + l_grad + l_ssim
// All functions take maps whose last two dimensions are (H, W); leading
// dimensions are treated as a batch. An undefined `mask` means every pixel
// is valid; otherwise it is a 0/1 tensor of the same shape.

#include <functional>
#include <utility>

#include <torch/torch.h>

#include "depthkit/loss_params.hpp"

namespace depthkit {

/// Forward differences, zero in the last column (gx) / last row (gy).
std::pair<torch::Tensor, torch::Tensor> image_gradients(const torch::Tensor& t);

torch::Tensor l_depth(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask = {});
torch::Tensor l_grad(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask = {});
/// Mean uniform-window SSIM over windows fully inside the map (and fully
/// valid under the mask); 1 when no window qualifies.
torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimParams& params,
                   const torch::Tensor& mask = {});
torch::Tensor l_ssim(const torch::Tensor& y, const torch::Tensor& yhat, const SsimParams& params,
                     const torch::Tensor& mask = {});

struct LossTerms {
  torch::Tensor depth;
  torch::Tensor grad;
  torch::Tensor ssim;
  torch::Tensor total;
};

LossTerms composite_loss(const torch::Tensor& y, const torch::Tensor& yhat, const LossWeights& weights,
                         const SsimParams& params, const torch::Tensor& mask = {});

// --- finite-difference verification --------------------------------------------

using LossFn = std::function<torch::Tensor(const torch::Tensor& y, const torch::Tensor& yhat)>;

struct GradCheckOptions {
  double epsilon = 1e-5;
  int samples = 64;             // pixels probed; <= 0 probes every pixel
  std::uint64_t seed = 0;
  bool depth_kinks = false;     // skip pixels near |y - yhat| = 0
  bool gradient_kinks = false;  // skip pixels near |gx(y) - gx(yhat)| = 0 (or gy)
  double abs_floor = 1e-6;      // denominator floor for the relative error
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  int checked = 0;
  int skipped = 0;
};

/// Compares the autograd gradient of loss(y, .) at yhat0 with central
/// differences. Works in double precision.
GradCheckResult gradient_check(const LossFn& loss, const torch::Tensor& y, const torch::Tensor& yhat0,
                               const GradCheckOptions& options);

}  // namespace depthkit
