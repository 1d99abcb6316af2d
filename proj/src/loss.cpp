#include "depthkit/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "depthkit/random.hpp"

namespace depthkit {
namespace F = torch::nn::functional;

namespace {

void check_pair(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask, const char* what) {
  if (y.sizes() != yhat.sizes()) throw std::invalid_argument(std::string(what) + ": shape mismatch");
  if (mask.defined() && mask.sizes() != y.sizes())
    throw std::invalid_argument(std::string(what) + ": mask shape mismatch");
  if (y.dim() < 2) throw std::invalid_argument(std::string(what) + ": expected at least 2 dimensions");
}

// (N, 1, H, W) view for pooling.
torch::Tensor as_nchw(const torch::Tensor& t) {
  return t.reshape({-1, 1, t.size(-2), t.size(-1)});
}

}  // namespace

std::pair<torch::Tensor, torch::Tensor> image_gradients(const torch::Tensor& t) {
  if (t.dim() < 2) throw std::invalid_argument("image_gradients: expected at least 2 dimensions");
  const auto w = t.size(-1), h = t.size(-2);
  auto gx = torch::zeros_like(t);
  auto gy = torch::zeros_like(t);
  if (w > 1)
    gx = F::pad(t.narrow(-1, 1, w - 1) - t.narrow(-1, 0, w - 1), F::PadFuncOptions({0, 1}));
  if (h > 1)
    gy = F::pad(t.narrow(-2, 1, h - 1) - t.narrow(-2, 0, h - 1), F::PadFuncOptions({0, 0, 0, 1}));
  return {gx, gy};
}

torch::Tensor l_depth(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask) {
  check_pair(y, yhat, mask, "l_depth");
  const auto diff = (y - yhat).abs();
  if (!mask.defined()) return diff.mean();
  return (diff * mask).sum() / mask.sum().clamp_min(1.0);
}

torch::Tensor l_grad(const torch::Tensor& y, const torch::Tensor& yhat, const torch::Tensor& mask) {
  check_pair(y, yhat, mask, "l_grad");
  const auto [gx_y, gy_y] = image_gradients(y);
  const auto [gx_p, gy_p] = image_gradients(yhat);
  auto ex = (gx_y - gx_p).abs();
  auto ey = (gy_y - gy_p).abs();
  if (!mask.defined()) return (ex + ey).mean();
  // A difference counts only when both of its pixels are valid.
  const auto w = mask.size(-1), h = mask.size(-2);
  auto mx = torch::zeros_like(mask);
  auto my = torch::zeros_like(mask);
  if (w > 1) mx = F::pad(mask.narrow(-1, 1, w - 1) * mask.narrow(-1, 0, w - 1), F::PadFuncOptions({0, 1}));
  if (h > 1) my = F::pad(mask.narrow(-2, 1, h - 1) * mask.narrow(-2, 0, h - 1), F::PadFuncOptions({0, 0, 0, 1}));
  return (ex * mx + ey * my).sum() / mask.sum().clamp_min(1.0);
}

torch::Tensor ssim(const torch::Tensor& a, const torch::Tensor& b, const SsimParams& params,
                   const torch::Tensor& mask) {
  params.validate();
  check_pair(a, b, mask, "ssim");
  const int win = params.window;
  if (a.size(-1) < win || a.size(-2) < win) throw std::invalid_argument("ssim: map smaller than window");
  const auto x = as_nchw(a), y = as_nchw(b);
  const auto pool = F::AvgPool2dFuncOptions(win).stride(1);
  const auto mx = F::avg_pool2d(x, pool);
  const auto my = F::avg_pool2d(y, pool);
  const auto vxx = F::avg_pool2d(x * x, pool) - mx * mx;
  const auto vyy = F::avg_pool2d(y * y, pool) - my * my;
  const auto vxy = F::avg_pool2d(x * y, pool) - mx * my;
  const double c1 = params.c1(), c2 = params.c2();
  const auto map = ((2 * mx * my + c1) * (2 * vxy + c2)) / ((mx * mx + my * my + c1) * (vxx + vyy + c2));
  if (!mask.defined()) return map.mean();
  const auto full = (F::avg_pool2d(as_nchw(mask), pool) > 1.0 - 1e-6).to(map.scalar_type());
  const auto count = full.sum();
  if (count.item<double>() == 0.0) return torch::ones({}, map.options());
  return (map * full).sum() / count;
}

torch::Tensor l_ssim(const torch::Tensor& y, const torch::Tensor& yhat, const SsimParams& params,
                     const torch::Tensor& mask) {
  return (1.0 - ssim(y, yhat, params, mask)) * 0.5;
}

LossTerms composite_loss(const torch::Tensor& y, const torch::Tensor& yhat, const LossWeights& weights,
                         const SsimParams& params, const torch::Tensor& mask) {
  weights.validate();
  LossTerms t;
  t.depth = l_depth(y, yhat, mask);
  t.grad = l_grad(y, yhat, mask);
  t.ssim = l_ssim(y, yhat, params, mask);
  t.total = weights.lambda_depth * t.depth + t.grad + t.ssim;
  return t;
}

namespace {

// Smallest |argument| of any absolute value term touched by pixel (r, c).
double kink_distance(const torch::Tensor& y, const torch::Tensor& yhat, std::int64_t r, std::int64_t c,
                     const GradCheckOptions& o) {
  const auto ya = y.accessor<double, 2>();
  const auto pa = yhat.accessor<double, 2>();
  const auto h = y.size(0), w = y.size(1);
  double best = INFINITY;
  if (o.depth_kinks) best = std::abs(ya[r][c] - pa[r][c]);
  if (o.gradient_kinks) {
    auto gx = [&](std::int64_t i, std::int64_t j) {
      return std::abs((ya[i][j + 1] - ya[i][j]) - (pa[i][j + 1] - pa[i][j]));
    };
    auto gy = [&](std::int64_t i, std::int64_t j) {
      return std::abs((ya[i + 1][j] - ya[i][j]) - (pa[i + 1][j] - pa[i][j]));
    };
    if (c + 1 < w) best = std::min(best, gx(r, c));
    if (c > 0) best = std::min(best, gx(r, c - 1));
    if (r + 1 < h) best = std::min(best, gy(r, c));
    if (r > 0) best = std::min(best, gy(r - 1, c));
  }
  return best;
}

}  // namespace

GradCheckResult gradient_check(const LossFn& loss, const torch::Tensor& y_in, const torch::Tensor& yhat0,
                               const GradCheckOptions& options) {
  if (y_in.sizes() != yhat0.sizes() || y_in.dim() != 2)
    throw std::invalid_argument("gradient_check: expected two equally sized 2-D maps");
  const auto y = y_in.to(torch::kFloat64).contiguous();
  const auto base = yhat0.to(torch::kFloat64).contiguous().clone();

  auto probe = base.clone().requires_grad_(true);
  loss(y, probe).backward();
  const auto analytic = probe.grad().contiguous();
  const auto ga = analytic.accessor<double, 2>();

  const auto h = y.size(0), w = y.size(1);
  std::vector<std::int64_t> pixels(static_cast<std::size_t>(h * w));
  for (std::int64_t i = 0; i < h * w; ++i) pixels[static_cast<std::size_t>(i)] = i;
  if (options.samples > 0 && options.samples < h * w) {
    Rng rng(options.seed);
    for (std::size_t i = pixels.size(); i > 1; --i) std::swap(pixels[i - 1], pixels[rng.below(i)]);
    pixels.resize(static_cast<std::size_t>(options.samples));
  }

  torch::NoGradGuard no_grad;
  GradCheckResult result;
  const double eps = options.epsilon;
  for (std::int64_t idx : pixels) {
    const auto r = idx / w, c = idx % w;
    if (kink_distance(y, base, r, c, options) < 2.0 * eps) {
      ++result.skipped;
      continue;
    }
    auto plus = base.clone();
    auto minus = base.clone();
    plus.accessor<double, 2>()[r][c] += eps;
    minus.accessor<double, 2>()[r][c] -= eps;
    const double numeric = (loss(y, plus).item<double>() - loss(y, minus).item<double>()) / (2.0 * eps);
    const double a = ga[r][c];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
    ++result.checked;
  }
  return result;
}

}  // namespace depthkit
