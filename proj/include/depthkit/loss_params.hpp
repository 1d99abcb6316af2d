#pragma once

#include <stdexcept>

namespace depthkit {

struct LossWeights {
  double lambda_depth = 0.1;

  void validate() const {
    if (!(lambda_depth > 0.0)) throw std::invalid_argument("LossWeights: lambda_depth must be positive");
  }
};

/// Uniform-window SSIM settings. c1 = (k1 L)^2 and c2 = (k2 L)^2.
struct SsimParams {
  int window = 7;
  double dynamic_range = 1.0;
  double k1 = 0.01;
  double k2 = 0.03;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }

  void validate() const {
    if (window < 3 || window % 2 == 0) throw std::invalid_argument("SsimParams: window must be odd and >= 3");
    if (!(c1() > 0.0) || !(c2() > 0.0)) throw std::invalid_argument("SsimParams: c1 and c2 must be positive");
  }

  /// Range of reciprocal targets m/d for depths in [d_min, d_max].
  static SsimParams for_targets(double max_depth_m, double d_min, double d_max) {
    SsimParams p;
    p.dynamic_range = max_depth_m / d_min - max_depth_m / d_max;
    return p;
  }
};

}  // namespace depthkit
