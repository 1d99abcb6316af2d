#pragma once

#include <span>

#include <torch/torch.h>

#include "depthkit/core.hpp"

namespace depthkit {

/// (3, H, W) tensor of the image planes.
torch::Tensor image_to_tensor(const RgbImage& img, torch::Dtype dtype = torch::kFloat32);
/// (B, 3, H, W); all images must share one size.
torch::Tensor images_to_batch(std::span<const RgbImage> images, torch::Dtype dtype = torch::kFloat32);
RgbImage tensor_to_image(const torch::Tensor& chw);

/// (1, H, W) values.
torch::Tensor grid_to_tensor(const Grid<double>& grid, torch::Dtype dtype = torch::kFloat32);
torch::Tensor mask_to_tensor(const Mask& mask, torch::Dtype dtype = torch::kFloat32);
/// Accepts (H, W) or any shape with leading singleton dims.
Grid<double> tensor_to_grid(const torch::Tensor& t);

}  // namespace depthkit
