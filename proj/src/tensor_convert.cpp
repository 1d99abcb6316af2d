#include "depthkit/tensor_convert.hpp"

#include <stdexcept>

namespace depthkit {

torch::Tensor image_to_tensor(const RgbImage& img, torch::Dtype dtype) {
  auto t = torch::empty({3, img.height(), img.width()}, torch::kFloat64);
  auto* out = t.data_ptr<double>();
  std::size_t i = 0;
  for (int k = 0; k < 3; ++k)
    for (double v : img.plane(k).values()) out[i++] = v;
  return t.to(dtype);
}

torch::Tensor images_to_batch(std::span<const RgbImage> images, torch::Dtype dtype) {
  if (images.empty()) throw std::invalid_argument("images_to_batch: empty batch");
  std::vector<torch::Tensor> parts;
  parts.reserve(images.size());
  for (const auto& img : images) {
    if (img.height() != images[0].height() || img.width() != images[0].width())
      throw std::invalid_argument("images_to_batch: images differ in size");
    parts.push_back(image_to_tensor(img, dtype));
  }
  return torch::stack(parts);
}

RgbImage tensor_to_image(const torch::Tensor& chw) {
  const auto t = chw.squeeze().to(torch::kFloat64).contiguous();
  if (t.dim() != 3 || t.size(0) != 3) throw std::invalid_argument("tensor_to_image: expected (3,H,W)");
  RgbImage img(static_cast<int>(t.size(1)), static_cast<int>(t.size(2)));
  const double* src = t.data_ptr<double>();
  std::size_t i = 0;
  for (int k = 0; k < 3; ++k)
    for (double& v : img.plane(k).values()) v = src[i++];
  return img;
}

torch::Tensor grid_to_tensor(const Grid<double>& grid, torch::Dtype dtype) {
  auto t = torch::empty({1, grid.height(), grid.width()}, torch::kFloat64);
  std::copy(grid.values().begin(), grid.values().end(), t.data_ptr<double>());
  return t.to(dtype);
}

torch::Tensor mask_to_tensor(const Mask& mask, torch::Dtype dtype) {
  auto t = torch::empty({1, mask.height(), mask.width()}, torch::kFloat64);
  double* out = t.data_ptr<double>();
  for (std::uint8_t m : mask.values()) *out++ = m ? 1.0 : 0.0;
  return t.to(dtype);
}

Grid<double> tensor_to_grid(const torch::Tensor& t) {
  auto s = t.detach().to(torch::kFloat64).contiguous();
  while (s.dim() > 2 && s.size(0) == 1) s = s.squeeze(0);
  if (s.dim() != 2) throw std::invalid_argument("tensor_to_grid: expected a single 2-D map");
  Grid<double> g(static_cast<int>(s.size(0)), static_cast<int>(s.size(1)));
  std::copy(s.data_ptr<double>(), s.data_ptr<double>() + s.numel(), g.values().begin());
  return g;
}

}  // namespace depthkit
