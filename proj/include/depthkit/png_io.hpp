#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "depthkit/core.hpp"

namespace depthkit {

/// Raw PNG samples, interleaved, one uint16 per sample regardless of bit depth.
struct PngImage {
  int height = 0;
  int width = 0;
  int channels = 0;   // 1 (gray), 3 (RGB) or 4 (RGBA)
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> samples;
};

PngImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const PngImage& image);

/// 8- or 16-bit gray/RGB/RGBA file to [0,1] RGB (gray is replicated, alpha dropped).
RgbImage read_rgb_png(const std::filesystem::path& path);
void write_rgb_png(const std::filesystem::path& path, const RgbImage& img, int bit_depth = 8);

/// 16-bit single-channel depth; meters = raw * scale, raw 0 marks a missing pixel.
DepthMap read_depth_png(const std::filesystem::path& path, double scale);
/// Inverse of read_depth_png: raw = round(meters / scale), invalid pixels written as 0.
void write_depth_png(const std::filesystem::path& path, const DepthMap& depth, double scale);

}  // namespace depthkit
