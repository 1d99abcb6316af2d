#pragma once

// Image and depth-map value types plus the elementary transforms the rest of
// the toolkit is built from. Everything here works in double precision and
// is free of side effects.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace depthkit {

/// Dense row-major 2-D array.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(checked(height, width)), fill) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  bool operator==(const Grid&) const = default;

 private:
  static long checked(int height, int width) {
    if (height < 0 || width < 0) throw std::invalid_argument("Grid: negative dimension");
    return static_cast<long>(height) * width;
  }
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Mask = Grid<std::uint8_t>;

/// Three-channel image with values in [0, 1], stored as separate planes.
class RgbImage {
 public:
  static constexpr int kChannels = 3;

  RgbImage() = default;
  RgbImage(int height, int width, double fill = 0.0);

  int height() const noexcept { return planes_[0].height(); }
  int width() const noexcept { return planes_[0].width(); }
  int channels() const noexcept { return kChannels; }

  double& at(int channel, int row, int col) { return planes_.at(channel)(row, col); }
  double at(int channel, int row, int col) const { return planes_.at(channel)(row, col); }

  Grid<double>& plane(int channel) { return planes_.at(channel); }
  const Grid<double>& plane(int channel) const { return planes_.at(channel); }

  /// Throws std::domain_error if any value lies outside [0, 1].
  void check_range() const;

  bool operator==(const RgbImage&) const = default;

 private:
  std::array<Grid<double>, kChannels> planes_;
};

/// Metric depth in meters. Pixels with mask == 0 carry no measurement.
struct DepthMap {
  Grid<double> values;
  Mask valid;

  DepthMap() = default;
  DepthMap(int height, int width, double fill = 0.0)
      : values(height, width, fill), valid(height, width, 1) {}
  /// Builds a map and marks every non-positive value invalid.
  static DepthMap from_values(Grid<double> values);

  int height() const noexcept { return values.height(); }
  int width() const noexcept { return values.width(); }
  bool is_valid(int row, int col) const { return valid(row, col) != 0; }
  std::size_t valid_count() const;

  bool operator==(const DepthMap&) const = default;
};

/// Network regression target: max_depth_m / depth, dimensionless.
struct TargetMap {
  Grid<double> values;
  Mask valid;
  double max_depth_m = 10.0;

  int height() const noexcept { return values.height(); }
  int width() const noexcept { return values.width(); }
  bool is_valid(int row, int col) const { return valid(row, col) != 0; }

  bool operator==(const TargetMap&) const = default;
};

struct CropRect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  bool fits(int image_height, int image_width) const noexcept {
    return top >= 0 && left >= 0 && height > 0 && width > 0 &&
           top + height <= image_height && left + width <= image_width;
  }
  bool operator==(const CropRect&) const = default;
};

// --- value transforms -------------------------------------------------------

DepthMap clip_depth(const DepthMap& depth, double d_min, double d_max);

TargetMap reciprocal_transform(const DepthMap& depth, double max_depth_m);
DepthMap inverse_reciprocal_transform(const TargetMap& target);

// --- geometric transforms ---------------------------------------------------

// Bilinear resampling with half-pixel centers: output pixel i samples the
// input at (i + 0.5) * in / out - 0.5, clamped to the valid range. Masks are
// resampled by nearest neighbour.
Grid<double> resize_bilinear(const Grid<double>& src, int new_height, int new_width);
RgbImage resize_bilinear(const RgbImage& img, int new_height, int new_width);
DepthMap resize_bilinear(const DepthMap& depth, int new_height, int new_width);
TargetMap resize_bilinear(const TargetMap& target, int new_height, int new_width);

template <typename T>
Grid<T> resize_nearest(const Grid<T>& src, int new_height, int new_width);
DepthMap resize_nearest(const DepthMap& depth, int new_height, int new_width);

template <typename T>
Grid<T> horizontal_flip(const Grid<T>& src) {
  Grid<T> out(src.height(), src.width());
  const int w = src.width();
  for (int r = 0; r < src.height(); ++r)
    for (int c = 0; c < w; ++c) out(r, c) = src(r, w - 1 - c);
  return out;
}
RgbImage horizontal_flip(const RgbImage& img);
DepthMap horizontal_flip(const DepthMap& depth);
TargetMap horizontal_flip(const TargetMap& target);

template <typename T>
Grid<T> center_crop(const Grid<T>& src, const CropRect& rect) {
  if (!rect.fits(src.height(), src.width()))
    throw std::out_of_range("center_crop: rectangle outside image bounds");
  Grid<T> out(rect.height, rect.width);
  for (int r = 0; r < rect.height; ++r)
    for (int c = 0; c < rect.width; ++c) out(r, c) = src(rect.top + r, rect.left + c);
  return out;
}
RgbImage center_crop(const RgbImage& img, const CropRect& rect);
DepthMap center_crop(const DepthMap& depth, const CropRect& rect);
TargetMap center_crop(const TargetMap& target, const CropRect& rect);

}  // namespace depthkit
