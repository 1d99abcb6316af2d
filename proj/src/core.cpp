#include "depthkit/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace depthkit {

RgbImage::RgbImage(int height, int width, double fill)
    : planes_{Grid<double>(height, width, fill), Grid<double>(height, width, fill),
              Grid<double>(height, width, fill)} {}

void RgbImage::check_range() const {
  for (const auto& p : planes_)
    for (double v : p.values())
      if (!(v >= 0.0 && v <= 1.0))
        throw std::domain_error("RgbImage: value " + std::to_string(v) + " outside [0,1]");
}

DepthMap DepthMap::from_values(Grid<double> values) {
  DepthMap d;
  d.valid = Mask(values.height(), values.width(), 0);
  auto v = values.values();
  auto m = d.valid.values();
  for (std::size_t i = 0; i < v.size(); ++i) m[i] = v[i] > 0.0 ? 1 : 0;
  d.values = std::move(values);
  return d;
}

std::size_t DepthMap::valid_count() const {
  return static_cast<std::size_t>(std::count_if(valid.values().begin(), valid.values().end(),
                                                [](std::uint8_t m) { return m != 0; }));
}

DepthMap clip_depth(const DepthMap& depth, double d_min, double d_max) {
  if (!(d_min > 0.0)) throw std::invalid_argument("clip_depth: d_min must be positive");
  if (!(d_max > d_min)) throw std::invalid_argument("clip_depth: d_max must exceed d_min");
  DepthMap out = depth;
  auto v = out.values.values();
  auto m = out.valid.values();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (m[i]) v[i] = std::clamp(v[i], d_min, d_max);
  return out;
}

TargetMap reciprocal_transform(const DepthMap& depth, double max_depth_m) {
  if (!(max_depth_m > 0.0))
    throw std::invalid_argument("reciprocal_transform: max depth must be positive");
  TargetMap t;
  t.max_depth_m = max_depth_m;
  t.valid = depth.valid;
  t.values = Grid<double>(depth.height(), depth.width(), 0.0);
  auto src = depth.values.values();
  auto dst = t.values.values();
  auto m = depth.valid.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!m[i]) continue;
    if (!(src[i] > 0.0))
      throw std::domain_error("reciprocal_transform: non-positive depth on a valid pixel");
    dst[i] = max_depth_m / src[i];
  }
  return t;
}

DepthMap inverse_reciprocal_transform(const TargetMap& target) {
  DepthMap d;
  d.valid = target.valid;
  d.values = Grid<double>(target.height(), target.width(), 0.0);
  auto src = target.values.values();
  auto dst = d.values.values();
  auto m = target.valid.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!m[i]) continue;
    if (!(src[i] > 0.0))
      throw std::domain_error("inverse_reciprocal_transform: non-positive target value");
    dst[i] = target.max_depth_m / src[i];
  }
  return d;
}

namespace {

struct Tap {
  int lo;
  int hi;
  double frac;  // weight of hi
};

std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in - 1);
    taps[static_cast<std::size_t>(i)] = {lo, hi, src - lo};
  }
  return taps;
}

int nearest_index(int i, int in, int out) {
  const double src = (i + 0.5) * static_cast<double>(in) / out;
  return std::clamp(static_cast<int>(std::floor(src)), 0, in - 1);
}

void check_resize(int h, int w) {
  if (h < 1 || w < 1) throw std::invalid_argument("resize: target dimensions must be >= 1");
}

}  // namespace

Grid<double> resize_bilinear(const Grid<double>& src, int new_height, int new_width) {
  check_resize(new_height, new_width);
  if (src.empty()) throw std::invalid_argument("resize: empty source");
  const auto ty = bilinear_taps(src.height(), new_height);
  const auto tx = bilinear_taps(src.width(), new_width);
  Grid<double> out(new_height, new_width);
  for (int r = 0; r < new_height; ++r) {
    const Tap& y = ty[static_cast<std::size_t>(r)];
    for (int c = 0; c < new_width; ++c) {
      const Tap& x = tx[static_cast<std::size_t>(c)];
      const double top = src(y.lo, x.lo) * (1.0 - x.frac) + src(y.lo, x.hi) * x.frac;
      const double bot = src(y.hi, x.lo) * (1.0 - x.frac) + src(y.hi, x.hi) * x.frac;
      out(r, c) = top * (1.0 - y.frac) + bot * y.frac;
    }
  }
  return out;
}

RgbImage resize_bilinear(const RgbImage& img, int new_height, int new_width) {
  RgbImage out(new_height, new_width);
  for (int k = 0; k < RgbImage::kChannels; ++k)
    out.plane(k) = resize_bilinear(img.plane(k), new_height, new_width);
  return out;
}

DepthMap resize_bilinear(const DepthMap& depth, int new_height, int new_width) {
  DepthMap out;
  out.values = resize_bilinear(depth.values, new_height, new_width);
  out.valid = resize_nearest(depth.valid, new_height, new_width);
  return out;
}

TargetMap resize_bilinear(const TargetMap& target, int new_height, int new_width) {
  TargetMap out;
  out.max_depth_m = target.max_depth_m;
  out.values = resize_bilinear(target.values, new_height, new_width);
  out.valid = resize_nearest(target.valid, new_height, new_width);
  return out;
}

template <typename T>
Grid<T> resize_nearest(const Grid<T>& src, int new_height, int new_width) {
  check_resize(new_height, new_width);
  Grid<T> out(new_height, new_width);
  for (int r = 0; r < new_height; ++r) {
    const int sr = nearest_index(r, src.height(), new_height);
    for (int c = 0; c < new_width; ++c)
      out(r, c) = src(sr, nearest_index(c, src.width(), new_width));
  }
  return out;
}
template Grid<double> resize_nearest(const Grid<double>&, int, int);
template Grid<std::uint8_t> resize_nearest(const Grid<std::uint8_t>&, int, int);

DepthMap resize_nearest(const DepthMap& depth, int new_height, int new_width) {
  DepthMap out;
  out.values = resize_nearest(depth.values, new_height, new_width);
  out.valid = resize_nearest(depth.valid, new_height, new_width);
  return out;
}

RgbImage horizontal_flip(const RgbImage& img) {
  RgbImage out(img.height(), img.width());
  for (int k = 0; k < RgbImage::kChannels; ++k) out.plane(k) = horizontal_flip(img.plane(k));
  return out;
}

DepthMap horizontal_flip(const DepthMap& depth) {
  DepthMap out;
  out.values = horizontal_flip(depth.values);
  out.valid = horizontal_flip(depth.valid);
  return out;
}

TargetMap horizontal_flip(const TargetMap& target) {
  TargetMap out;
  out.max_depth_m = target.max_depth_m;
  out.values = horizontal_flip(target.values);
  out.valid = horizontal_flip(target.valid);
  return out;
}

RgbImage center_crop(const RgbImage& img, const CropRect& rect) {
  if (!rect.fits(img.height(), img.width()))
    throw std::out_of_range("center_crop: rectangle outside image bounds");
  RgbImage out(rect.height, rect.width);
  for (int k = 0; k < RgbImage::kChannels; ++k) out.plane(k) = center_crop(img.plane(k), rect);
  return out;
}

DepthMap center_crop(const DepthMap& depth, const CropRect& rect) {
  DepthMap out;
  out.values = center_crop(depth.values, rect);
  out.valid = center_crop(depth.valid, rect);
  return out;
}

TargetMap center_crop(const TargetMap& target, const CropRect& rect) {
  TargetMap out;
  out.max_depth_m = target.max_depth_m;
  out.values = center_crop(target.values, rect);
  out.valid = center_crop(target.valid, rect);
  return out;
}

}  // namespace depthkit
