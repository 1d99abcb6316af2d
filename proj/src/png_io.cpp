#include "depthkit/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>

namespace depthkit {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

// libpng reports errors through longjmp. The helpers below keep only trivially
// destructible locals between setjmp and the libpng calls.

bool decode(std::FILE* fp, png_structp png, png_infop info, PngImage& out,
            std::vector<png_bytep>& rows, std::vector<png_byte>& buffer) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, fp);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  out.bit_depth = depth;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * static_cast<std::size_t>(out.height));
  rows.resize(static_cast<std::size_t>(out.height));
  for (int r = 0; r < out.height; ++r) rows[static_cast<std::size_t>(r)] = buffer.data() + rowbytes * r;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return true;
}

bool encode(std::FILE* fp, png_structp png, png_infop info, const PngImage& img,
            std::vector<png_bytep>& rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, fp);
  int color = PNG_COLOR_TYPE_GRAY;
  if (img.channels == 3) color = PNG_COLOR_TYPE_RGB;
  if (img.channels == 4) color = PNG_COLOR_TYPE_RGBA;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
               img.bit_depth, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (img.bit_depth == 16) png_set_swap(png);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  return true;
}

}  // namespace

PngImage read_png(const std::filesystem::path& path) {
  FilePtr fp = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw std::runtime_error("not a PNG file: " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  png_set_sig_bytes(png, 8);
  PngImage out;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  const bool ok = decode(fp.get(), png, info, out, rows, buffer);
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw std::runtime_error("corrupt PNG: " + path.string());

  const std::size_t n = static_cast<std::size_t>(out.height) * out.width * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i)
      out.samples[i] = static_cast<std::uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8));
  } else {
    std::copy(buffer.begin(), buffer.begin() + static_cast<std::ptrdiff_t>(n), out.samples.begin());
  }
  return out;
}

void write_png(const std::filesystem::path& path, const PngImage& img) {
  if (img.bit_depth != 8 && img.bit_depth != 16)
    throw std::invalid_argument("write_png: bit depth must be 8 or 16");
  if (img.channels != 1 && img.channels != 3 && img.channels != 4)
    throw std::invalid_argument("write_png: unsupported channel count");
  const std::size_t per_row = static_cast<std::size_t>(img.width) * img.channels;
  if (img.samples.size() != per_row * static_cast<std::size_t>(img.height))
    throw std::invalid_argument("write_png: sample count does not match dimensions");

  const std::size_t bytes = img.bit_depth / 8;
  std::vector<png_byte> buffer(img.samples.size() * bytes);
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    if (bytes == 2) {
      buffer[2 * i] = static_cast<png_byte>(img.samples[i] & 0xff);
      buffer[2 * i + 1] = static_cast<png_byte>(img.samples[i] >> 8);
    } else {
      buffer[i] = static_cast<png_byte>(std::min<std::uint16_t>(img.samples[i], 255));
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int r = 0; r < img.height; ++r)
    rows[static_cast<std::size_t>(r)] = buffer.data() + per_row * bytes * r;

  FilePtr fp = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  const bool ok = encode(fp.get(), png, info, img, rows);
  png_destroy_write_struct(&png, &info);
  if (!ok) throw std::runtime_error("failed to write PNG: " + path.string());
}

RgbImage read_rgb_png(const std::filesystem::path& path) {
  const PngImage raw = read_png(path);
  const double scale = raw.bit_depth == 16 ? 65535.0 : 255.0;
  RgbImage img(raw.height, raw.width);
  const int ch = raw.channels;
  for (int r = 0; r < raw.height; ++r)
    for (int c = 0; c < raw.width; ++c) {
      const std::size_t base = (static_cast<std::size_t>(r) * raw.width + c) * ch;
      for (int k = 0; k < 3; ++k) {
        const int src = ch >= 3 ? k : 0;
        img.at(k, r, c) = raw.samples[base + static_cast<std::size_t>(src)] / scale;
      }
    }
  return img;
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& img, int bit_depth) {
  PngImage raw;
  raw.height = img.height();
  raw.width = img.width();
  raw.channels = 3;
  raw.bit_depth = bit_depth;
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  raw.samples.resize(static_cast<std::size_t>(raw.height) * raw.width * 3);
  std::size_t i = 0;
  for (int r = 0; r < raw.height; ++r)
    for (int c = 0; c < raw.width; ++c)
      for (int k = 0; k < 3; ++k)
        raw.samples[i++] =
            static_cast<std::uint16_t>(std::lround(std::clamp(img.at(k, r, c), 0.0, 1.0) * scale));
  write_png(path, raw);
}

DepthMap read_depth_png(const std::filesystem::path& path, double scale) {
  const PngImage raw = read_png(path);
  if (raw.channels != 1) throw std::runtime_error("depth PNG must be single-channel: " + path.string());
  DepthMap d(raw.height, raw.width);
  for (int r = 0; r < raw.height; ++r)
    for (int c = 0; c < raw.width; ++c) {
      const std::uint16_t v = raw.samples[static_cast<std::size_t>(r) * raw.width + c];
      d.values(r, c) = v * scale;
      d.valid(r, c) = v != 0 ? 1 : 0;
    }
  return d;
}

void write_depth_png(const std::filesystem::path& path, const DepthMap& depth, double scale) {
  PngImage raw;
  raw.height = depth.height();
  raw.width = depth.width();
  raw.channels = 1;
  raw.bit_depth = 16;
  raw.samples.resize(static_cast<std::size_t>(raw.height) * raw.width);
  for (int r = 0; r < raw.height; ++r)
    for (int c = 0; c < raw.width; ++c) {
      std::uint16_t v = 0;
      if (depth.is_valid(r, c)) {
        const double q = std::round(depth.values(r, c) / scale);
        v = static_cast<std::uint16_t>(std::clamp(q, 1.0, 65535.0));
      }
      raw.samples[static_cast<std::size_t>(r) * raw.width + c] = v;
    }
  write_png(path, raw);
}

}  // namespace depthkit
