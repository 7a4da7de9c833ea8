#pragma once

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtseg/core/tensor.hpp"

namespace mtseg {

/// Reads an 8-bit PNG into (1, H, W, C) with C = 1 (grayscale) or 3 (RGB).
/// 16-bit depth, palettes and alpha are folded down on load.
inline Tensor<uint8_t> read_png(const std::string& path) {
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw std::runtime_error("read_png: cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("read_png: png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("read_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: failed to decode " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_png: unsupported channel count in " + path);
  }

  Tensor<uint8_t> img(1, static_cast<int>(height), static_cast<int>(width), channels);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 y = 0; y < height; ++y)
    rows[y] = img.data() + static_cast<size_t>(y) * width * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

/// Writes (1, H, W, 1|3) as an 8-bit grayscale or RGB PNG.
inline void write_png(const std::string& path, const Tensor<uint8_t>& img) {
  if (img.n() != 1 || (img.c() != 1 && img.c() != 3))
    throw std::invalid_argument("write_png: expected (1,H,W,1|3), got " + img.shape_str());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("write_png: cannot open " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("write_png: png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("write_png: png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: failed to encode " + path);
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.w(), img.h(), 8,
               img.c() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.h());
  for (int y = 0; y < img.h(); ++y)
    rows[y] = const_cast<png_bytep>(img.data()) +
              static_cast<size_t>(y) * img.w() * img.c();
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

template <typename T>
Tensor<T> to_unit_range(const Tensor<uint8_t>& img) {
  Tensor<T> out(img.n(), img.h(), img.w(), img.c());
  for (size_t i = 0; i < img.size(); ++i)
    out[i] = static_cast<T>(img[i] / 255.0);
  return out;
}

template <typename T>
Tensor<uint8_t> to_bytes(const Tensor<T>& img) {
  Tensor<uint8_t> out(img.n(), img.h(), img.w(), img.c());
  for (size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(static_cast<double>(img[i]), 0.0, 1.0);
    out[i] = static_cast<uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

}  // namespace mtseg
