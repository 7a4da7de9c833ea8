#pragma once

#include <cmath>

#include "mtseg/core/rng.hpp"
#include "mtseg/core/tensor.hpp"
#include "mtseg/geometry/resize.hpp"

namespace mtseg {

/// Raw laparoscopic frame geometry: 1920x540 with black side borders that are
/// cropped to 1660x540 before resampling down to 128x384.
struct FrameGeometry {
  static constexpr int raw_width = 1920;
  static constexpr int raw_height = 540;
  static constexpr int border = 130;  // (1920 - 1660) / 2, symmetric
  static constexpr int cropped_width = 1660;
  static constexpr int net_width = 384;
  static constexpr int net_height = 128;
};

/// Crops the symmetric side borders and resamples to the network input size.
/// Input intensities are expected in [0,1] (PNG loads provide that); output
/// is clamped into [0,1].
template <typename T>
Tensor<T> preprocess_frame(const Tensor<T>& raw) {
  if (raw.h() != FrameGeometry::raw_height || raw.w() != FrameGeometry::raw_width)
    throw std::invalid_argument("preprocess_frame: expected 1920x540 input, got " +
                                raw.shape_str());
  Tensor<T> cropped(raw.n(), raw.h(), FrameGeometry::cropped_width, raw.c());
  for (int in = 0; in < raw.n(); ++in)
    for (int y = 0; y < raw.h(); ++y)
      for (int x = 0; x < FrameGeometry::cropped_width; ++x)
        for (int ch = 0; ch < raw.c(); ++ch)
          cropped.at(in, y, x, ch) = raw.at(in, y, x + FrameGeometry::border, ch);
  Tensor<T> out =
      resize_bilinear(cropped, FrameGeometry::net_height, FrameGeometry::net_width);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(std::clamp(static_cast<double>(out[i]), 0.0, 1.0));
  return out;
}

struct AugmentConfig {
  double contrast_min = 0.8;   // per-channel multiplicative scale
  double contrast_max = 1.2;
  double brightness = 0.1;     // per-channel additive offset in [-b, b]

  void validate() const {
    if (!(contrast_min <= 1.0 && 1.0 <= contrast_max) || contrast_min <= 0)
      throw std::invalid_argument("AugmentConfig: contrast range must contain 1");
    if (brightness < 0)
      throw std::invalid_argument("AugmentConfig: brightness must be >= 0");
  }

  static AugmentConfig none() { return {1.0, 1.0, 0.0}; }
};

/// Per-image standardisation to zero mean, unit variance (all channels
/// pooled). Constant images map to zero via the guarded denominator.
template <typename T>
void standardize_item(Tensor<T>& batch, int item) {
  const int H = batch.h(), W = batch.w(), C = batch.c();
  const size_t count = static_cast<size_t>(H) * W * C;
  T* base = batch.data() + batch.idx(item, 0, 0, 0);
  double mean = 0;
  for (size_t i = 0; i < count; ++i) mean += base[i];
  mean /= static_cast<double>(count);
  double var = 0;
  for (size_t i = 0; i < count; ++i) {
    const double d = base[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(count);
  const double inv = 1.0 / std::max(std::sqrt(var), 1e-6);
  for (size_t i = 0; i < count; ++i)
    base[i] = static_cast<T>((base[i] - mean) * inv);
}

/// Photometric augmentation: random per-channel contrast scale and brightness
/// offset, then per-image standardisation. Draw order is channel-major
/// (scale then offset per channel) so a seed pins the result.
template <typename T>
Tensor<T> augment(const Tensor<T>& img, Rng& rng, const AugmentConfig& cfg = {}) {
  cfg.validate();
  Tensor<T> out = img;
  const int C = img.c();
  for (int in = 0; in < img.n(); ++in) {
    std::vector<double> scale(C), offset(C);
    for (int ch = 0; ch < C; ++ch) {
      scale[ch] = rng.uniform(cfg.contrast_min, cfg.contrast_max);
      offset[ch] = rng.uniform(-cfg.brightness, cfg.brightness);
    }
    for (int y = 0; y < img.h(); ++y)
      for (int x = 0; x < img.w(); ++x) {
        T* p = out.pixel(in, y, x);
        for (int ch = 0; ch < C; ++ch)
          p[ch] = static_cast<T>(p[ch] * scale[ch] + offset[ch]);
      }
    standardize_item(out, in);
  }
  return out;
}

}  // namespace mtseg
