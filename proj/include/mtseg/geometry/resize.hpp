#pragma once

#include <cmath>

#include "mtseg/core/tensor.hpp"

namespace mtseg {

/// Bilinear resampling to (out_h, out_w) with half-pixel centres and edge
/// clamping, applied per item and channel.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& img, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0)
    throw std::invalid_argument("resize_bilinear: output size must be positive");
  const int N = img.n(), H = img.h(), W = img.w(), C = img.c();
  if (H == 0 || W == 0) throw std::invalid_argument("resize_bilinear: empty input");
  Tensor<T> out(N, out_h, out_w, C);
  const double sy = static_cast<double>(H) / out_h;
  const double sx = static_cast<double>(W) / out_w;
  for (int in = 0; in < N; ++in)
    for (int y = 0; y < out_h; ++y) {
      const double fy = (y + 0.5) * sy - 0.5;
      int y0 = static_cast<int>(std::floor(fy));
      const double wy = fy - y0;
      const int y0c = std::clamp(y0, 0, H - 1);
      const int y1c = std::clamp(y0 + 1, 0, H - 1);
      for (int x = 0; x < out_w; ++x) {
        const double fx = (x + 0.5) * sx - 0.5;
        int x0 = static_cast<int>(std::floor(fx));
        const double wx = fx - x0;
        const int x0c = std::clamp(x0, 0, W - 1);
        const int x1c = std::clamp(x0 + 1, 0, W - 1);
        for (int ch = 0; ch < C; ++ch) {
          const double v =
              (1 - wy) * ((1 - wx) * img.at(in, y0c, x0c, ch) +
                          wx * img.at(in, y0c, x1c, ch)) +
              wy * ((1 - wx) * img.at(in, y1c, x0c, ch) +
                    wx * img.at(in, y1c, x1c, ch));
          out.at(in, y, x, ch) = static_cast<T>(v);
        }
      }
    }
  return out;
}

}  // namespace mtseg
