#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "mtseg/core/parallel.hpp"
#include "mtseg/core/rng.hpp"
#include "mtseg/core/tensor.hpp"

namespace mtseg {

/// 2x3 affine matrix in pixel units, mapping homogeneous *output* coordinates
/// to *input* coordinates (inverse warping). Row-major [a b tx; c d ty].
struct AffineTransform {
  std::array<double, 6> m{1, 0, 0, 0, 1, 0};

  static AffineTransform identity() { return AffineTransform{}; }

  static AffineTransform translation(double dx, double dy) {
    return AffineTransform{{1, 0, dx, 0, 1, dy}};
  }

  double det() const { return m[0] * m[4] - m[1] * m[3]; }

  bool valid() const {
    for (double v : m)
      if (!std::isfinite(v)) return false;
    return std::abs(det()) > 1e-12;
  }

  /// Maps an output pixel coordinate (x, y) to its source coordinate.
  void apply(double x, double y, double& sx, double& sy) const {
    sx = m[0] * x + m[1] * y + m[2];
    sy = m[3] * x + m[4] * y + m[5];
  }
};

/// Symmetric sampling ranges for the random affine noise. Identity parameters
/// (0 deg, scale 1, 0 shear, 0 translation) are always contained.
struct AffineNoiseConfig {
  double rotation_deg = 15.0;      // rotation drawn from [-r, r] degrees
  double scale_min = 0.9;          // isotropic scale drawn from [min, max]
  double scale_max = 1.1;
  double shear_deg = 5.0;          // x-shear drawn from [-s, s] degrees
  double translation_frac = 0.10;  // per-axis shift, fraction of that side
  double fill_value = 0.0;         // intensity for out-of-bounds samples

  void validate() const {
    if (rotation_deg < 0 || shear_deg < 0 || translation_frac < 0)
      throw std::invalid_argument("AffineNoiseConfig: ranges must be nonnegative");
    if (!(scale_min <= 1.0 && 1.0 <= scale_max) || scale_min <= 0)
      throw std::invalid_argument("AffineNoiseConfig: scale range must contain 1");
    if (!std::isfinite(fill_value))
      throw std::invalid_argument("AffineNoiseConfig: fill_value must be finite");
  }
};

/// Draws a random transform acting about the image centre. The linear part is
/// built as rotation * shear * scale; draw order is fixed (rotation, scale,
/// shear, tx, ty) so a seed pins the matrix.
inline AffineTransform sample_affine(Rng& rng, const AffineNoiseConfig& cfg,
                                     int width, int height) {
  cfg.validate();
  if (width <= 0 || height <= 0)
    throw std::invalid_argument("sample_affine: image size must be positive");
  const double deg = 3.14159265358979323846 / 180.0;
  const double rot = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg) * deg;
  const double scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  const double shear = rng.uniform(-cfg.shear_deg, cfg.shear_deg) * deg;
  const double tx = rng.uniform(-cfg.translation_frac, cfg.translation_frac) * width;
  const double ty = rng.uniform(-cfg.translation_frac, cfg.translation_frac) * height;

  const double cs = std::cos(rot), sn = std::sin(rot), th = std::tan(shear);
  // R * Sh * (s I)
  const double a = scale * cs;
  const double b = scale * (cs * th - sn);
  const double c = scale * sn;
  const double d = scale * (sn * th + cs);

  const double cx = (width - 1) * 0.5, cy = (height - 1) * 0.5;
  AffineTransform t;
  t.m = {a, b, cx + tx - (a * cx + b * cy),
         c, d, cy + ty - (c * cx + d * cy)};
  return t;
}

/// Transform equivalent to warping by `inner` first, then by `outer`.
/// Matrices map output to input coordinates, so the pulled-back coordinate
/// flows x -> outer(x) -> inner(outer(x)): the composite matrix is
/// inner * outer in homogeneous form.
inline AffineTransform compose(const AffineTransform& outer,
                               const AffineTransform& inner) {
  if (!outer.valid() || !inner.valid())
    throw std::invalid_argument("compose: invalid transform");
  const auto& p = inner.m;
  const auto& q = outer.m;
  AffineTransform r;
  r.m = {p[0] * q[0] + p[1] * q[3], p[0] * q[1] + p[1] * q[4],
         p[0] * q[2] + p[1] * q[5] + p[2],
         p[3] * q[0] + p[4] * q[3], p[3] * q[1] + p[4] * q[4],
         p[3] * q[2] + p[4] * q[5] + p[5]};
  return r;
}

enum class WarpMode { bilinear, nearest };

/// Inverse-warps an NHWC batch. Out-of-bounds source samples take `fill`;
/// bilinear corners falling outside contribute `fill` with their weight.
template <typename T>
Tensor<T> warp_image(const Tensor<T>& img, const AffineTransform& t,
                     WarpMode mode, double fill) {
  if (!img.all_finite())
    throw std::invalid_argument("warp_image: non-finite input");
  if (!t.valid())
    throw std::invalid_argument("warp_image: non-invertible transform");
  const int N = img.n(), H = img.h(), W = img.w(), C = img.c();
  Tensor<T> out(N, H, W, C);
  parallel_for(0, N * H, [&](int nh) {
    const int in = nh / H, y = nh % H;
    for (int x = 0; x < W; ++x) {
      double sx, sy;
      t.apply(x, y, sx, sy);
      T* o = out.pixel(in, y, x);
      if (mode == WarpMode::nearest) {
        const long xi = std::lround(sx), yi = std::lround(sy);
        if (xi < 0 || xi >= W || yi < 0 || yi >= H) {
          for (int ch = 0; ch < C; ++ch) o[ch] = static_cast<T>(fill);
        } else {
          const T* s = img.pixel(in, static_cast<int>(yi), static_cast<int>(xi));
          for (int ch = 0; ch < C; ++ch) o[ch] = s[ch];
        }
      } else {
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const double fx = sx - x0, fy = sy - y0;
        const double w00 = (1 - fx) * (1 - fy), w01 = fx * (1 - fy);
        const double w10 = (1 - fx) * fy, w11 = fx * fy;
        for (int ch = 0; ch < C; ++ch) {
          auto sample = [&](int yy, int xx) -> double {
            if (xx < 0 || xx >= W || yy < 0 || yy >= H) return fill;
            return static_cast<double>(img.at(in, yy, xx, ch));
          };
          o[ch] = static_cast<T>(w00 * sample(y0, x0) + w01 * sample(y0, x0 + 1) +
                                 w10 * sample(y0 + 1, x0) + w11 * sample(y0 + 1, x0 + 1));
        }
      }
    }
  });
  return out;
}

/// Hard masks always use nearest-neighbour with background fill.
inline Tensor<uint8_t> warp_mask(const Tensor<uint8_t>& mask,
                                 const AffineTransform& t) {
  if (!t.valid())
    throw std::invalid_argument("warp_mask: non-invertible transform");
  const int N = mask.n(), H = mask.h(), W = mask.w(), C = mask.c();
  Tensor<uint8_t> out(N, H, W, C);
  parallel_for(0, N * H, [&](int nh) {
    const int in = nh / H, y = nh % H;
    for (int x = 0; x < W; ++x) {
      double sx, sy;
      t.apply(x, y, sx, sy);
      const long xi = std::lround(sx), yi = std::lround(sy);
      uint8_t* o = out.pixel(in, y, x);
      if (xi < 0 || xi >= W || yi < 0 || yi >= H) {
        for (int ch = 0; ch < C; ++ch) o[ch] = 0;
      } else {
        const uint8_t* s = mask.pixel(in, static_cast<int>(yi), static_cast<int>(xi));
        for (int ch = 0; ch < C; ++ch) o[ch] = s[ch];
      }
    }
  });
  return out;
}

/// Per-channel fill for warped probability maps: out-of-bounds regions are
/// background-certain. Channel 0 is background, channel 1 foreground.
inline double probmap_fill(int channel) { return channel == 0 ? 1.0 : 0.0; }

/// Warps a soft two-class map with bilinear interpolation per channel and
/// renormalises so per-pixel class sums stay at 1.
template <typename T>
Tensor<T> warp_probmap(const Tensor<T>& p, const AffineTransform& t) {
  if (!t.valid())
    throw std::invalid_argument("warp_probmap: non-invertible transform");
  const int N = p.n(), H = p.h(), W = p.w(), C = p.c();
  Tensor<T> out(N, H, W, C);
  parallel_for(0, N * H, [&](int nh) {
    const int in = nh / H, y = nh % H;
    for (int x = 0; x < W; ++x) {
      double sx, sy;
      t.apply(x, y, sx, sy);
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      const double wgt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy),
                             (1 - fx) * fy, fx * fy};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      T* o = out.pixel(in, y, x);
      double sum = 0;
      for (int ch = 0; ch < C; ++ch) {
        double v = 0;
        for (int k = 0; k < 4; ++k) {
          const bool inb = xs[k] >= 0 && xs[k] < W && ys[k] >= 0 && ys[k] < H;
          v += wgt[k] * (inb ? static_cast<double>(p.at(in, ys[k], xs[k], ch))
                             : probmap_fill(ch));
        }
        o[ch] = static_cast<T>(v);
        sum += v;
      }
      if (sum > 1e-12) {
        for (int ch = 0; ch < C; ++ch)
          o[ch] = static_cast<T>(static_cast<double>(o[ch]) / sum);
      }
    }
  });
  return out;
}

}  // namespace mtseg
