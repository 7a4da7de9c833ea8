#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "mtseg/core/rng.hpp"
#include "mtseg/data/dataset.hpp"

namespace mtseg {

struct SynthConfig {
  int groups = 8;
  int frames_per_group = 100;
  int labelled_per_group = 20;
  int height = 64;
  int width = 64;
  // appearance difficulty knobs
  double noise_level = 0.05;        // per-pixel uniform noise amplitude
  double lighting_strength = 0.40;  // max relative gradient across the frame
  int specular_spots = 4;           // bright spots per frame
  int max_distractors = 3;          // organ-coloured background blobs per frame

  void validate() const {
    if (groups < 1 || frames_per_group < 1 || height < 8 || width < 8)
      throw std::invalid_argument("SynthConfig: invalid geometry");
    if (labelled_per_group < 1 || labelled_per_group > frames_per_group)
      throw std::invalid_argument("SynthConfig: labelled_per_group out of range");
    if (max_distractors < 0)
      throw std::invalid_argument("SynthConfig: max_distractors must be >= 0");
  }
};

/// Star-convex blob: radius r(theta) = r0 * (1 + sum_k amp_k cos(k theta + phase_k)),
/// rotated and scaled per frame. The ground-truth mask is this predicate
/// evaluated at pixel centres.
struct BlobShape {
  static constexpr int kHarmonics = 4;
  double cx = 0, cy = 0;
  double r0 = 0;
  double rot = 0;
  double scale = 1;
  double aspect = 1;  // y-radius multiplier
  std::array<double, kHarmonics> amp{};
  std::array<double, kHarmonics> phase{};

  bool inside(double x, double y) const {
    const double dx = x - cx, dy = (y - cy) / aspect;
    const double rho = std::hypot(dx, dy);
    const double theta = std::atan2(dy, dx) - rot;
    double r = 1.0;
    for (int k = 0; k < kHarmonics; ++k)
      r += amp[k] * std::cos((k + 1) * theta + phase[k]);
    return rho <= r0 * scale * r;
  }
};

/// Group-level appearance: shared blob geometry and palette, so frames from
/// one group resemble each other the way one patient's frames do. Distractor
/// blobs sit between the background and organ palettes; telling them from the
/// organ takes shape and texture cues, which is what keeps the task from
/// saturating with a handful of labels.
struct GroupStyle {
  BlobShape base;
  std::array<double, 3> fg_color{}, bg_color{}, distractor_color{};
  double fg_tex_freq = 0, bg_tex_freq = 0;
  double fg_tex_amp = 0, bg_tex_amp = 0;
  double tex_angle = 0;
};

namespace detail {

inline GroupStyle make_group_style(Rng& rng, int height, int width) {
  GroupStyle s;
  const double side = std::min(height, width);
  s.base.r0 = rng.uniform(0.20, 0.30) * side;
  s.base.aspect = rng.uniform(0.75, 1.3);
  for (int k = 0; k < BlobShape::kHarmonics; ++k) {
    s.base.amp[k] = rng.uniform(0.02, 0.11) / (k + 1);
    s.base.phase[k] = rng.uniform(0, 2 * 3.14159265358979323846);
  }
  for (int ch = 0; ch < 3; ++ch) {
    s.fg_color[ch] = rng.uniform(0.42, 0.78);
    s.bg_color[ch] = rng.uniform(0.12, 0.45);
  }
  // keep at least some channel-wise contrast between organ and background
  s.fg_color[0] = std::max(s.fg_color[0], s.bg_color[0] + 0.15);
  const double mix = rng.uniform(0.55, 0.8);
  for (int ch = 0; ch < 3; ++ch)
    s.distractor_color[ch] = s.bg_color[ch] + mix * (s.fg_color[ch] - s.bg_color[ch]);
  s.fg_tex_freq = rng.uniform(1.5, 4.0);
  s.bg_tex_freq = rng.uniform(0.8, 2.5);
  s.fg_tex_amp = rng.uniform(0.02, 0.07);
  s.bg_tex_amp = rng.uniform(0.02, 0.08);
  s.tex_angle = rng.uniform(0, 3.14159265358979323846);
  return s;
}

inline BlobShape make_frame_shape(const GroupStyle& style, Rng& rng, int height,
                                  int width) {
  BlobShape b = style.base;
  b.cx = width * rng.uniform(0.38, 0.62);
  b.cy = height * rng.uniform(0.38, 0.62);
  b.rot = rng.uniform(0, 2 * 3.14159265358979323846);
  b.scale = rng.uniform(0.8, 1.2);
  for (int k = 0; k < BlobShape::kHarmonics; ++k)
    b.amp[k] *= 1.0 + rng.uniform(-0.35, 0.35);
  return b;
}

}  // namespace detail

/// Renders one frame: blob shape over textured background, with a lighting
/// gradient, specular-like bright spots and pixel noise. The mask is exactly
/// the analytic shape rasterised at pixel centres.
template <typename T>
std::pair<Tensor<T>, Tensor<uint8_t>> render_synth_frame(const GroupStyle& style,
                                                         const BlobShape& shape,
                                                         Rng& rng,
                                                         const SynthConfig& cfg) {
  const int H = cfg.height, W = cfg.width;
  Tensor<T> img(1, H, W, 3);
  Tensor<uint8_t> mask(1, H, W, 1);

  const double light_dir = rng.uniform(0, 2 * 3.14159265358979323846);
  const double light_amp = rng.uniform(0.0, cfg.lighting_strength);
  const double lx = std::cos(light_dir), ly = std::sin(light_dir);

  struct Spot { double x, y, r, gain; };
  std::vector<Spot> spots;
  for (int i = 0; i < cfg.specular_spots; ++i)
    spots.push_back({rng.uniform(0, W), rng.uniform(0, H),
                     rng.uniform(1.5, 4.0), rng.uniform(0.15, 0.5)});

  // organ-coloured clutter outside the true mask
  std::vector<BlobShape> distractors;
  const int n_distractors =
      cfg.max_distractors > 0 ? 1 + rng.uniform_int(cfg.max_distractors) : 0;
  for (int i = 0; i < n_distractors; ++i) {
    BlobShape d = shape;
    d.cx = rng.uniform(0.05, 0.95) * W;
    d.cy = rng.uniform(0.05, 0.95) * H;
    d.rot = rng.uniform(0, 2 * 3.14159265358979323846);
    d.scale = shape.scale * rng.uniform(0.25, 0.55);
    d.aspect = rng.uniform(0.7, 1.4);
    distractors.push_back(d);
  }

  const double ca = std::cos(style.tex_angle), sa = std::sin(style.tex_angle);
  const double diag = std::hypot(W, H);
  const double two_pi = 2 * 3.14159265358979323846;

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const bool fg = shape.inside(x, y);
      mask.at(0, y, x, 0) = fg ? 1 : 0;
      bool clutter = false;
      if (!fg)
        for (const auto& d : distractors)
          if (d.inside(x, y)) { clutter = true; break; }
      const double u = (ca * x + sa * y) / W;
      const double v = (-sa * x + ca * y) / H;
      const double tex =
          fg ? style.fg_tex_amp * std::sin(two_pi * style.fg_tex_freq * (u + 0.7 * v))
             : style.bg_tex_amp * std::sin(two_pi * style.bg_tex_freq * (u - 0.5 * v));
      const double light = 1.0 + light_amp * ((lx * x + ly * y) / diag - 0.5);
      double spot_gain = 0;
      for (const auto& s : spots) {
        const double d2 = (x - s.x) * (x - s.x) + (y - s.y) * (y - s.y);
        spot_gain += s.gain * std::exp(-d2 / (2 * s.r * s.r));
      }
      for (int ch = 0; ch < 3; ++ch) {
        const double base = fg ? style.fg_color[ch]
                               : clutter ? style.distractor_color[ch]
                                         : style.bg_color[ch];
        double val = (base + tex) * light + spot_gain +
                     rng.uniform(-cfg.noise_level, cfg.noise_level);
        img.at(0, y, x, ch) = static_cast<T>(std::clamp(val, 0.0, 1.0));
      }
    }
  return {std::move(img), std::move(mask)};
}

/// Generates a grouped dataset of per-group organ-like blobs with exact
/// ground-truth masks. The first labelled_per_group frames of each group
/// carry labels.
template <typename T>
GroupedDataset<T> synth_generate(const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  GroupedDataset<T> ds;
  ds.height = cfg.height;
  ds.width = cfg.width;
  ds.channels = 3;
  const uint64_t root_seed = rng.next_u64();
  for (int g = 0; g < cfg.groups; ++g) {
    Rng grng(hash_combine(root_seed, 1000 + g));
    const GroupStyle style = detail::make_group_style(grng, cfg.height, cfg.width);
    typename GroupedDataset<T>::Group group;
    char gid[16];
    std::snprintf(gid, sizeof(gid), "g%02d", g);
    group.id = gid;
    for (int f = 0; f < cfg.frames_per_group; ++f) {
      Rng frng(hash_combine(hash_combine(root_seed, 1000 + g), f));
      const BlobShape shape = detail::make_frame_shape(style, frng, cfg.height, cfg.width);
      auto [img, mask] = render_synth_frame<T>(style, shape, frng, cfg);
      Frame<T> frame;
      char fid[16];
      std::snprintf(fid, sizeof(fid), "f%04d", f);
      frame.id = fid;
      frame.image = std::move(img);
      if (f < cfg.labelled_per_group) {
        frame.labelled = true;
        frame.mask = std::move(mask);
        ++group.n_labelled;
      }
      group.frames.push_back(static_cast<int>(ds.frames.size()));
      ds.frames.push_back(std::move(frame));
    }
    ds.groups.push_back(std::move(group));
  }
  ds.validate();
  return ds;
}

}  // namespace mtseg
