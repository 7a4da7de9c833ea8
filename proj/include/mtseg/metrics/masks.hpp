#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mtseg/core/tensor.hpp"
#include "mtseg/geometry/resize.hpp"

namespace mtseg {

/// H x W boolean grid; distances over it are reported in pixels.
struct BinaryMask {
  int height = 0, width = 0;
  std::vector<uint8_t> v;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), v(static_cast<size_t>(h) * w, 0) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("BinaryMask: empty grid");
  }

  uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * width + x]; }
  uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * width + x]; }

  size_t count() const {
    size_t n = 0;
    for (uint8_t b : v) n += b != 0;
    return n;
  }

  bool same_shape(const BinaryMask& o) const {
    return height == o.height && width == o.width;
  }
};

/// Fills background components not 4-connected to the grid border.
inline BinaryMask fill_holes(const BinaryMask& mask) {
  const int H = mask.height, W = mask.width;
  std::vector<uint8_t> outside(static_cast<size_t>(H) * W, 0);
  std::vector<int> stack;
  auto push = [&](int y, int x) {
    const size_t i = static_cast<size_t>(y) * W + x;
    if (!mask.v[i] && !outside[i]) {
      outside[i] = 1;
      stack.push_back(y * W + x);
    }
  };
  for (int x = 0; x < W; ++x) { push(0, x); push(H - 1, x); }
  for (int y = 0; y < H; ++y) { push(y, 0); push(y, W - 1); }
  while (!stack.empty()) {
    const int p = stack.back();
    stack.pop_back();
    const int y = p / W, x = p % W;
    if (y > 0) push(y - 1, x);
    if (y < H - 1) push(y + 1, x);
    if (x > 0) push(y, x - 1);
    if (x < W - 1) push(y, x + 1);
  }
  BinaryMask out(H, W);
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = mask.v[i] || !outside[i] ? 1 : 0;
  return out;
}

/// Resamples the foreground probability to target size (bilinear), thresholds
/// at 0.5 and fills holes. `pred` is a (1, h, w, 2) probability map with
/// channel 1 = foreground.
template <typename T>
BinaryMask postprocess(const Tensor<T>& pred, int target_width, int target_height) {
  if (pred.n() != 1 || pred.c() != 2)
    throw std::invalid_argument("postprocess: expected (1,H,W,2) map, got " +
                                pred.shape_str());
  Tensor<T> fg(1, pred.h(), pred.w(), 1);
  for (int y = 0; y < pred.h(); ++y)
    for (int x = 0; x < pred.w(); ++x)
      fg.at(0, y, x, 0) = pred.at(0, y, x, 1);
  const Tensor<T> big = resize_bilinear(fg, target_height, target_width);
  BinaryMask mask(target_height, target_width);
  for (int y = 0; y < target_height; ++y)
    for (int x = 0; x < target_width; ++x)
      mask.at(y, x) = static_cast<double>(big.at(0, y, x, 0)) > 0.5 ? 1 : 0;
  return fill_holes(mask);
}

/// 2|A and B| / (|A| + |B|); 1.0 when both masks are empty.
inline double dice_score(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_shape(gt))
    throw std::invalid_argument("dice_score: shape mismatch");
  size_t a = 0, b = 0, inter = 0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    a += pred.v[i] != 0;
    b += gt.v[i] != 0;
    inter += pred.v[i] && gt.v[i];
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

namespace detail {

struct PixelXY { int x, y; };

/// Foreground pixels with at least one background 4-neighbour, or lying on
/// the grid border.
inline std::vector<PixelXY> boundary_pixels(const BinaryMask& m) {
  std::vector<PixelXY> out;
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      const bool border = y == 0 || y == m.height - 1 || x == 0 || x == m.width - 1;
      const bool exposed = border || !m.at(y - 1, x) || !m.at(y + 1, x) ||
                           !m.at(y, x - 1) || !m.at(y, x + 1);
      if (exposed) out.push_back({x, y});
    }
  return out;
}

/// Nearest-rank percentile of the directed nearest-boundary distances from A
/// to B. Squared distances stay integral, so results match an all-pairs
/// oracle bit for bit.
inline double directed_percentile(const std::vector<PixelXY>& a,
                                  const std::vector<PixelXY>& b, double pct) {
  std::vector<int64_t> d2(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    int64_t best = INT64_MAX;
    for (const auto& q : b) {
      const int64_t dx = a[i].x - q.x, dy = a[i].y - q.y;
      best = std::min(best, dx * dx + dy * dy);
      if (best == 0) break;
    }
    d2[i] = best;
  }
  const size_t rank = static_cast<size_t>(
      std::ceil(pct * static_cast<double>(d2.size())));
  const size_t idx = std::max<size_t>(rank, 1) - 1;
  std::nth_element(d2.begin(), d2.begin() + idx, d2.end());
  return std::sqrt(static_cast<double>(d2[idx]));
}

}  // namespace detail

/// 95th-percentile Hausdorff distance between mask boundaries: the max over
/// both directions of the nearest-rank 95th percentile of Euclidean
/// nearest-boundary distances. Undefined when either mask is empty.
inline std::optional<double> hausdorff95(const BinaryMask& pred, const BinaryMask& gt) {
  if (!pred.same_shape(gt))
    throw std::invalid_argument("hausdorff95: shape mismatch");
  const auto a = detail::boundary_pixels(pred);
  const auto b = detail::boundary_pixels(gt);
  if (a.empty() || b.empty()) return std::nullopt;
  return std::max(detail::directed_percentile(a, b, 0.95),
                  detail::directed_percentile(b, a, 0.95));
}

/// Per-frame evaluation record; hd95 is absent when either mask was empty.
struct MetricRecord {
  std::string frame;  // group-qualified frame id
  int fold = 0;
  double dice = 0;
  std::optional<double> hd95;
};

}  // namespace mtseg
