#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtseg/core/tensor.hpp"

namespace mtseg {

/// Smoothed soft Dice options. `squared` selects the squared-denominator form
/// (sum p^2 + sum t^2); the linear form uses plain sums.
struct DiceConfig {
  double eps = 1e-5;
  bool squared = true;
};

namespace detail {

/// Per-item, per-class Dice reduction sums. Accumulation in double regardless
/// of storage type.
template <typename T>
struct DiceSums {
  std::vector<double> num, pden, tden;  // [N*C]
};

template <typename T>
DiceSums<T> dice_sums(const Tensor<T>& pred, const Tensor<T>& target,
                      const DiceConfig& cfg) {
  if (!pred.same_shape(target))
    throw std::invalid_argument("soft_dice: shape mismatch " + pred.shape_str() +
                                " vs " + target.shape_str());
  if (pred.n() == 0 || pred.c() == 0)
    throw std::invalid_argument("soft_dice: empty input");
  const int N = pred.n(), H = pred.h(), W = pred.w(), C = pred.c();
  DiceSums<T> s;
  s.num.assign(static_cast<size_t>(N) * C, 0.0);
  s.pden.assign(static_cast<size_t>(N) * C, 0.0);
  s.tden.assign(static_cast<size_t>(N) * C, 0.0);
  for (int in = 0; in < N; ++in) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const T* p = pred.pixel(in, y, x);
        const T* t = target.pixel(in, y, x);
        for (int ch = 0; ch < C; ++ch) {
          const double pv = p[ch], tv = t[ch];
          const size_t k = static_cast<size_t>(in) * C + ch;
          s.num[k] += pv * tv;
          s.pden[k] += cfg.squared ? pv * pv : pv;
          s.tden[k] += cfg.squared ? tv * tv : tv;
        }
      }
    }
  }
  return s;
}

}  // namespace detail

/// Soft Dice loss over a batch: 1 - mean over classes of
/// (2*sum(p*t)+eps) / (den(p)+den(t)+eps), computed per item and averaged
/// over items with weight > 0. Unit weights when `weights` is empty.
template <typename T>
double soft_dice_loss(const Tensor<T>& pred, const Tensor<T>& target,
                      const DiceConfig& cfg = {},
                      const std::vector<double>& weights = {}) {
  const auto s = detail::dice_sums(pred, target, cfg);
  const int N = pred.n(), C = pred.c();
  if (!weights.empty() && static_cast<int>(weights.size()) != N)
    throw std::invalid_argument("soft_dice_loss: weight count != batch size");
  double wsum = 0, loss = 0;
  for (int in = 0; in < N; ++in) {
    const double w = weights.empty() ? 1.0 : weights[in];
    if (w <= 0) continue;
    double dice = 0;
    for (int ch = 0; ch < C; ++ch) {
      const size_t k = static_cast<size_t>(in) * C + ch;
      dice += (2.0 * s.num[k] + cfg.eps) / (s.pden[k] + s.tden[k] + cfg.eps);
    }
    loss += w * (1.0 - dice / C);
    wsum += w;
  }
  if (wsum <= 0) throw std::invalid_argument("soft_dice_loss: no weighted items");
  return loss / wsum;
}

/// Analytic gradient of soft_dice_loss with respect to `pred`.
template <typename T>
Tensor<T> soft_dice_grad(const Tensor<T>& pred, const Tensor<T>& target,
                         const DiceConfig& cfg = {},
                         const std::vector<double>& weights = {}) {
  const auto s = detail::dice_sums(pred, target, cfg);
  const int N = pred.n(), H = pred.h(), W = pred.w(), C = pred.c();
  if (!weights.empty() && static_cast<int>(weights.size()) != N)
    throw std::invalid_argument("soft_dice_grad: weight count != batch size");
  double wsum = 0;
  for (int in = 0; in < N; ++in)
    wsum += weights.empty() ? 1.0 : std::max(0.0, weights[in]);
  if (wsum <= 0) throw std::invalid_argument("soft_dice_grad: no weighted items");

  Tensor<T> grad(N, H, W, C);
  for (int in = 0; in < N; ++in) {
    const double w = weights.empty() ? 1.0 : weights[in];
    if (w <= 0) continue;
    const double coef = w / (wsum * C);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const T* p = pred.pixel(in, y, x);
        const T* t = target.pixel(in, y, x);
        T* g = grad.pixel(in, y, x);
        for (int ch = 0; ch < C; ++ch) {
          const size_t k = static_cast<size_t>(in) * C + ch;
          const double den = s.pden[k] + s.tden[k] + cfg.eps;
          const double num2 = 2.0 * s.num[k] + cfg.eps;
          // d/dp of num2/den, with den depending on p for both variants
          const double dnum = 2.0 * t[ch];
          const double dden = cfg.squared ? 2.0 * p[ch] : 1.0;
          const double ddice = (dnum * den - num2 * dden) / (den * den);
          g[ch] = static_cast<T>(-coef * ddice);
        }
      }
    }
  }
  return grad;
}

/// Expands a binary mask batch (N,H,W,1) to a two-channel one-hot map with
/// channel 0 = background, channel 1 = foreground.
template <typename T>
Tensor<T> one_hot(const Tensor<uint8_t>& mask) {
  if (mask.c() != 1)
    throw std::invalid_argument("one_hot: mask must have one channel");
  Tensor<T> out(mask.n(), mask.h(), mask.w(), 2);
  for (int in = 0; in < mask.n(); ++in)
    for (int y = 0; y < mask.h(); ++y)
      for (int x = 0; x < mask.w(); ++x) {
        const bool fg = mask.at(in, y, x, 0) != 0;
        out.at(in, y, x, 0) = fg ? T(0) : T(1);
        out.at(in, y, x, 1) = fg ? T(1) : T(0);
      }
  return out;
}

/// Supervised loss: soft Dice of the prediction against one-hot ground truth.
template <typename T>
double supervised_loss(const Tensor<T>& pred, const Tensor<uint8_t>& labels,
                       const DiceConfig& cfg = {},
                       const std::vector<double>& weights = {}) {
  if (labels.n() == 0) throw std::invalid_argument("supervised_loss: empty label batch");
  return soft_dice_loss(pred, one_hot<T>(labels), cfg, weights);
}

/// Consistency loss: soft Dice discrepancy between the (warped) student
/// prediction and the teacher prediction. The teacher side is a constant
/// target; no gradient is defined for it.
template <typename T>
double consistency_loss(const Tensor<T>& student_pred_warped,
                        const Tensor<T>& teacher_pred,
                        const DiceConfig& cfg = {}) {
  return soft_dice_loss(student_pred_warped, teacher_pred, cfg);
}

/// Consistency ramp: lambda(S) = lambda_max * exp(-5 * max(1 - S/L, 0)^2).
struct RampSchedule {
  long ramp_length = 1000;
  double lambda_max = 0.1;

  void validate() const {
    if (ramp_length < 1) throw std::invalid_argument("RampSchedule: ramp_length must be >= 1");
    if (lambda_max < 0) throw std::invalid_argument("RampSchedule: lambda_max must be >= 0");
  }
};

inline double ramp_weight(long step, const RampSchedule& sched) {
  sched.validate();
  if (step < 0) throw std::invalid_argument("ramp_weight: step must be >= 0");
  const double r = std::max(1.0 - static_cast<double>(step) / sched.ramp_length, 0.0);
  return sched.lambda_max * std::exp(-5.0 * r * r);
}

struct LossReport {
  double supervised = 0;
  double consistency = 0;
  double l2 = 0;
  double total = 0;
  double lambda_used = 0;
};

inline bool is_l2_key(const std::string& key) {
  // normalisation scale/shift and running statistics are excluded
  return key.find(".gamma") == std::string::npos &&
         key.find(".beta") == std::string::npos &&
         key.find("running_") == std::string::npos;
}

/// Sum of squared entries over weight arrays subject to L2.
template <typename T>
double l2_penalty(const std::map<std::string, Tensor<T>>& arrays) {
  double s = 0;
  for (const auto& [key, t] : arrays) {
    if (!is_l2_key(key)) continue;
    for (size_t i = 0; i < t.size(); ++i) {
      const double v = t[i];
      s += v * v;
    }
  }
  return s;
}

/// Combined objective L = L_l + lambda(S) * L_u + l2_weight * sum ||w||^2.
template <typename T>
LossReport total_loss(const Tensor<T>& pred_labelled, const Tensor<uint8_t>& labels,
                      const Tensor<T>& student_pred_warped,
                      const Tensor<T>& teacher_pred,
                      const std::map<std::string, Tensor<T>>& params,
                      long step, const RampSchedule& sched, double l2_weight,
                      const DiceConfig& cfg = {}) {
  if (l2_weight < 0) throw std::invalid_argument("total_loss: l2_weight must be >= 0");
  LossReport r;
  r.supervised = supervised_loss(pred_labelled, labels, cfg);
  r.consistency = consistency_loss(student_pred_warped, teacher_pred, cfg);
  r.lambda_used = ramp_weight(step, sched);
  r.l2 = l2_penalty(params);
  r.total = r.supervised + r.lambda_used * r.consistency + l2_weight * r.l2;
  return r;
}

}  // namespace mtseg
