#pragma once

#include <cmath>
#include <map>
#include <string>

#include "mtseg/core/tensor.hpp"
#include "mtseg/nn/unet.hpp"

namespace mtseg {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (lr <= 0) throw std::invalid_argument("AdamConfig: lr must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw std::invalid_argument("AdamConfig: betas must be in [0, 1)");
  }
};

/// Adaptive moment estimation over named weight arrays.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

  void step(ModelParams<T>& params, const Grads<T>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (const auto& [key, g] : grads) {
      Tensor<T>& w = params.arrays.at(key);
      Tensor<T>& m = moment(m_, key, w);
      Tensor<T>& v = moment(v_, key, w);
      for (size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i];
        m[i] = static_cast<T>(cfg_.beta1 * m[i] + (1 - cfg_.beta1) * gi);
        v[i] = static_cast<T>(cfg_.beta2 * v[i] + (1 - cfg_.beta2) * gi * gi);
        const double mh = m[i] / bc1;
        const double vh = v[i] / bc2;
        w[i] = static_cast<T>(w[i] - cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
      }
    }
  }

  long steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  Tensor<T>& moment(std::map<std::string, Tensor<T>>& store, const std::string& key,
                    const Tensor<T>& like) {
    auto it = store.find(key);
    if (it == store.end())
      it = store.emplace(key, Tensor<T>(like.n(), like.h(), like.w(), like.c())).first;
    return it->second;
  }

  AdamConfig cfg_;
  std::map<std::string, Tensor<T>> m_, v_;
  long t_ = 0;
};

}  // namespace mtseg
