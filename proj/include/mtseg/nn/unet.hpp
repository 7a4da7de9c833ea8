#pragma once

#include <map>
#include <string>
#include <vector>

#include "mtseg/core/rng.hpp"
#include "mtseg/core/tensor.hpp"
#include "mtseg/nn/graph.hpp"

namespace mtseg {

struct NetConfig {
  int depth = 4;        // encoder levels
  int base_filters = 16;
  int in_channels = 3;
  int num_classes = 2;

  void validate() const {
    if (depth < 2) throw std::invalid_argument("NetConfig: depth must be >= 2");
    if (base_filters < 1) throw std::invalid_argument("NetConfig: base_filters must be >= 1");
    if (in_channels < 1) throw std::invalid_argument("NetConfig: in_channels must be >= 1");
    if (num_classes != 2) throw std::invalid_argument("NetConfig: num_classes must be 2");
  }

  int filters_at(int level) const { return base_filters << level; }

  /// Smallest multiple of 2^(depth-1) that input sides must divide into.
  int size_multiple() const { return 1 << (depth - 1); }

  bool operator==(const NetConfig& o) const {
    return depth == o.depth && base_filters == o.base_filters &&
           in_channels == o.in_channels && num_classes == o.num_classes;
  }
};

namespace detail {

struct ConvSpec {
  std::string name;
  int kh, kw, cin, cout;
  bool followed_by_bn;
};

/// Architecture as an ordered list of convolutions; batch-norm params hang off
/// the convs flagged with followed_by_bn. Single source of truth for build,
/// forward wiring and parameter counting.
inline std::vector<ConvSpec> arch_convs(const NetConfig& cfg) {
  cfg.validate();
  std::vector<ConvSpec> specs;
  const int D = cfg.depth, F = cfg.base_filters, C = cfg.in_channels;
  for (int k = 0; k < D; ++k) {
    int cin;
    if (k == 0)
      cin = C;
    else if (k <= D - 2)
      cin = cfg.filters_at(k - 1) + F;  // pooled features + pyramid injection
    else
      cin = cfg.filters_at(k - 1);
    const int f = cfg.filters_at(k);
    const std::string e = "enc" + std::to_string(k);
    specs.push_back({e + ".conv1", 3, 3, cin, f, true});
    specs.push_back({e + ".conv2", 3, 3, f, f, true});
    if (k >= 1 && k <= D - 2)
      specs.push_back({"pyr" + std::to_string(k) + ".conv", 3, 3, C, F, false});
  }
  for (int k = D - 2; k >= 0; --k) {
    const int f = cfg.filters_at(k);
    const std::string d = "dec" + std::to_string(k);
    specs.push_back({d + ".reduce", 1, 1, cfg.filters_at(k + 1), f, false});
    specs.push_back({d + ".conv1", 3, 3, 2 * f, f, true});
    specs.push_back({d + ".conv2", 3, 3, f, f, true});
  }
  specs.push_back({"head.conv", 1, 1, F, cfg.num_classes, false});
  return specs;
}

inline std::string bn_name(const std::string& conv_name) {
  // encN.convK -> encN.bnK
  auto pos = conv_name.rfind(".conv");
  return conv_name.substr(0, pos) + ".bn" + conv_name.substr(pos + 5);
}

}  // namespace detail

/// Named weight arrays for one network instance. The key set and shapes are a
/// pure function of the config.
template <typename T>
struct ModelParams {
  NetConfig config;
  std::map<std::string, Tensor<T>> arrays;

  std::vector<std::string> trainable_keys() const {
    std::vector<std::string> keys;
    for (const auto& [k, v] : arrays)
      if (k.find("running_") == std::string::npos) keys.push_back(k);
    return keys;
  }

  bool same_structure(const ModelParams& o) const {
    if (arrays.size() != o.arrays.size()) return false;
    auto it = o.arrays.begin();
    for (const auto& [k, v] : arrays) {
      if (it->first != k || it->second.shape() != v.shape()) return false;
      ++it;
    }
    return true;
  }
};

inline size_t param_count(const NetConfig& cfg) {
  size_t total = 0;
  for (const auto& s : detail::arch_convs(cfg)) {
    total += static_cast<size_t>(s.kh) * s.kw * s.cin * s.cout + s.cout;
    if (s.followed_by_bn) total += 2 * static_cast<size_t>(s.cout);
  }
  return total;
}

/// Initialises weights with fan-in-scaled uniform draws (bound sqrt(6/fan_in))
/// in the order the architecture lists them, so a seed fixes every array.
template <typename T>
ModelParams<T> build(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  ModelParams<T> p;
  p.config = cfg;
  for (const auto& s : detail::arch_convs(cfg)) {
    Tensor<T> w(s.kh, s.kw, s.cin, s.cout);
    const double bound = std::sqrt(6.0 / (static_cast<double>(s.kh) * s.kw * s.cin));
    for (size_t i = 0; i < w.size(); ++i)
      w[i] = static_cast<T>(rng.uniform(-bound, bound));
    p.arrays[s.name + ".w"] = std::move(w);
    p.arrays[s.name + ".b"] = Tensor<T>(1, 1, 1, s.cout);
    if (s.followed_by_bn) {
      const std::string bn = detail::bn_name(s.name);
      p.arrays[bn + ".gamma"] = Tensor<T>::full(1, 1, 1, s.cout, T(1));
      p.arrays[bn + ".beta"] = Tensor<T>(1, 1, 1, s.cout);
      p.arrays[bn + ".running_mean"] = Tensor<T>(1, 1, 1, s.cout);
      p.arrays[bn + ".running_var"] = Tensor<T>::full(1, 1, 1, s.cout, T(1));
    }
  }
  return p;
}

/// Multi-scale input pyramid: level 0 is the input, level k halves the
/// spatial dims of level k-1 by 2x2 averaging. Returns depth-1 levels
/// (one per encoder layer except the bottom).
template <typename T>
std::vector<Tensor<T>> image_pyramid(const Tensor<T>& img, int depth) {
  if (depth < 2) throw std::invalid_argument("image_pyramid: depth must be >= 2");
  const int mult = 1 << (depth - 1);
  if (img.h() % mult != 0 || img.w() % mult != 0)
    throw std::invalid_argument("image_pyramid: spatial dims " + img.shape_str() +
                                " not divisible by " + std::to_string(mult));
  std::vector<Tensor<T>> levels;
  levels.push_back(img);
  for (int k = 1; k <= depth - 2; ++k) {
    const Tensor<T>& prev = levels.back();
    Tensor<T> half(prev.n(), prev.h() / 2, prev.w() / 2, prev.c());
    for (int in = 0; in < half.n(); ++in)
      for (int y = 0; y < half.h(); ++y)
        for (int x = 0; x < half.w(); ++x)
          for (int ch = 0; ch < half.c(); ++ch) {
            const double v = static_cast<double>(prev.at(in, 2 * y, 2 * x, ch)) +
                             prev.at(in, 2 * y, 2 * x + 1, ch) +
                             prev.at(in, 2 * y + 1, 2 * x, ch) +
                             prev.at(in, 2 * y + 1, 2 * x + 1, ch);
            half.at(in, y, x, ch) = static_cast<T>(v * 0.25);
          }
    levels.push_back(std::move(half));
  }
  return levels;
}

template <typename T>
using Grads = std::map<std::string, Tensor<T>>;

template <typename T>
Grads<T> make_grads(const ModelParams<T>& p) {
  Grads<T> g;
  for (const auto& key : p.trainable_keys()) {
    const Tensor<T>& v = p.arrays.at(key);
    g[key] = Tensor<T>(v.n(), v.h(), v.w(), v.c());
  }
  return g;
}

template <typename T>
void zero_grads(Grads<T>& g) {
  for (auto& [k, t] : g) t.fill(T(0));
}

/// Wires the U-Net into `graph` and returns the softmax probability node.
/// `grads` may be null for a gradient-free (teacher / inference) pass.
/// Running statistics in `params` mutate only when update_running is set.
template <typename T>
typename Graph<T>::Ref forward_graph(Graph<T>& graph, ModelParams<T>& params,
                                     Grads<T>* grads, const Tensor<T>& img,
                                     bool train_mode, bool update_running) {
  const NetConfig& cfg = params.config;
  cfg.validate();
  if (img.c() != cfg.in_channels)
    throw std::invalid_argument("forward: input has " + std::to_string(img.c()) +
                                " channels, config expects " +
                                std::to_string(cfg.in_channels));
  const int mult = cfg.size_multiple();
  if (img.h() % mult != 0 || img.w() % mult != 0)
    throw std::invalid_argument("forward: spatial dims " + img.shape_str() +
                                " not divisible by " + std::to_string(mult));

  auto P = [&](const std::string& key) {
    auto it = params.arrays.find(key);
    if (it == params.arrays.end())
      throw std::logic_error("forward: missing parameter " + key);
    Tensor<T>* sink = nullptr;
    if (grads) {
      auto git = grads->find(key);
      if (git == grads->end()) throw std::logic_error("forward: missing grad sink " + key);
      sink = &git->second;
    }
    return graph.param(&it->second, sink);
  };
  auto conv_bn_relu = [&](typename Graph<T>::Ref x, const std::string& conv) {
    auto y = graph.conv2d(x, P(conv + ".w"), P(conv + ".b"));
    const std::string bn = detail::bn_name(conv);
    y = graph.batch_norm(y, P(bn + ".gamma"), P(bn + ".beta"),
                         &params.arrays.at(bn + ".running_mean"),
                         &params.arrays.at(bn + ".running_var"), train_mode,
                         update_running);
    return graph.relu(y);
  };
  auto block = [&](typename Graph<T>::Ref x, const std::string& name) {
    auto y = conv_bn_relu(x, name + ".conv1");
    return conv_bn_relu(y, name + ".conv2");
  };

  const int D = cfg.depth;
  const auto pyramid = image_pyramid(img, D);

  std::vector<typename Graph<T>::Ref> skips;
  auto x = graph.constant(pyramid[0]);
  x = block(x, "enc0");
  skips.push_back(x);
  for (int k = 1; k < D; ++k) {
    x = graph.maxpool2(x);
    if (k <= D - 2) {
      auto pin = graph.constant(pyramid[k]);
      const std::string pc = "pyr" + std::to_string(k) + ".conv";
      auto pf = graph.conv2d(pin, P(pc + ".w"), P(pc + ".b"));
      x = graph.concat_c(x, pf);
    }
    x = block(x, "enc" + std::to_string(k));
    if (k < D - 1) skips.push_back(x);
  }
  for (int k = D - 2; k >= 0; --k) {
    const std::string d = "dec" + std::to_string(k);
    x = graph.upsample2(x);
    x = graph.conv2d(x, P(d + ".reduce.w"), P(d + ".reduce.b"));
    x = graph.concat_c(x, skips[k]);
    x = block(x, d);
  }
  x = graph.conv2d(x, P("head.conv.w"), P("head.conv.b"));
  return graph.softmax_c(x);
}

/// Inference forward pass: per-pixel class probabilities, same spatial size
/// as the input. Pure (running statistics untouched).
template <typename T>
Tensor<T> forward(const ModelParams<T>& params, const Tensor<T>& img,
                  bool train_mode) {
  Graph<T> graph;
  auto& mutable_params = const_cast<ModelParams<T>&>(params);
  const auto prob = forward_graph<T>(graph, mutable_params, nullptr, img,
                                     train_mode, /*update_running=*/false);
  Tensor<T> out = graph.value(prob);
  if (!out.all_finite()) throw std::runtime_error("forward: non-finite output");
  return out;
}

}  // namespace mtseg
