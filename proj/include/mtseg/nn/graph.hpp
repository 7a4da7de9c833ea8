#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "mtseg/core/parallel.hpp"
#include "mtseg/core/tensor.hpp"
#include "mtseg/geometry/affine.hpp"
#include "mtseg/losses/dice.hpp"

namespace mtseg {

/// Eager reverse-mode tape over rank-4 tensors. Each op computes its value on
/// creation and records a closure that routes gradients to its parents.
/// Values for parameter nodes live in the caller's ModelParams; their
/// gradients accumulate into caller-owned sink tensors.
template <typename T>
class Graph {
  using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapMat = Eigen::Map<RowMat>;
  using MapConst = Eigen::Map<const RowMat>;

 public:
  using Ref = int;

  Ref constant(Tensor<T> v) {
    nodes_.push_back(Node{});
    nodes_.back().value = std::move(v);
    return static_cast<Ref>(nodes_.size() - 1);
  }

  /// Parameter leaf. `grad_sink` may be null, in which case the node is
  /// treated as a constant (used for the teacher network).
  Ref param(const Tensor<T>* value, Tensor<T>* grad_sink) {
    nodes_.push_back(Node{});
    Node& n = nodes_.back();
    n.external = value;
    n.grad_sink = grad_sink;
    n.needs_grad = grad_sink != nullptr;
    return static_cast<Ref>(nodes_.size() - 1);
  }

  const Tensor<T>& value(Ref i) const {
    return nodes_[i].external ? *nodes_[i].external : nodes_[i].value;
  }

  double scalar(Ref i) const {
    const Tensor<T>& v = value(i);
    if (v.size() != 1) throw std::logic_error("Graph::scalar: node is not scalar");
    return static_cast<double>(v[0]);
  }

  const Tensor<T>& grad(Ref i) const { return nodes_[i].grad; }

  /// Runs reverse accumulation from a scalar loss node. Parameter gradient
  /// sinks are accumulated into (callers zero them beforehand).
  void backward(Ref loss) {
    if (value(loss).size() != 1)
      throw std::logic_error("Graph::backward: loss must be scalar");
    for (Node& n : nodes_) {
      if (n.needs_grad && n.grad_sink == nullptr) {
        const Tensor<T>& v = n.external ? *n.external : n.value;
        n.grad = Tensor<T>(v.n(), v.h(), v.w(), v.c());
      }
    }
    grad_ref(loss)[0] = T(1);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      if (nodes_[i].needs_grad && nodes_[i].backprop) nodes_[i].backprop(*this, i);
    }
  }

  // ---- ops ----

  /// 2-D convolution, stride 1. Kernel (kh, kw, cin, cout); odd kernels are
  /// zero-padded to keep the spatial size ("same" padding).
  Ref conv2d(Ref x, Ref w, Ref b) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    const Tensor<T>& bv = value(b);
    const int kh = wv.n(), kw = wv.h(), cin = wv.w(), cout = wv.c();
    if (xv.c() != cin)
      throw std::invalid_argument("conv2d: input channels " + std::to_string(xv.c()) +
                                  " != kernel cin " + std::to_string(cin));
    if (bv.size() != static_cast<size_t>(cout))
      throw std::invalid_argument("conv2d: bias size mismatch");
    if (kh % 2 == 0 || kw % 2 == 0)
      throw std::invalid_argument("conv2d: kernel dims must be odd");
    const int N = xv.n(), H = xv.h(), W = xv.w();
    const int ph = kh / 2, pw = kw / 2;
    const int K = kh * kw * cin, HW = H * W;

    Tensor<T> out(N, H, W, cout);
    const bool want_grad = needs(x) || needs(w) || needs(b);
    auto cols = std::make_shared<std::vector<std::vector<T>>>();
    if (want_grad && kh * kw > 1) cols->resize(N);

    MapConst wm(wv.data(), K, cout);
    if (kh == 1 && kw == 1) {
      MapConst xm(xv.data(), static_cast<Eigen::Index>(N) * HW, cin);
      MapMat om(out.data(), static_cast<Eigen::Index>(N) * HW, cout);
      om.noalias() = xm * wm;
      om.rowwise() += MapConst(bv.data(), 1, cout).row(0);
    } else {
      parallel_for(0, N, [&](int in) {
        std::vector<T> local;
        std::vector<T>& col = want_grad ? (*cols)[in] : local;
        col.assign(static_cast<size_t>(HW) * K, T(0));
        im2col(xv, in, kh, kw, ph, pw, col.data());
        MapConst cm(col.data(), HW, K);
        MapMat om(out.data() + out.idx(in, 0, 0, 0), HW, cout);
        om.noalias() = cm * wm;
        om.rowwise() += MapConst(bv.data(), 1, cout).row(0);
      });
    }

    Ref y = add_node(std::move(out), {x, w, b});
    if (!needs(y)) return y;
    nodes_[y].backprop = [x, w, b, kh, kw, cin, cout, ph, pw, cols](Graph& g, Ref self) {
      const Tensor<T>& gy = g.grad_ref(self);
      const Tensor<T>& xv = g.value(x);
      const Tensor<T>& wv = g.value(w);
      const int N = xv.n(), H = xv.h(), W = xv.w();
      const int K = kh * kw * cin, HW = H * W;
      MapConst wm(wv.data(), K, cout);
      if (g.needs(b)) {
        Tensor<T>& gb = g.grad_ref(b);
        for (int in = 0; in < N; ++in) {
          MapConst gm(gy.data() + gy.idx(in, 0, 0, 0), HW, cout);
          MapMat(gb.data(), 1, cout).row(0) += gm.colwise().sum();
        }
      }
      if (kh == 1 && kw == 1) {
        MapConst gm(gy.data(), static_cast<Eigen::Index>(N) * HW, cout);
        if (g.needs(w)) {
          MapConst xm(xv.data(), static_cast<Eigen::Index>(N) * HW, cin);
          MapMat(g.grad_ref(w).data(), K, cout).noalias() += xm.transpose() * gm;
        }
        if (g.needs(x)) {
          MapMat(g.grad_ref(x).data(), static_cast<Eigen::Index>(N) * HW, cin).noalias() +=
              gm * wm.transpose();
        }
        return;
      }
      if (g.needs(w)) {
        std::vector<Tensor<T>> partial(N);
        parallel_for(0, N, [&](int in) {
          partial[in] = Tensor<T>(kh, kw, cin, cout);
          MapConst cm((*cols)[in].data(), HW, K);
          MapConst gm(gy.data() + gy.idx(in, 0, 0, 0), HW, cout);
          MapMat(partial[in].data(), K, cout).noalias() = cm.transpose() * gm;
        });
        Tensor<T>& gw = g.grad_ref(w);
        for (int in = 0; in < N; ++in)
          for (size_t i = 0; i < gw.size(); ++i) gw[i] += partial[in][i];
      }
      if (g.needs(x)) {
        Tensor<T>& gx = g.grad_ref(x);
        parallel_for(0, N, [&](int in) {
          std::vector<T> dcol(static_cast<size_t>(HW) * K);
          MapConst gm(gy.data() + gy.idx(in, 0, 0, 0), HW, cout);
          MapMat(dcol.data(), HW, K).noalias() = gm * wm.transpose();
          g.col2im(dcol.data(), in, kh, kw, ph, pw, gx);
        });
      }
    };
    return y;
  }

  /// Batch normalisation over (N, H, W) per channel. Running statistics are
  /// caller-owned state, updated in train mode when `update_running` is set.
  Ref batch_norm(Ref x, Ref gamma, Ref beta, Tensor<T>* running_mean,
                 Tensor<T>* running_var, bool train_mode, bool update_running,
                 double eps = 1e-5, double momentum = 0.1) {
    const Tensor<T>& xv = value(x);
    const int N = xv.n(), H = xv.h(), W = xv.w(), C = xv.c();
    const Tensor<T>& gv = value(gamma);
    const Tensor<T>& bv = value(beta);
    if (static_cast<int>(gv.size()) != C || static_cast<int>(bv.size()) != C)
      throw std::invalid_argument("batch_norm: scale/shift size mismatch");
    const long m = static_cast<long>(N) * H * W;
    if (m == 0) throw std::invalid_argument("batch_norm: empty input");

    auto xhat = std::make_shared<Tensor<T>>(N, H, W, C);
    auto istd = std::make_shared<std::vector<double>>(C);
    std::vector<double> mean(C, 0.0), var(C, 0.0);
    if (train_mode) {
      for (size_t i = 0; i < xv.size(); ++i) mean[i % C] += xv[i];
      for (int ch = 0; ch < C; ++ch) mean[ch] /= m;
      for (size_t i = 0; i < xv.size(); ++i) {
        const double d = xv[i] - mean[i % C];
        var[i % C] += d * d;
      }
      for (int ch = 0; ch < C; ++ch) var[ch] /= m;
      if (update_running) {
        for (int ch = 0; ch < C; ++ch) {
          (*running_mean)[ch] = static_cast<T>((1 - momentum) * (*running_mean)[ch] +
                                               momentum * mean[ch]);
          (*running_var)[ch] = static_cast<T>((1 - momentum) * (*running_var)[ch] +
                                              momentum * var[ch]);
        }
      }
    } else {
      for (int ch = 0; ch < C; ++ch) {
        mean[ch] = (*running_mean)[ch];
        var[ch] = (*running_var)[ch];
      }
    }
    for (int ch = 0; ch < C; ++ch) (*istd)[ch] = 1.0 / std::sqrt(var[ch] + eps);

    Tensor<T> out(N, H, W, C);
    for (size_t i = 0; i < xv.size(); ++i) {
      const int ch = static_cast<int>(i % C);
      const double xh = (xv[i] - mean[ch]) * (*istd)[ch];
      (*xhat)[i] = static_cast<T>(xh);
      out[i] = static_cast<T>(gv[ch] * xh + bv[ch]);
    }

    Ref y = add_node(std::move(out), {x, gamma, beta});
    if (!needs(y)) return y;
    nodes_[y].backprop = [x, gamma, beta, xhat, istd, train_mode, C, m](Graph& g, Ref self) {
      const Tensor<T>& gy = g.grad_ref(self);
      std::vector<double> sum_gy(C, 0.0), sum_gy_xhat(C, 0.0);
      for (size_t i = 0; i < gy.size(); ++i) {
        const int ch = static_cast<int>(i % C);
        sum_gy[ch] += gy[i];
        sum_gy_xhat[ch] += static_cast<double>(gy[i]) * (*xhat)[i];
      }
      if (g.needs(gamma)) {
        Tensor<T>& gg = g.grad_ref(gamma);
        for (int ch = 0; ch < C; ++ch) gg[ch] += static_cast<T>(sum_gy_xhat[ch]);
      }
      if (g.needs(beta)) {
        Tensor<T>& gb = g.grad_ref(beta);
        for (int ch = 0; ch < C; ++ch) gb[ch] += static_cast<T>(sum_gy[ch]);
      }
      if (g.needs(x)) {
        const Tensor<T>& gv = g.value(gamma);
        Tensor<T>& gx = g.grad_ref(x);
        if (train_mode) {
          for (size_t i = 0; i < gy.size(); ++i) {
            const int ch = static_cast<int>(i % C);
            const double t = m * static_cast<double>(gy[i]) - sum_gy[ch] -
                             (*xhat)[i] * sum_gy_xhat[ch];
            gx[i] += static_cast<T>(gv[ch] * (*istd)[ch] / m * t);
          }
        } else {
          for (size_t i = 0; i < gy.size(); ++i) {
            const int ch = static_cast<int>(i % C);
            gx[i] += static_cast<T>(gv[ch] * (*istd)[ch] * static_cast<double>(gy[i]));
          }
        }
      }
    };
    return y;
  }

  Ref relu(Ref x) {
    const Tensor<T>& xv = value(x);
    Tensor<T> out = xv;
    for (size_t i = 0; i < out.size(); ++i)
      if (out[i] < T(0)) out[i] = T(0);
    Ref y = add_node(std::move(out), {x});
    if (!needs(y)) return y;
    nodes_[y].backprop = [x](Graph& g, Ref self) {
      const Tensor<T>& gy = g.grad_ref(self);
      const Tensor<T>& xv = g.value(x);
      Tensor<T>& gx = g.grad_ref(x);
      for (size_t i = 0; i < gy.size(); ++i)
        if (xv[i] > T(0)) gx[i] += gy[i];
    };
    return y;
  }

  /// 2x2 max pooling, stride 2. Spatial dims must be even.
  Ref maxpool2(Ref x) {
    const Tensor<T>& xv = value(x);
    const int N = xv.n(), H = xv.h(), W = xv.w(), C = xv.c();
    if (H % 2 != 0 || W % 2 != 0)
      throw std::invalid_argument("maxpool2: spatial dims must be even");
    Tensor<T> out(N, H / 2, W / 2, C);
    auto arg = std::make_shared<std::vector<uint8_t>>(out.size());
    for (int in = 0; in < N; ++in)
      for (int y = 0; y < H / 2; ++y)
        for (int xo = 0; xo < W / 2; ++xo)
          for (int ch = 0; ch < C; ++ch) {
            T best = xv.at(in, 2 * y, 2 * xo, ch);
            uint8_t bi = 0;
            for (uint8_t k = 1; k < 4; ++k) {
              const T v = xv.at(in, 2 * y + (k >> 1), 2 * xo + (k & 1), ch);
              if (v > best) { best = v; bi = k; }
            }
            out.at(in, y, xo, ch) = best;
            (*arg)[out.idx(in, y, xo, ch)] = bi;
          }
    Ref y = add_node(std::move(out), {x});
    if (!needs(y)) return y;
    nodes_[y].backprop = [x, arg](Graph& g, Ref self) {
      const Tensor<T>& gy = g.grad_ref(self);
      Tensor<T>& gx = g.grad_ref(x);
      const int N = gy.n(), Ho = gy.h(), Wo = gy.w(), C = gy.c();
      for (int in = 0; in < N; ++in)
        for (int y2 = 0; y2 < Ho; ++y2)
          for (int xo = 0; xo < Wo; ++xo)
            for (int ch = 0; ch < C; ++ch) {
              const uint8_t k = (*arg)[gy.idx(in, y2, xo, ch)];
              gx.at(in, 2 * y2 + (k >> 1), 2 * xo + (k & 1), ch) +=
                  gy.at(in, y2, xo, ch);
            }
    };
    return y;
  }

  /// Bilinear 2x upsampling (half-pixel centres, edges clamped).
  Ref upsample2(Ref x) {
    const Tensor<T>& xv = value(x);
    const int N = xv.n(), H = xv.h(), W = xv.w(), C = xv.c();
    const int Ho = 2 * H, Wo = 2 * W;
    Tensor<T> out(N, Ho, Wo, C);
    auto line = [](int o, int size, int& i0, int& i1, double& f) {
      const double s = (o + 0.5) * 0.5 - 0.5;
      const int fl = static_cast<int>(std::floor(s));
      f = s - fl;
      i0 = std::clamp(fl, 0, size - 1);
      i1 = std::clamp(fl + 1, 0, size - 1);
    };
    for (int in = 0; in < N; ++in)
      for (int y = 0; y < Ho; ++y) {
        int y0, y1; double fy;
        line(y, H, y0, y1, fy);
        for (int xo = 0; xo < Wo; ++xo) {
          int x0, x1; double fx;
          line(xo, W, x0, x1, fx);
          for (int ch = 0; ch < C; ++ch) {
            const double v =
                (1 - fy) * ((1 - fx) * xv.at(in, y0, x0, ch) + fx * xv.at(in, y0, x1, ch)) +
                fy * ((1 - fx) * xv.at(in, y1, x0, ch) + fx * xv.at(in, y1, x1, ch));
            out.at(in, y, xo, ch) = static_cast<T>(v);
          }
        }
      }
    Ref y = add_node(std::move(out), {x});
    if (!needs(y)) return y;
    nodes_[y].backprop = [x, line](Graph& g, Ref self) {
      const Tensor<T>& gy = g.grad_ref(self);
      Tensor<T>& gx = g.grad_ref(x);
      const int N = gy.n(), Ho = gy.h(), Wo = gy.w(), C = gy.c();
      const int H = gx.h(), W = gx.w();
      for (int in = 0; in < N; ++in)
        for (int y2 = 0; y2 < Ho; ++y2) {
          int y0, y1; double fy;
          line(y2, H, y0, y1, fy);
          for (int xo = 0; xo < Wo; ++xo) {
            int x0, x1; double fx;
            line(xo, W, x0, x1, fx);
            for (int ch = 0; ch < C; ++ch) {
              const double gv = gy.at(in, y2, xo, ch);
              gx.at(in, y0, x0, ch) += static_cast<T>((1 - fy) * (1 - fx) * gv);
              gx.at(in, y0, x1, ch) += static_cast<T>((1 - fy) * fx * gv);
              gx.at(in, y1, x0, ch) += static_cast<T>(fy * (1 - fx) * gv);
              gx.at(in, y1, x1, ch) += static_cast<T>(fy * fx * gv);
            }
          }
        }
    };
    return y;
  }

  /// Channel concatenation [a; b].
  Ref concat_c(Ref a, Ref b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    if (av.n() != bv.n() || av.h() != bv.h() || av.w() != bv.w())
      throw std::invalid_argument("concat_c: spatial shape mismatch");
    const int N = av.n(), H = av.h(), W = av.w(), ca = av.c(), cb = bv.c();
    Tensor<T> out(N, H, W, ca + cb);
    for (int in = 0; in < N; ++in)
      for (int y = 0; y < H; ++y)
        for (int xo = 0; xo < W; ++xo) {
          T* o = out.pixel(in, y, xo);
          const T* pa = av.pixel(in, y, xo);
          const T* pb = bv.pixel(in, y, xo);
          for (int ch = 0; ch < ca; ++ch) o[ch] = pa[ch];
          for (int ch = 0; ch < cb; ++ch) o[ca + ch] = pb[ch];
        }
    Ref y = add_node(std::move(out), {a, b});
    if (!needs(y)) return y;
    nodes_[y].backprop = [a, b, ca, cb](Graph& g, Ref self) {
      const Tensor<T>& gy = g.grad_ref(self);
      const int N = gy.n(), H = gy.h(), W = gy.w();
      if (g.needs(a)) {
        Tensor<T>& ga = g.grad_ref(a);
        for (int in = 0; in < N; ++in)
          for (int y2 = 0; y2 < H; ++y2)
            for (int xo = 0; xo < W; ++xo) {
              const T* gp = gy.pixel(in, y2, xo);
              T* o = ga.pixel(in, y2, xo);
              for (int ch = 0; ch < ca; ++ch) o[ch] += gp[ch];
            }
      }
      if (g.needs(b)) {
        Tensor<T>& gb = g.grad_ref(b);
        for (int in = 0; in < N; ++in)
          for (int y2 = 0; y2 < H; ++y2)
            for (int xo = 0; xo < W; ++xo) {
              const T* gp = gy.pixel(in, y2, xo);
              T* o = gb.pixel(in, y2, xo);
              for (int ch = 0; ch < cb; ++ch) o[ch] += gp[ca + ch];
            }
      }
    };
    return y;
  }

  /// Per-pixel softmax over channels.
  Ref softmax_c(Ref x) {
    const Tensor<T>& xv = value(x);
    const int N = xv.n(), H = xv.h(), W = xv.w(), C = xv.c();
    Tensor<T> out(N, H, W, C);
    for (int in = 0; in < N; ++in)
      for (int y = 0; y < H; ++y)
        for (int xo = 0; xo < W; ++xo) {
          const T* p = xv.pixel(in, y, xo);
          T* o = out.pixel(in, y, xo);
          double mx = p[0];
          for (int ch = 1; ch < C; ++ch) mx = std::max(mx, static_cast<double>(p[ch]));
          double s = 0;
          for (int ch = 0; ch < C; ++ch) {
            const double e = std::exp(static_cast<double>(p[ch]) - mx);
            o[ch] = static_cast<T>(e);
            s += e;
          }
          for (int ch = 0; ch < C; ++ch)
            o[ch] = static_cast<T>(static_cast<double>(o[ch]) / s);
        }
    Ref y = add_node(std::move(out), {x});
    if (!needs(y)) return y;
    nodes_[y].backprop = [x](Graph& g, Ref self) {
      const Tensor<T>& gy = g.grad_ref(self);
      const Tensor<T>& yv = g.value(self);
      Tensor<T>& gx = g.grad_ref(x);
      const int N = gy.n(), H = gy.h(), W = gy.w(), C = gy.c();
      for (int in = 0; in < N; ++in)
        for (int y2 = 0; y2 < H; ++y2)
          for (int xo = 0; xo < W; ++xo) {
            const T* gp = gy.pixel(in, y2, xo);
            const T* yp = yv.pixel(in, y2, xo);
            T* o = gx.pixel(in, y2, xo);
            double dot = 0;
            for (int ch = 0; ch < C; ++ch) dot += static_cast<double>(gp[ch]) * yp[ch];
            for (int ch = 0; ch < C; ++ch)
              o[ch] += static_cast<T>(yp[ch] * (static_cast<double>(gp[ch]) - dot));
          }
    };
    return y;
  }

  /// Differentiable probability-map warp: bilinear per channel with
  /// background-certain fill, then per-pixel renormalisation.
  Ref warp_probmap_node(Ref x, const AffineTransform& t) {
    if (!t.valid())
      throw std::invalid_argument("warp_probmap_node: non-invertible transform");
    const Tensor<T>& xv = value(x);
    const int N = xv.n(), H = xv.h(), W = xv.w(), C = xv.c();
    Tensor<T> out(N, H, W, C);
    auto sums = std::make_shared<std::vector<double>>(static_cast<size_t>(N) * H * W);
    for (int in = 0; in < N; ++in)
      for (int y = 0; y < H; ++y)
        for (int xo = 0; xo < W; ++xo) {
          double sx, sy;
          t.apply(xo, y, sx, sy);
          const int x0 = static_cast<int>(std::floor(sx));
          const int y0 = static_cast<int>(std::floor(sy));
          const double fx = sx - x0, fy = sy - y0;
          const double wgt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy),
                                 (1 - fx) * fy, fx * fy};
          const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
          const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
          T* o = out.pixel(in, y, xo);
          double s = 0;
          for (int ch = 0; ch < C; ++ch) {
            double v = 0;
            for (int k = 0; k < 4; ++k) {
              const bool inb = xs[k] >= 0 && xs[k] < W && ys[k] >= 0 && ys[k] < H;
              v += wgt[k] * (inb ? static_cast<double>(xv.at(in, ys[k], xs[k], ch))
                                 : probmap_fill(ch));
            }
            o[ch] = static_cast<T>(v);
            s += v;
          }
          const size_t pi = (static_cast<size_t>(in) * H + y) * W + xo;
          (*sums)[pi] = s;
          if (s > 1e-12)
            for (int ch = 0; ch < C; ++ch)
              o[ch] = static_cast<T>(static_cast<double>(o[ch]) / s);
        }
    Ref y = add_node(std::move(out), {x});
    if (!needs(y)) return y;
    nodes_[y].backprop = [x, t, sums](Graph& g, Ref self) {
      const Tensor<T>& gy = g.grad_ref(self);
      const Tensor<T>& yv = g.value(self);
      Tensor<T>& gx = g.grad_ref(x);
      const int N = gy.n(), H = gy.h(), W = gy.w(), C = gy.c();
      for (int in = 0; in < N; ++in)
        for (int y2 = 0; y2 < H; ++y2)
          for (int xo = 0; xo < W; ++xo) {
            double sx, sy;
            t.apply(xo, y2, sx, sy);
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            const double wgt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy),
                                   (1 - fx) * fy, fx * fy};
            const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
            const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
            const T* gp = gy.pixel(in, y2, xo);
            const T* yp = yv.pixel(in, y2, xo);
            const size_t pi = (static_cast<size_t>(in) * H + y2) * W + xo;
            const double s = (*sums)[pi];
            double dot = 0;
            if (s > 1e-12)
              for (int ch = 0; ch < C; ++ch)
                dot += static_cast<double>(gp[ch]) * yp[ch];
            for (int ch = 0; ch < C; ++ch) {
              // gradient w.r.t. the pre-renormalisation sample
              const double dq = s > 1e-12
                                    ? (static_cast<double>(gp[ch]) - dot) / s
                                    : static_cast<double>(gp[ch]);
              for (int k = 0; k < 4; ++k) {
                const bool inb = xs[k] >= 0 && xs[k] < W && ys[k] >= 0 && ys[k] < H;
                if (inb)
                  gx.at(in, ys[k], xs[k], ch) += static_cast<T>(wgt[k] * dq);
              }
            }
          }
    };
    return y;
  }

  /// Scalar soft-Dice loss node against a constant target. `weights` selects
  /// and weighs batch items (empty = all items, weight 1).
  Ref dice_loss(Ref pred, Tensor<T> target, std::vector<double> weights,
                const DiceConfig& cfg) {
    const double v = soft_dice_loss(value(pred), target, cfg, weights);
    Tensor<T> out(1, 1, 1, 1);
    out[0] = static_cast<T>(v);
    Ref y = add_node(std::move(out), {pred});
    if (!needs(y)) return y;
    auto tgt = std::make_shared<Tensor<T>>(std::move(target));
    auto wts = std::make_shared<std::vector<double>>(std::move(weights));
    nodes_[y].backprop = [pred, tgt, wts, cfg](Graph& g, Ref self) {
      const double gs = g.grad_ref(self)[0];
      const Tensor<T> dg = soft_dice_grad(g.value(pred), *tgt, cfg, *wts);
      Tensor<T>& gp = g.grad_ref(pred);
      for (size_t i = 0; i < gp.size(); ++i)
        gp[i] += static_cast<T>(gs * dg[i]);
    };
    return y;
  }

  /// Scalar combination ca*a + cb*b.
  Ref add_weighted(Ref a, Ref b, double ca, double cb) {
    if (value(a).size() != 1 || value(b).size() != 1)
      throw std::logic_error("add_weighted: operands must be scalar");
    Tensor<T> out(1, 1, 1, 1);
    out[0] = static_cast<T>(ca * scalar(a) + cb * scalar(b));
    Ref y = add_node(std::move(out), {a, b});
    if (!needs(y)) return y;
    nodes_[y].backprop = [a, b, ca, cb](Graph& g, Ref self) {
      const T gs = g.grad_ref(self)[0];
      if (g.needs(a)) g.grad_ref(a)[0] += static_cast<T>(ca * gs);
      if (g.needs(b)) g.grad_ref(b)[0] += static_cast<T>(cb * gs);
    };
    return y;
  }

  bool needs(Ref i) const { return nodes_[i].needs_grad; }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    Tensor<T>* grad_sink = nullptr;
    bool needs_grad = false;
    std::function<void(Graph&, Ref)> backprop;
  };

  Tensor<T>& grad_ref(Ref i) {
    return nodes_[i].grad_sink ? *nodes_[i].grad_sink : nodes_[i].grad;
  }

  Ref add_node(Tensor<T> v, std::initializer_list<Ref> parents) {
    bool needs = false;
    for (Ref p : parents) needs = needs || nodes_[p].needs_grad;
    nodes_.push_back(Node{});
    nodes_.back().value = std::move(v);
    nodes_.back().needs_grad = needs;
    return static_cast<Ref>(nodes_.size() - 1);
  }

  void im2col(const Tensor<T>& x, int in, int kh, int kw, int ph, int pw,
              T* col) const {
    const int H = x.h(), W = x.w(), C = x.c();
    const int K = kh * kw * C;
    for (int y = 0; y < H; ++y)
      for (int xo = 0; xo < W; ++xo) {
        T* row = col + (static_cast<size_t>(y) * W + xo) * K;
        for (int ky = 0; ky < kh; ++ky) {
          const int sy = y + ky - ph;
          for (int kx = 0; kx < kw; ++kx) {
            const int sx = xo + kx - pw;
            T* dst = row + (static_cast<size_t>(ky) * kw + kx) * C;
            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;  // stays zero
            const T* src = x.pixel(in, sy, sx);
            for (int ch = 0; ch < C; ++ch) dst[ch] = src[ch];
          }
        }
      }
  }

  void col2im(const T* dcol, int in, int kh, int kw, int ph, int pw,
              Tensor<T>& gx) const {
    const int H = gx.h(), W = gx.w(), C = gx.c();
    const int K = kh * kw * C;
    for (int y = 0; y < H; ++y)
      for (int xo = 0; xo < W; ++xo) {
        const T* row = dcol + (static_cast<size_t>(y) * W + xo) * K;
        for (int ky = 0; ky < kh; ++ky) {
          const int sy = y + ky - ph;
          if (sy < 0 || sy >= H) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int sx = xo + kx - pw;
            if (sx < 0 || sx >= W) continue;
            const T* src = row + (static_cast<size_t>(ky) * kw + kx) * C;
            T* dst = gx.pixel(in, sy, sx);
            for (int ch = 0; ch < C; ++ch) dst[ch] += src[ch];
          }
        }
      }
  }

  std::vector<Node> nodes_;
};

}  // namespace mtseg
