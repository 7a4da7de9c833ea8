#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtseg {

/// Dense rank-4 array in NHWC layout. Conv kernels reuse the same storage
/// with dims read as (kh, kw, cin, cout).
template <typename T>
class Tensor {
 public:
  Tensor() : shape_{0, 0, 0, 0} {}

  Tensor(int n, int h, int w, int c) : shape_{n, h, w, c} {
    if (n < 0 || h < 0 || w < 0 || c < 0)
      throw std::invalid_argument("Tensor: negative dimension");
    data_.assign(static_cast<size_t>(n) * h * w * c, T(0));
  }

  static Tensor full(int n, int h, int w, int c, T value) {
    Tensor t(n, h, w, c);
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  int n() const { return shape_[0]; }
  int h() const { return shape_[1]; }
  int w() const { return shape_[2]; }
  int c() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  T& at(int in, int iy, int ix, int ic) {
    return data_[idx(in, iy, ix, ic)];
  }
  const T& at(int in, int iy, int ix, int ic) const {
    return data_[idx(in, iy, ix, ic)];
  }

  size_t idx(int in, int iy, int ix, int ic) const {
    return ((static_cast<size_t>(in) * shape_[1] + iy) * shape_[2] + ix) *
               shape_[3] +
           ic;
  }

  /// Pointer to the first channel of pixel (in, iy, ix).
  T* pixel(int in, int iy, int ix) { return data_.data() + idx(in, iy, ix, 0); }
  const T* pixel(int in, int iy, int ix) const {
    return data_.data() + idx(in, iy, ix, 0);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  double sum() const {
    double s = 0;
    for (const T& v : data_) s += static_cast<double>(v);
    return s;
  }

  double min() const {
    double m = std::numeric_limits<double>::infinity();
    for (const T& v : data_) m = std::min(m, static_cast<double>(v));
    return m;
  }

  double max() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const T& v : data_) m = std::max(m, static_cast<double>(v));
    return m;
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_[0], shape_[1], shape_[2], shape_[3]);
    for (size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return out;
  }

  std::string shape_str() const {
    return std::to_string(shape_[0]) + "x" + std::to_string(shape_[1]) + "x" +
           std::to_string(shape_[2]) + "x" + std::to_string(shape_[3]);
  }

 private:
  std::array<int, 4> shape_;
  std::vector<T> data_;
};

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <typename T>
double mean_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mean_abs_diff: shape mismatch");
  if (a.size() == 0) return 0;
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i)
    s += std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
  return s / static_cast<double>(a.size());
}

}  // namespace mtseg
