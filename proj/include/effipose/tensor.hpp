#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace effipose {

/// Raised whenever two tensors (or a tensor and a layer) disagree on an axis.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for invalid configuration values (rates, sizes, names).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NCHW shape. Every entry is strictly positive.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  constexpr std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  constexpr std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  constexpr bool operator==(const Shape&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
  }
};

inline void check_shape(const Shape& s) {
  if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0)
    throw DimensionError("shape entries must be positive, got " + s.str());
}

/// Formats "axis a=x vs b=y" for dimension errors.
inline std::string axis_mismatch(const std::string& what, const std::string& axis,
                                 int a, int b) {
  std::ostringstream os;
  os << what << ": axis " << axis << " mismatch (" << a << " vs " << b << ")";
  return os.str();
}

/// Dense row-major rank-4 array with value semantics.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape) {
    check_shape(shape_);
    data_.assign(shape_.numel(), fill);
  }
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_.numel())
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_.str());
  }

  static Tensor scalar(T v) { return Tensor(Shape{1, 1, 1, 1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  const T& at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

  /// Pointer to the (n, c) spatial plane.
  T* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const T* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape s) const {
    if (s.numel() != shape_.numel())
      throw DimensionError("cannot reshape " + shape_.str() + " to " + s.str());
    Tensor out = *this;
    out.shape_ = s;
    return out;
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> d(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(d));
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

template <class T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape()))
    throw DimensionError("max_abs_diff: " + a.shape().str() + " vs " + b.shape().str());
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max<T>(m, std::abs(a[i] - b[i]));
  return m;
}

template <class T, class Rng>
Tensor<T> random_normal(Shape s, Rng& rng, double mean = 0.0, double stddev = 1.0) {
  Tensor<T> t(s);
  std::normal_distribution<double> dist(mean, stddev);
  for (auto& v : t.vec()) v = static_cast<T>(dist(rng));
  return t;
}

template <class T, class Rng>
Tensor<T> random_uniform(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(s);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.vec()) v = static_cast<T>(dist(rng));
  return t;
}

}  // namespace effipose
