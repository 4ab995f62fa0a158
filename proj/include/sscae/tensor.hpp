#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "sscae/error.hpp"
#include "sscae/rng.hpp"

namespace sscae {

enum class Precision { fp32, fp64 };

std::string to_string(Precision p);
Precision precision_from_string(const std::string& s);

template <typename T>
constexpr Precision precision_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? Precision::fp32 : Precision::fp64;
}

/// (batch, channels, rows, cols)
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  /// Element count; throws ShapeError when the product does not fit in memory.
  std::size_t size() const;
  std::size_t map_size() const noexcept { return h * w; }

  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense rank-4 array in row-major (n, c, h, w) order.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t offset(std::size_t b, std::size_t c, std::size_t i, std::size_t j) const noexcept {
    return ((b * shape_.c + c) * shape_.h + i) * shape_.w + j;
  }

  T& at(std::size_t b, std::size_t c, std::size_t i, std::size_t j) noexcept {
    return data_[offset(b, c, i, j)];
  }
  const T& at(std::size_t b, std::size_t c, std::size_t i, std::size_t j) const noexcept {
    return data_[offset(b, c, i, j)];
  }

  T& operator[](std::size_t k) noexcept { return data_[k]; }
  const T& operator[](std::size_t k) const noexcept { return data_[k]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  /// Contiguous h*w block of one featuremap.
  std::span<T> map(std::size_t b, std::size_t c) noexcept {
    return std::span<T>(data_).subspan(offset(b, c, 0, 0), shape_.map_size());
  }
  std::span<const T> map(std::size_t b, std::size_t c) const noexcept {
    return std::span<const T>(data_).subspan(offset(b, c, 0, 0), shape_.map_size());
  }

  void fill(T v) noexcept { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    for (T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor& operator+=(const Tensor& o);
  Tensor& operator*=(T s) noexcept {
    for (T& v : data_) v *= s;
    return *this;
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& o) {
  if (o.shape_ != shape_) throw ShapeError("tensor add: " + shape_.str() + " vs " + o.shape_.str());
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
  return *this;
}

template <typename T>
Tensor<T> tensor_new(Shape shape, T fill) {
  return Tensor<T>(shape, fill);
}

/// i.i.d. uniform on [-bound, bound]; advances rng.
template <typename T>
Tensor<T> rand_uniform(Shape shape, double bound, Rng& rng) {
  if (!(bound > 0)) throw ConfigError("rand_uniform: bound must be positive");
  Tensor<T> t(shape);
  for (T& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

/// Sum of a*b over all positions, accumulated in double.
template <typename T>
double inner_product(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("inner_product: " + a.shape().str() + " vs " + b.shape().str());
  double acc = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t k = 0; k < da.size(); ++k) acc += static_cast<double>(da[k]) * db[k];
  return acc;
}

template <typename T>
double squared_norm(std::span<const T> v) {
  double acc = 0.0;
  for (T x : v) acc += static_cast<double>(x) * x;
  return acc;
}

/// Throws NonFiniteError naming `stage` when t holds NaN/Inf.
template <typename T>
void require_finite(const Tensor<T>& t, const std::string& stage) {
  if (!t.all_finite()) throw NonFiniteError(stage, "non-finite values after " + stage);
}

#ifdef NDEBUG
#define SSCAE_DEBUG_FINITE(t, stage) ((void)0)
#else
#define SSCAE_DEBUG_FINITE(t, stage) ::sscae::require_finite((t), (stage))
#endif

}  // namespace sscae
