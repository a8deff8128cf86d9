#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "filmpipe/core/error.hpp"

namespace filmpipe {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  [[nodiscard]] std::size_t count() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  [[nodiscard]] std::size_t plane() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  [[nodiscard]] std::string str() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" + std::to_string(width);
  }
  bool operator==(const Shape&) const = default;
};

/// Dense channels x height x width array in planar (CHW) layout.
///
/// Image content lives in [0,1]; intermediate network activations and
/// gradients reuse the same container without that range restriction.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.count(), fill) {
    if (shape.channels < 0 || shape.height < 0 || shape.width < 0) {
      throw InvalidInputError("negative tensor dimension " + shape.str());
    }
  }
  Tensor(int channels, int height, int width, T fill = T(0))
      : Tensor(Shape{channels, height, width}, fill) {}

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] int channels() const { return shape_.channels; }
  [[nodiscard]] int height() const { return shape_.height; }
  [[nodiscard]] int width() const { return shape_.width; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  [[nodiscard]] const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  [[nodiscard]] std::span<const T> values() const { return data_; }

  T* plane(int c) { return data_.data() + static_cast<std::size_t>(c) * shape_.plane(); }
  [[nodiscard]] const T* plane(int c) const {
    return data_.data() + static_cast<std::size_t>(c) * shape_.plane();
  }

  T& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
  const T& operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  [[nodiscard]] Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Tensor&) const = default;

 private:
  [[nodiscard]] std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * shape_.height + static_cast<std::size_t>(y)) *
               shape_.width +
           static_cast<std::size_t>(x);
  }

  Shape shape_{};
  std::vector<T> data_;
};

/// The pipeline's image currency: float CHW with values in [0,1].
using ImageTensor = Tensor<float>;

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
void require_channels(const Tensor<T>& t, int channels, const char* op) {
  if (t.channels() != channels) {
    throw InvalidInputError(std::string(op) + ": expected " + std::to_string(channels) +
                            " channels, got " + std::to_string(t.channels()));
  }
}

template <typename A, typename B>
void require_same_shape(const Tensor<A>& a, const Tensor<B>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidInputError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                            b.shape().str());
  }
}

template <typename T>
void require_nonempty(const Tensor<T>& t, const char* op) {
  if (t.height() < 1 || t.width() < 1 || t.channels() < 1) {
    throw InvalidInputError(std::string(op) + ": empty image " + t.shape().str());
  }
}

}  // namespace filmpipe
