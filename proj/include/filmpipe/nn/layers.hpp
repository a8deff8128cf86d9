#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "filmpipe/core/random.hpp"
#include "filmpipe/core/tensor.hpp"

namespace filmpipe::nn {

/// A named, trainable array with its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> s);

  [[nodiscard]] std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

/// Kaiming-normal fan-in initialization: N(0, gain^2 / fan_in).
template <typename T>
void kaiming_normal(Parameter<T>& p, int fan_in, double gain, Rng& rng);

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel);

  [[nodiscard]] Tensor<T> forward(const Tensor<T>& x) const;

  /// Returns dL/dx when input_grad is set; parameter gradients accumulate
  /// when param_grads is set.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& grad_out, bool param_grads,
                     bool input_grad);

  [[nodiscard]] int in_channels() const { return in_; }
  [[nodiscard]] int out_channels() const { return out_; }
  [[nodiscard]] int kernel() const { return kernel_; }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  int in_ = 0;
  int out_ = 0;
  int kernel_ = 3;
};

template <typename T>
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2() = default;
  ConvTranspose2x2(const std::string& name, int in_channels, int out_channels);

  [[nodiscard]] Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& grad_out, bool param_grads);

  [[nodiscard]] int in_channels() const { return in_; }
  [[nodiscard]] int out_channels() const { return out_; }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  int in_ = 0;
  int out_ = 0;
};

template <typename T>
Tensor<T> relu(Tensor<T> x) {
  for (T& v : x.values()) {
    v = v > T(0) ? v : T(0);
  }
  return x;
}

/// Gradient through a ReLU given its output.
template <typename T>
Tensor<T> relu_backward(Tensor<T> grad, const Tensor<T>& relu_out) {
  const T* o = relu_out.data();
  T* g = grad.data();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(o[i] > T(0))) {
      g[i] = T(0);
    }
  }
  return grad;
}

/// Channels [first, first+count) of x.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int first, int count) {
  Tensor<T> out(count, x.height(), x.width());
  std::copy(x.plane(first), x.plane(first) + out.size(), out.data());
  return out;
}

}  // namespace filmpipe::nn
