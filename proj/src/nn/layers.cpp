#include "filmpipe/nn/layers.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "filmpipe/kernels/conv.hpp"

namespace filmpipe::nn {

template <typename T>
Parameter<T>::Parameter(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
  const std::size_t count = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                            std::multiplies<>());
  value.assign(count, T(0));
  grad.assign(count, T(0));
}

template <typename T>
void kaiming_normal(Parameter<T>& p, int fan_in, double gain, Rng& rng) {
  const double stddev = gain / std::sqrt(static_cast<double>(fan_in));
  for (T& v : p.value) {
    v = static_cast<T>(stddev * rng.normal());
  }
}

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel)
    : weight(name + ".weight", {out_channels, in_channels, kernel, kernel}),
      bias(name + ".bias", {out_channels}),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel) {}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  if (x.channels() != in_) {
    throw InvalidInputError(weight.name + ": expected " + std::to_string(in_) +
                            " input channels, got " + std::to_string(x.channels()));
  }
  Tensor<T> out;
  kernels::conv2d_forward<T>(x, weight.value, bias.value, out_, kernel_, out);
  return out;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& x, const Tensor<T>& grad_out, bool param_grads,
                              bool input_grad) {
  Tensor<T> grad_in;
  kernels::conv2d_backward<T>(x, weight.value, out_, kernel_, grad_out,
                              input_grad ? &grad_in : nullptr,
                              param_grads ? std::span<T>(weight.grad) : std::span<T>(),
                              param_grads ? std::span<T>(bias.grad) : std::span<T>());
  return grad_in;
}

template <typename T>
ConvTranspose2x2<T>::ConvTranspose2x2(const std::string& name, int in_channels, int out_channels)
    : weight(name + ".weight", {in_channels, out_channels, 2, 2}),
      bias(name + ".bias", {out_channels}),
      in_(in_channels),
      out_(out_channels) {}

template <typename T>
Tensor<T> ConvTranspose2x2<T>::forward(const Tensor<T>& x) const {
  if (x.channels() != in_) {
    throw InvalidInputError(weight.name + ": expected " + std::to_string(in_) +
                            " input channels, got " + std::to_string(x.channels()));
  }
  Tensor<T> out;
  kernels::conv_transpose2x2_forward<T>(x, weight.value, bias.value, out_, out);
  return out;
}

template <typename T>
Tensor<T> ConvTranspose2x2<T>::backward(const Tensor<T>& x, const Tensor<T>& grad_out,
                                        bool param_grads) {
  Tensor<T> grad_in;
  kernels::conv_transpose2x2_backward<T>(
      x, weight.value, out_, grad_out, &grad_in,
      param_grads ? std::span<T>(weight.grad) : std::span<T>(),
      param_grads ? std::span<T>(bias.grad) : std::span<T>());
  return grad_in;
}

template struct Parameter<float>;
template struct Parameter<double>;
template void kaiming_normal(Parameter<float>&, int, double, Rng&);
template void kaiming_normal(Parameter<double>&, int, double, Rng&);
template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2x2<float>;
template class ConvTranspose2x2<double>;

}  // namespace filmpipe::nn
