#pragma once

// Dense layer kernels used by the translation network and the frozen
// feature extractors. Two implementations share each signature:
//
//   kernels::            parallel path (OpenMP loops + Eigen GEMM)
//   kernels::reference:: direct nested loops, serial
//
// The reference path is the test oracle and the benchmark baseline. Both
// use batch size 1 and CHW tensors; gradient outputs for weights and biases
// are accumulated (+=), input gradients are overwritten.

#include <cstdint>
#include <span>
#include <vector>

#include "filmpipe/core/tensor.hpp"

namespace filmpipe::kernels {

/// Stride-1 convolution with zero padding of kernel/2 on every side, so the
/// output keeps the input's spatial size. Weight layout is
/// [out][in][kernel][kernel]; kernel must be odd.
template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias,
                    int out_channels, int kernel, Tensor<T>& out);

/// Any of grad_in / grad_weight / grad_bias may be null / empty to skip it.
template <typename T>
void conv2d_backward(const Tensor<T>& in, std::span<const T> weight, int out_channels,
                     int kernel, const Tensor<T>& grad_out, Tensor<T>* grad_in,
                     std::span<T> grad_weight, std::span<T> grad_bias);

/// 2x2 transposed convolution with stride 2 (exact 2x upsampling). Weight
/// layout is [in][out][2][2].
template <typename T>
void conv_transpose2x2_forward(const Tensor<T>& in, std::span<const T> weight,
                               std::span<const T> bias, int out_channels, Tensor<T>& out);

template <typename T>
void conv_transpose2x2_backward(const Tensor<T>& in, std::span<const T> weight, int out_channels,
                                const Tensor<T>& grad_out, Tensor<T>* grad_in,
                                std::span<T> grad_weight, std::span<T> grad_bias);

/// 2x2 max pooling, stride 2, floor semantics for odd sizes. argmax records
/// the winning in-plane offset of every output element.
template <typename T>
void maxpool2x2_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<std::uint32_t>* argmax);

template <typename T>
void maxpool2x2_backward(const Tensor<T>& grad_out, const std::vector<std::uint32_t>& argmax,
                         Shape in_shape, Tensor<T>& grad_in);

namespace reference {

template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias,
                    int out_channels, int kernel, Tensor<T>& out);

template <typename T>
void conv2d_backward(const Tensor<T>& in, std::span<const T> weight, int out_channels,
                     int kernel, const Tensor<T>& grad_out, Tensor<T>* grad_in,
                     std::span<T> grad_weight, std::span<T> grad_bias);

template <typename T>
void conv_transpose2x2_forward(const Tensor<T>& in, std::span<const T> weight,
                               std::span<const T> bias, int out_channels, Tensor<T>& out);

template <typename T>
void conv_transpose2x2_backward(const Tensor<T>& in, std::span<const T> weight, int out_channels,
                                const Tensor<T>& grad_out, Tensor<T>* grad_in,
                                std::span<T> grad_weight, std::span<T> grad_bias);

template <typename T>
void maxpool2x2_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<std::uint32_t>* argmax);

}  // namespace reference

}  // namespace filmpipe::kernels
