#pragma once

#include <vector>

#include "filmpipe/core/tensor.hpp"

namespace filmpipe::imaging {

/// Separable, normalized Gaussian kernel of odd size.
class GaussianKernel {
 public:
  /// Throws InvalidInputError when size is even or non-positive, or sigma <= 0.
  GaussianKernel(int size, double sigma);

  /// Kernel used by the color loss.
  static GaussianKernel color_loss_default() { return {7, 3.0}; }

  [[nodiscard]] int size() const { return size_; }
  [[nodiscard]] int radius() const { return size_ / 2; }
  [[nodiscard]] double sigma() const { return sigma_; }
  /// 1-D weights; the 2-D kernel is their outer product.
  [[nodiscard]] const std::vector<double>& weights() const { return weights_; }

 private:
  int size_;
  double sigma_;
  std::vector<double> weights_;
};

/// Reflect-101 index folding ("dcb|abcd|cba"); valid for any n >= 1.
int reflect101(int i, int n);

/// Gaussian blur with reflect-101 borders, separable implementation.
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& img, const GaussianKernel& kernel);

/// Adjoint of gaussian_blur (differs from the blur only near borders).
/// Used to back-propagate through the color loss.
template <typename T>
Tensor<T> gaussian_blur_adjoint(const Tensor<T>& grad, const GaussianKernel& kernel);

namespace reference {

/// Direct 2-D evaluation of the blur, serial. Kept for testing the separable path.
template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& img, const GaussianKernel& kernel);

}  // namespace reference

}  // namespace filmpipe::imaging
