#include "filmpipe/imaging/filter.hpp"

#include <cmath>
#include <cstddef>
#include <string>

namespace filmpipe::imaging {

GaussianKernel::GaussianKernel(int size, double sigma) : size_(size), sigma_(sigma) {
  if (size < 1 || size % 2 == 0) {
    throw InvalidInputError("GaussianKernel: size must be odd and positive, got " +
                            std::to_string(size));
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InvalidInputError("GaussianKernel: sigma must be positive");
  }
  weights_.resize(static_cast<std::size_t>(size));
  const int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - r;
    weights_[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += weights_[i];
  }
  for (double& w : weights_) {
    w /= sum;
  }
}

int reflect101(int i, int n) {
  if (n == 1) {
    return 0;
  }
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) {
    i += period;
  }
  return i < n ? i : period - i;
}

namespace {

// One separable pass along rows (horizontal == true) or columns. When adjoint
// is set, the transpose of the same linear map is applied instead.
template <typename T>
void blur_pass(const Tensor<T>& src, Tensor<T>& dst, const std::vector<double>& w,
               bool horizontal, bool adjoint) {
  const int C = src.channels();
  const int H = src.height();
  const int W = src.width();
  const int r = static_cast<int>(w.size()) / 2;
  const int len = horizontal ? W : H;
  const int lines = horizontal ? H : W;
  const std::ptrdiff_t stride = horizontal ? 1 : W;
  const std::ptrdiff_t line_step = horizontal ? W : 1;
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(C) * lines;
  dst = Tensor<T>(src.shape());

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t job = 0; job < total; ++job) {
    const int c = static_cast<int>(job / lines);
    const int line = static_cast<int>(job % lines);
    const T* in = src.plane(c) + line * line_step;
    T* out = dst.plane(c) + line * line_step;
    if (!adjoint) {
      for (int i = 0; i < len; ++i) {
        double acc = 0.0;
        for (int t = -r; t <= r; ++t) {
          acc += w[t + r] * static_cast<double>(in[reflect101(i + t, len) * stride]);
        }
        out[i * stride] = static_cast<T>(acc);
      }
    } else {
      std::vector<double> acc(static_cast<std::size_t>(len), 0.0);
      for (int i = 0; i < len; ++i) {
        const double g = in[i * stride];
        for (int t = -r; t <= r; ++t) {
          acc[reflect101(i + t, len)] += w[t + r] * g;
        }
      }
      for (int i = 0; i < len; ++i) {
        out[i * stride] = static_cast<T>(acc[i]);
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& img, const GaussianKernel& kernel) {
  require_nonempty(img, "gaussian_blur");
  if (kernel.size() == 1) {
    return img;
  }
  Tensor<T> tmp;
  Tensor<T> out;
  blur_pass(img, tmp, kernel.weights(), true, false);
  blur_pass(tmp, out, kernel.weights(), false, false);
  return out;
}

template <typename T>
Tensor<T> gaussian_blur_adjoint(const Tensor<T>& grad, const GaussianKernel& kernel) {
  require_nonempty(grad, "gaussian_blur_adjoint");
  if (kernel.size() == 1) {
    return grad;
  }
  // (V H)^T = H^T V^T: undo the vertical pass first.
  Tensor<T> tmp;
  Tensor<T> out;
  blur_pass(grad, tmp, kernel.weights(), false, true);
  blur_pass(tmp, out, kernel.weights(), true, true);
  return out;
}

namespace reference {

template <typename T>
Tensor<T> gaussian_blur(const Tensor<T>& img, const GaussianKernel& kernel) {
  require_nonempty(img, "gaussian_blur");
  const auto& w = kernel.weights();
  const int r = kernel.radius();
  Tensor<T> out(img.shape());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          for (int dx = -r; dx <= r; ++dx) {
            acc += w[dy + r] * w[dx + r] *
                   img(c, reflect101(y + dy, img.height()), reflect101(x + dx, img.width()));
          }
        }
        out(c, y, x) = static_cast<T>(acc);
      }
    }
  }
  return out;
}

template Tensor<float> gaussian_blur(const Tensor<float>&, const GaussianKernel&);
template Tensor<double> gaussian_blur(const Tensor<double>&, const GaussianKernel&);

}  // namespace reference

template Tensor<float> gaussian_blur(const Tensor<float>&, const GaussianKernel&);
template Tensor<double> gaussian_blur(const Tensor<double>&, const GaussianKernel&);
template Tensor<float> gaussian_blur_adjoint(const Tensor<float>&, const GaussianKernel&);
template Tensor<double> gaussian_blur_adjoint(const Tensor<double>&, const GaussianKernel&);

}  // namespace filmpipe::imaging
