#include "filmpipe/kernels/conv.hpp"

#include <Eigen/Core>
#include <cstring>
#include <string>

namespace filmpipe::kernels {

namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using StridedMap = Eigen::Map<MatRM<T>, 0, Eigen::OuterStride<>>;

template <typename T>
using ConstStridedMap = Eigen::Map<const MatRM<T>, 0, Eigen::OuterStride<>>;

void check_conv_args(const Shape& in, std::size_t weight_size, std::size_t bias_size,
                     int out_channels, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw InvalidInputError("conv2d: kernel must be odd, got " + std::to_string(kernel));
  }
  const std::size_t expected =
      static_cast<std::size_t>(out_channels) * in.channels * kernel * kernel;
  if (weight_size != expected) {
    throw InvalidInputError("conv2d: weight has " + std::to_string(weight_size) +
                            " values, expected " + std::to_string(expected) + " for input " +
                            in.str());
  }
  if (bias_size != 0 && bias_size != static_cast<std::size_t>(out_channels)) {
    throw InvalidInputError("conv2d: bias size mismatch");
  }
}

// The convolution is evaluated on a zero-padded copy of the input, treating
// every row as Wp = W + 2*pad wide. Shifting the flat padded buffer by
// ky*Wp + kx turns each kernel tap into one GEMM over Cin x (H*Wp); the
// output columns x >= W of each row are junk and discarded. The buffer gets
// 2*pad elements of slack so the last channel's shifted view stays in bounds.
struct PaddedLayout {
  int pad, Hp, Wp;
  Eigen::Index plane, cols;
  std::size_t buffer;

  PaddedLayout(const Shape& s, int kernel) {
    pad = kernel / 2;
    Hp = s.height + 2 * pad;
    Wp = s.width + 2 * pad;
    plane = static_cast<Eigen::Index>(Hp) * Wp;
    cols = static_cast<Eigen::Index>(s.height) * Wp;
    buffer = static_cast<std::size_t>(s.channels) * plane + 2 * pad;
  }
  [[nodiscard]] std::ptrdiff_t tap_offset(int ky, int kx) const {
    return static_cast<std::ptrdiff_t>(ky) * Wp + kx;
  }
};

template <typename T>
std::vector<T> make_padded(const Tensor<T>& in, const PaddedLayout& L) {
  std::vector<T> padded(L.buffer, T(0));
  const int C = in.channels();
  const int H = in.height();
  const int W = in.width();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H; ++y) {
      std::memcpy(padded.data() + c * L.plane + static_cast<std::ptrdiff_t>(y + L.pad) * L.Wp +
                      L.pad,
                  in.plane(c) + static_cast<std::ptrdiff_t>(y) * W, sizeof(T) * W);
    }
  }
  return padded;
}

// Weight tap (ky, kx) as a dense Cout x Cin matrix.
template <typename T>
MatRM<T> conv_tap(std::span<const T> weight, int cout, int cin, int kernel, int ky, int kx) {
  MatRM<T> wt(cout, cin);
  for (int co = 0; co < cout; ++co) {
    for (int ci = 0; ci < cin; ++ci) {
      wt(co, ci) = weight[((static_cast<std::size_t>(co) * cin + ci) * kernel + ky) * kernel + kx];
    }
  }
  return wt;
}

// Weight tap t = 2*dy + dx of a transposed conv as a dense Cout x Cin matrix.
template <typename T>
MatRM<T> transpose_tap(std::span<const T> weight, int cout, int cin, int t) {
  MatRM<T> wt(cout, cin);
  for (int ci = 0; ci < cin; ++ci) {
    for (int co = 0; co < cout; ++co) {
      wt(co, ci) = weight[(static_cast<std::size_t>(ci) * cout + co) * 4 + t];
    }
  }
  return wt;
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias,
                    int out_channels, int kernel, Tensor<T>& out) {
  check_conv_args(in.shape(), weight.size(), bias.size(), out_channels, kernel);
  const int Cin = in.channels();
  const int H = in.height();
  const int W = in.width();
  const PaddedLayout L(in.shape(), kernel);
  const std::vector<T> padded = make_padded(in, L);

  MatRM<T> acc(out_channels, L.cols);
  for (int co = 0; co < out_channels; ++co) {
    acc.row(co).setConstant(bias.empty() ? T(0) : bias[co]);
  }
  for (int ky = 0; ky < kernel; ++ky) {
    for (int kx = 0; kx < kernel; ++kx) {
      const MatRM<T> wt = conv_tap(weight, out_channels, Cin, kernel, ky, kx);
      ConstStridedMap<T> x(padded.data() + L.tap_offset(ky, kx), Cin, L.cols,
                           Eigen::OuterStride<>(L.plane));
      acc.noalias() += wt * x;
    }
  }

  out = Tensor<T>(out_channels, H, W);
#pragma omp parallel for schedule(static)
  for (int co = 0; co < out_channels; ++co) {
    for (int y = 0; y < H; ++y) {
      std::memcpy(out.plane(co) + static_cast<std::ptrdiff_t>(y) * W,
                  acc.data() + co * L.cols + static_cast<std::ptrdiff_t>(y) * L.Wp,
                  sizeof(T) * W);
    }
  }
}

template <typename T>
void conv2d_backward(const Tensor<T>& in, std::span<const T> weight, int out_channels,
                     int kernel, const Tensor<T>& grad_out, Tensor<T>* grad_in,
                     std::span<T> grad_weight, std::span<T> grad_bias) {
  check_conv_args(in.shape(), weight.size(), 0, out_channels, kernel);
  const int Cin = in.channels();
  const int H = in.height();
  const int W = in.width();
  if (grad_out.shape() != Shape{out_channels, H, W}) {
    throw InvalidInputError("conv2d_backward: grad shape " + grad_out.shape().str());
  }
  const PaddedLayout L(in.shape(), kernel);

  // Gradient in the padded-width layout; junk columns stay zero.
  MatRM<T> g = MatRM<T>::Zero(out_channels, L.cols);
#pragma omp parallel for schedule(static)
  for (int co = 0; co < out_channels; ++co) {
    for (int y = 0; y < H; ++y) {
      std::memcpy(g.data() + co * L.cols + static_cast<std::ptrdiff_t>(y) * L.Wp,
                  grad_out.plane(co) + static_cast<std::ptrdiff_t>(y) * W, sizeof(T) * W);
    }
  }

  if (!grad_bias.empty()) {
    for (int co = 0; co < out_channels; ++co) {
      double s = 0.0;
      const T* p = grad_out.plane(co);
      for (std::size_t i = 0; i < grad_out.shape().plane(); ++i) {
        s += p[i];
      }
      grad_bias[co] += static_cast<T>(s);
    }
  }

  if (!grad_weight.empty()) {
    const std::vector<T> padded = make_padded(in, L);
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        ConstStridedMap<T> x(padded.data() + L.tap_offset(ky, kx), Cin, L.cols,
                             Eigen::OuterStride<>(L.plane));
        const MatRM<T> gw = g * x.transpose();
        for (int co = 0; co < out_channels; ++co) {
          for (int ci = 0; ci < Cin; ++ci) {
            grad_weight[((static_cast<std::size_t>(co) * Cin + ci) * kernel + ky) * kernel + kx] +=
                gw(co, ci);
          }
        }
      }
    }
  }

  if (grad_in != nullptr) {
    std::vector<T> dpad(L.buffer, T(0));
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const MatRM<T> wt = conv_tap(weight, out_channels, Cin, kernel, ky, kx);
        StridedMap<T> dx(dpad.data() + L.tap_offset(ky, kx), Cin, L.cols,
                         Eigen::OuterStride<>(L.plane));
        dx.noalias() += wt.transpose() * g;
      }
    }
    *grad_in = Tensor<T>(in.shape());
#pragma omp parallel for schedule(static)
    for (int c = 0; c < Cin; ++c) {
      for (int y = 0; y < H; ++y) {
        std::memcpy(grad_in->plane(c) + static_cast<std::ptrdiff_t>(y) * W,
                    dpad.data() + c * L.plane + static_cast<std::ptrdiff_t>(y + L.pad) * L.Wp +
                        L.pad,
                    sizeof(T) * W);
      }
    }
  }
}

template <typename T>
void conv_transpose2x2_forward(const Tensor<T>& in, std::span<const T> weight,
                               std::span<const T> bias, int out_channels, Tensor<T>& out) {
  const int Cin = in.channels();
  const int h = in.height();
  const int w = in.width();
  if (weight.size() != static_cast<std::size_t>(Cin) * out_channels * 4) {
    throw InvalidInputError("conv_transpose2x2: weight size mismatch for input " +
                            in.shape().str());
  }
  const Eigen::Index n = static_cast<Eigen::Index>(h) * w;
  Eigen::Map<const MatRM<T>> x(in.data(), Cin, n);
  out = Tensor<T>(out_channels, 2 * h, 2 * w);
  for (int t = 0; t < 4; ++t) {
    const int dy = t / 2;
    const int dx = t % 2;
    const MatRM<T> y = transpose_tap(weight, out_channels, Cin, t) * x;
#pragma omp parallel for schedule(static)
    for (int co = 0; co < out_channels; ++co) {
      const T b = bias.empty() ? T(0) : bias[co];
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          out(co, 2 * i + dy, 2 * j + dx) = y(co, static_cast<Eigen::Index>(i) * w + j) + b;
        }
      }
    }
  }
}

template <typename T>
void conv_transpose2x2_backward(const Tensor<T>& in, std::span<const T> weight, int out_channels,
                                const Tensor<T>& grad_out, Tensor<T>* grad_in,
                                std::span<T> grad_weight, std::span<T> grad_bias) {
  const int Cin = in.channels();
  const int h = in.height();
  const int w = in.width();
  if (grad_out.shape() != Shape{out_channels, 2 * h, 2 * w}) {
    throw InvalidInputError("conv_transpose2x2_backward: grad shape " + grad_out.shape().str());
  }
  const Eigen::Index n = static_cast<Eigen::Index>(h) * w;
  Eigen::Map<const MatRM<T>> x(in.data(), Cin, n);
  MatRM<T> gin;
  if (grad_in != nullptr) {
    gin = MatRM<T>::Zero(Cin, n);
  }
  MatRM<T> g(out_channels, n);
  for (int t = 0; t < 4; ++t) {
    const int dy = t / 2;
    const int dx = t % 2;
#pragma omp parallel for schedule(static)
    for (int co = 0; co < out_channels; ++co) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          g(co, static_cast<Eigen::Index>(i) * w + j) = grad_out(co, 2 * i + dy, 2 * j + dx);
        }
      }
    }
    if (grad_in != nullptr) {
      gin.noalias() += transpose_tap(weight, out_channels, Cin, t).transpose() * g;
    }
    if (!grad_weight.empty()) {
      const MatRM<T> gw = g * x.transpose();
      for (int ci = 0; ci < Cin; ++ci) {
        for (int co = 0; co < out_channels; ++co) {
          grad_weight[(static_cast<std::size_t>(ci) * out_channels + co) * 4 + t] += gw(co, ci);
        }
      }
    }
  }
  if (!grad_bias.empty()) {
    for (int co = 0; co < out_channels; ++co) {
      double s = 0.0;
      const T* p = grad_out.plane(co);
      for (std::size_t i = 0; i < grad_out.shape().plane(); ++i) {
        s += p[i];
      }
      grad_bias[co] += static_cast<T>(s);
    }
  }
  if (grad_in != nullptr) {
    *grad_in = Tensor<T>(in.shape());
    std::memcpy(grad_in->data(), gin.data(), sizeof(T) * grad_in->size());
  }
}

template <typename T>
void maxpool2x2_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<std::uint32_t>* argmax) {
  const int C = in.channels();
  const int W = in.width();
  const int oh = in.height() / 2;
  const int ow = in.width() / 2;
  if (oh < 1 || ow < 1) {
    throw InvalidInputError("maxpool2x2: input too small " + in.shape().str());
  }
  out = Tensor<T>(C, oh, ow);
  if (argmax != nullptr) {
    argmax->assign(out.size(), 0);
  }
#pragma omp parallel for schedule(static)
  for (int c = 0; c < C; ++c) {
    const T* p = in.plane(c);
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        std::uint32_t best = static_cast<std::uint32_t>(2 * y * W + 2 * x);
        for (std::uint32_t cand : {best + 1, best + static_cast<std::uint32_t>(W),
                                   best + static_cast<std::uint32_t>(W) + 1}) {
          if (p[cand] > p[best]) {
            best = cand;
          }
        }
        const std::size_t o = (static_cast<std::size_t>(c) * oh + y) * ow + x;
        out.data()[o] = p[best];
        if (argmax != nullptr) {
          (*argmax)[o] = best;
        }
      }
    }
  }
}

template <typename T>
void maxpool2x2_backward(const Tensor<T>& grad_out, const std::vector<std::uint32_t>& argmax,
                         Shape in_shape, Tensor<T>& grad_in) {
  if (argmax.size() != grad_out.size()) {
    throw InvalidInputError("maxpool2x2_backward: argmax size mismatch");
  }
  grad_in = Tensor<T>(in_shape);
  const std::size_t per_out = grad_out.shape().plane();
#pragma omp parallel for schedule(static)
  for (int c = 0; c < grad_out.channels(); ++c) {
    T* dst = grad_in.plane(c);
    const T* g = grad_out.plane(c);
    const std::uint32_t* a = argmax.data() + c * per_out;
    for (std::size_t i = 0; i < per_out; ++i) {
      dst[a[i]] += g[i];
    }
  }
}

#define FILMPIPE_INSTANTIATE(T)                                                                  \
  template void conv2d_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, int, \
                                  int, Tensor<T>&);                                              \
  template void conv2d_backward<T>(const Tensor<T>&, std::span<const T>, int, int,               \
                                   const Tensor<T>&, Tensor<T>*, std::span<T>, std::span<T>);    \
  template void conv_transpose2x2_forward<T>(const Tensor<T>&, std::span<const T>,              \
                                             std::span<const T>, int, Tensor<T>&);              \
  template void conv_transpose2x2_backward<T>(const Tensor<T>&, std::span<const T>, int,        \
                                              const Tensor<T>&, Tensor<T>*, std::span<T>,       \
                                              std::span<T>);                                     \
  template void maxpool2x2_forward<T>(const Tensor<T>&, Tensor<T>&,                             \
                                      std::vector<std::uint32_t>*);                             \
  template void maxpool2x2_backward<T>(const Tensor<T>&, const std::vector<std::uint32_t>&,     \
                                       Shape, Tensor<T>&);

FILMPIPE_INSTANTIATE(float)
FILMPIPE_INSTANTIATE(double)
#undef FILMPIPE_INSTANTIATE

}  // namespace filmpipe::kernels
