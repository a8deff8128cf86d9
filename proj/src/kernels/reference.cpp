#include "filmpipe/kernels/conv.hpp"

namespace filmpipe::kernels::reference {

template <typename T>
void conv2d_forward(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias,
                    int out_channels, int kernel, Tensor<T>& out) {
  const int Cin = in.channels();
  const int H = in.height();
  const int W = in.width();
  const int pad = kernel / 2;
  if (weight.size() != static_cast<std::size_t>(out_channels) * Cin * kernel * kernel) {
    throw InvalidInputError("reference::conv2d_forward: weight size mismatch");
  }
  out = Tensor<T>(out_channels, H, W);
  for (int co = 0; co < out_channels; ++co) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        double acc = bias.empty() ? 0.0 : static_cast<double>(bias[co]);
        for (int ci = 0; ci < Cin; ++ci) {
          for (int ky = 0; ky < kernel; ++ky) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= H) {
              continue;
            }
            for (int kx = 0; kx < kernel; ++kx) {
              const int sx = x + kx - pad;
              if (sx < 0 || sx >= W) {
                continue;
              }
              acc += static_cast<double>(
                         weight[((static_cast<std::size_t>(co) * Cin + ci) * kernel + ky) *
                                    kernel +
                                kx]) *
                     in(ci, sy, sx);
            }
          }
        }
        out(co, y, x) = static_cast<T>(acc);
      }
    }
  }
}

template <typename T>
void conv2d_backward(const Tensor<T>& in, std::span<const T> weight, int out_channels,
                     int kernel, const Tensor<T>& grad_out, Tensor<T>* grad_in,
                     std::span<T> grad_weight, std::span<T> grad_bias) {
  const int Cin = in.channels();
  const int H = in.height();
  const int W = in.width();
  const int pad = kernel / 2;
  if (grad_in != nullptr) {
    *grad_in = Tensor<T>(in.shape());
  }
  for (int co = 0; co < out_channels; ++co) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const T g = grad_out(co, y, x);
        if (!grad_bias.empty()) {
          grad_bias[co] += g;
        }
        for (int ci = 0; ci < Cin; ++ci) {
          for (int ky = 0; ky < kernel; ++ky) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= H) {
              continue;
            }
            for (int kx = 0; kx < kernel; ++kx) {
              const int sx = x + kx - pad;
              if (sx < 0 || sx >= W) {
                continue;
              }
              const std::size_t wi =
                  ((static_cast<std::size_t>(co) * Cin + ci) * kernel + ky) * kernel + kx;
              if (!grad_weight.empty()) {
                grad_weight[wi] += g * in(ci, sy, sx);
              }
              if (grad_in != nullptr) {
                (*grad_in)(ci, sy, sx) += g * weight[wi];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_transpose2x2_forward(const Tensor<T>& in, std::span<const T> weight,
                               std::span<const T> bias, int out_channels, Tensor<T>& out) {
  const int Cin = in.channels();
  out = Tensor<T>(out_channels, 2 * in.height(), 2 * in.width());
  for (int co = 0; co < out_channels; ++co) {
    for (int oy = 0; oy < out.height(); ++oy) {
      for (int ox = 0; ox < out.width(); ++ox) {
        const int t = (oy % 2) * 2 + (ox % 2);
        double acc = bias.empty() ? 0.0 : static_cast<double>(bias[co]);
        for (int ci = 0; ci < Cin; ++ci) {
          acc += static_cast<double>(
                     weight[(static_cast<std::size_t>(ci) * out_channels + co) * 4 + t]) *
                 in(ci, oy / 2, ox / 2);
        }
        out(co, oy, ox) = static_cast<T>(acc);
      }
    }
  }
}

template <typename T>
void conv_transpose2x2_backward(const Tensor<T>& in, std::span<const T> weight, int out_channels,
                                const Tensor<T>& grad_out, Tensor<T>* grad_in,
                                std::span<T> grad_weight, std::span<T> grad_bias) {
  const int Cin = in.channels();
  if (grad_in != nullptr) {
    *grad_in = Tensor<T>(in.shape());
  }
  for (int co = 0; co < out_channels; ++co) {
    for (int oy = 0; oy < grad_out.height(); ++oy) {
      for (int ox = 0; ox < grad_out.width(); ++ox) {
        const int t = (oy % 2) * 2 + (ox % 2);
        const T g = grad_out(co, oy, ox);
        if (!grad_bias.empty()) {
          grad_bias[co] += g;
        }
        for (int ci = 0; ci < Cin; ++ci) {
          const std::size_t wi = (static_cast<std::size_t>(ci) * out_channels + co) * 4 + t;
          if (!grad_weight.empty()) {
            grad_weight[wi] += g * in(ci, oy / 2, ox / 2);
          }
          if (grad_in != nullptr) {
            (*grad_in)(ci, oy / 2, ox / 2) += g * weight[wi];
          }
        }
      }
    }
  }
}

template <typename T>
void maxpool2x2_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<std::uint32_t>* argmax) {
  const int oh = in.height() / 2;
  const int ow = in.width() / 2;
  out = Tensor<T>(in.channels(), oh, ow);
  if (argmax != nullptr) {
    argmax->assign(out.size(), 0);
  }
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        int by = 2 * y;
        int bx = 2 * x;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            if (in(c, 2 * y + dy, 2 * x + dx) > in(c, by, bx)) {
              by = 2 * y + dy;
              bx = 2 * x + dx;
            }
          }
        }
        out(c, y, x) = in(c, by, bx);
        if (argmax != nullptr) {
          (*argmax)[(static_cast<std::size_t>(c) * oh + y) * ow + x] =
              static_cast<std::uint32_t>(by * in.width() + bx);
        }
      }
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
  template void maxpool2x2_forward<T>(const Tensor<T>&, Tensor<T>&, std::vector<std::uint32_t>*);

FILMPIPE_INSTANTIATE(float)
FILMPIPE_INSTANTIATE(double)
#undef FILMPIPE_INSTANTIATE

}  // namespace filmpipe::kernels::reference
