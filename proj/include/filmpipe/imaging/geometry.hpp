#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "filmpipe/core/tensor.hpp"
#include "filmpipe/imaging/filter.hpp"

namespace filmpipe::imaging {

struct Rect {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;

  [[nodiscard]] long long area() const { return static_cast<long long>(height) * width; }
  bool operator==(const Rect&) const = default;
};

/// Copies the window [top, top+h) x [left, left+w). The window must lie inside the image.
template <typename T>
Tensor<T> crop(const Tensor<T>& img, int top, int left, int h, int w) {
  if (h < 1 || w < 1 || top < 0 || left < 0 || top + h > img.height() ||
      left + w > img.width()) {
    throw InvalidInputError("crop: window (" + std::to_string(top) + "," + std::to_string(left) +
                            "," + std::to_string(h) + "," + std::to_string(w) +
                            ") outside image " + img.shape().str());
  }
  Tensor<T> out(img.channels(), h, w);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      std::memcpy(&out(c, y, 0), &img(c, top + y, left), sizeof(T) * static_cast<std::size_t>(w));
    }
  }
  return out;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& img, const Rect& r) {
  return crop(img, r.top, r.left, r.height, r.width);
}

/// Writes patch into dst at (top, left); the inverse of crop.
template <typename T>
void embed(Tensor<T>& dst, const Tensor<T>& patch, int top, int left) {
  if (patch.channels() != dst.channels() || top < 0 || left < 0 ||
      top + patch.height() > dst.height() || left + patch.width() > dst.width()) {
    throw InvalidInputError("embed: patch " + patch.shape().str() + " does not fit " +
                            dst.shape().str());
  }
  for (int c = 0; c < patch.channels(); ++c) {
    for (int y = 0; y < patch.height(); ++y) {
      std::memcpy(&dst(c, top + y, left), &patch(c, y, 0),
                  sizeof(T) * static_cast<std::size_t>(patch.width()));
    }
  }
}

/// Bilinear resize with half-pixel centers (align_corners = false); source
/// coordinates are clamped at the borders, so every output is a convex
/// combination of input samples.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& img, int h, int w) {
  if (h < 1 || w < 1) {
    throw InvalidInputError("resize_bilinear: target dims must be positive, got " +
                            std::to_string(h) + "x" + std::to_string(w));
  }
  require_nonempty(img, "resize_bilinear");
  const int H = img.height();
  const int W = img.width();
  const double sy = static_cast<double>(H) / h;
  const double sx = static_cast<double>(W) / w;

  struct Tap {
    int i0, i1;
    double frac;
  };
  auto taps = [](int n_out, int n_in, double scale) {
    std::vector<Tap> out(static_cast<std::size_t>(n_out));
    for (int i = 0; i < n_out; ++i) {
      double src = (i + 0.5) * scale - 0.5;
      src = std::max(src, 0.0);
      int i0 = static_cast<int>(std::floor(src));
      i0 = std::min(i0, n_in - 1);
      const int i1 = std::min(i0 + 1, n_in - 1);
      out[i] = {i0, i1, src - i0};
    }
    return out;
  };
  const auto ty = taps(h, H, sy);
  const auto tx = taps(w, W, sx);

  Tensor<T> out(img.channels(), h, w);
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(img.channels()) * h;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t job = 0; job < rows; ++job) {
    const int c = static_cast<int>(job / h);
    const int y = static_cast<int>(job % h);
    const Tap& vy = ty[y];
    for (int x = 0; x < w; ++x) {
      const Tap& vx = tx[x];
      const double top = (1.0 - vx.frac) * img(c, vy.i0, vx.i0) + vx.frac * img(c, vy.i0, vx.i1);
      const double bot = (1.0 - vx.frac) * img(c, vy.i1, vx.i0) + vx.frac * img(c, vy.i1, vx.i1);
      out(c, y, x) = static_cast<T>((1.0 - vy.frac) * top + vy.frac * bot);
    }
  }
  return out;
}

/// Reflect-101 padding on the bottom and right edges.
template <typename T>
Tensor<T> pad_reflect(const Tensor<T>& img, int pad_bottom, int pad_right) {
  if (pad_bottom < 0 || pad_right < 0) {
    throw InvalidInputError("pad_reflect: negative padding");
  }
  if (pad_bottom == 0 && pad_right == 0) {
    return img;
  }
  const int H = img.height();
  const int W = img.width();
  Tensor<T> out(img.channels(), H + pad_bottom, W + pad_right);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      const int sy = reflect101(y, H);
      for (int x = 0; x < out.width(); ++x) {
        out(c, y, x) = img(c, sy, reflect101(x, W));
      }
    }
  }
  return out;
}

/// Stacks the channels of a and b (same spatial size).
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw InvalidInputError("concat_channels: spatial mismatch " + a.shape().str() + " vs " +
                            b.shape().str());
  }
  Tensor<T> out(a.channels() + b.channels(), a.height(), a.width());
  std::copy(a.values().begin(), a.values().end(), out.data());
  std::copy(b.values().begin(), b.values().end(), out.data() + a.size());
  return out;
}

template <typename T>
Tensor<T> clamp01(Tensor<T> img) {
  for (T& v : img.values()) {
    v = std::clamp(v, T(0), T(1));
  }
  return img;
}

}  // namespace filmpipe::imaging
