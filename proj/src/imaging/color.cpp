#include "filmpipe/imaging/color.hpp"

#include <cmath>

namespace filmpipe::imaging {

namespace {

// D65 reference white, normalized to Y = 1.
constexpr double kWhiteX = 0.95047;
constexpr double kWhiteY = 1.0;
constexpr double kWhiteZ = 1.08883;

constexpr double kDelta = 6.0 / 29.0;
constexpr double kDelta3 = kDelta * kDelta * kDelta;

double lab_f(double t) {
  return t > kDelta3 ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double t) {
  return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

}  // namespace

namespace color {

double srgb_to_linear(double c) {
  const double a = std::abs(c);
  const double v = a <= 0.04045 ? a / 12.92 : std::pow((a + 0.055) / 1.055, 2.4);
  return std::copysign(v, c);
}

double linear_to_srgb(double c) {
  const double a = std::abs(c);
  const double v = a <= 0.0031308 ? 12.92 * a : 1.055 * std::pow(a, 1.0 / 2.4) - 0.055;
  return std::copysign(v, c);
}

}  // namespace color

ImageTensor rgb_to_lab(const ImageTensor& rgb) {
  require_channels(rgb, 3, "rgb_to_lab");
  ImageTensor lab(rgb.shape());
  const auto n = static_cast<std::ptrdiff_t>(rgb.shape().plane());
  const float* r = rgb.plane(0);
  const float* g = rgb.plane(1);
  const float* b = rgb.plane(2);
  float* L = lab.plane(0);
  float* A = lab.plane(1);
  float* B = lab.plane(2);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double lr = color::srgb_to_linear(r[i]);
    const double lg = color::srgb_to_linear(g[i]);
    const double lb = color::srgb_to_linear(b[i]);
    const double x = 0.4124564 * lr + 0.3575761 * lg + 0.1804375 * lb;
    const double y = 0.2126729 * lr + 0.7151522 * lg + 0.0721750 * lb;
    const double z = 0.0193339 * lr + 0.1191920 * lg + 0.9503041 * lb;
    const double fx = lab_f(x / kWhiteX);
    const double fy = lab_f(y / kWhiteY);
    const double fz = lab_f(z / kWhiteZ);
    L[i] = static_cast<float>(116.0 * fy - 16.0);
    A[i] = static_cast<float>(500.0 * (fx - fy));
    B[i] = static_cast<float>(200.0 * (fy - fz));
  }
  return lab;
}

ImageTensor lab_to_rgb(const ImageTensor& lab) {
  require_channels(lab, 3, "lab_to_rgb");
  ImageTensor rgb(lab.shape());
  const auto n = static_cast<std::ptrdiff_t>(lab.shape().plane());
  const float* L = lab.plane(0);
  const float* A = lab.plane(1);
  const float* B = lab.plane(2);
  float* r = rgb.plane(0);
  float* g = rgb.plane(1);
  float* b = rgb.plane(2);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double fy = (L[i] + 16.0) / 116.0;
    const double fx = fy + A[i] / 500.0;
    const double fz = fy - B[i] / 200.0;
    const double x = kWhiteX * lab_f_inv(fx);
    const double y = kWhiteY * lab_f_inv(fy);
    const double z = kWhiteZ * lab_f_inv(fz);
    const double lr = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
    const double lg = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
    const double lb = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
    r[i] = static_cast<float>(color::linear_to_srgb(lr));
    g[i] = static_cast<float>(color::linear_to_srgb(lg));
    b[i] = static_cast<float>(color::linear_to_srgb(lb));
  }
  return rgb;
}

ImageTensor rgb_to_gray(const ImageTensor& rgb) {
  require_channels(rgb, 3, "rgb_to_gray");
  ImageTensor gray(1, rgb.height(), rgb.width());
  const auto n = static_cast<std::ptrdiff_t>(rgb.shape().plane());
  const float* r = rgb.plane(0);
  const float* g = rgb.plane(1);
  const float* b = rgb.plane(2);
  float* out = gray.plane(0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = 0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i];
  }
  return gray;
}

}  // namespace filmpipe::imaging
