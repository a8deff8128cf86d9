#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "filmpipe/core/random.hpp"
#include "filmpipe/core/tensor.hpp"

namespace testing {

template <typename T = float>
filmpipe::Tensor<T> random_tensor(int c, int h, int w, std::uint64_t seed, double lo = 0.0,
                                  double hi = 1.0) {
  filmpipe::Rng rng(seed);
  filmpipe::Tensor<T> t(c, h, w);
  for (T& v : t.values()) {
    v = static_cast<T>(rng.uniform(lo, hi));
  }
  return t;
}

/// Smooth synthetic "photo": overlapping blobs and a gradient, plus mild texture.
inline filmpipe::ImageTensor synthetic_scene(int h, int w, std::uint64_t seed) {
  filmpipe::Rng rng(seed);
  filmpipe::ImageTensor img(3, h, w);
  struct Blob {
    double cy, cx, r, col[3];
  };
  std::vector<Blob> blobs;
  for (int i = 0; i < 40; ++i) {
    blobs.push_back({rng.uniform(0, h), rng.uniform(0, w), rng.uniform(0.03, 0.15) * std::min(h, w),
                     {rng.uniform(), rng.uniform(), rng.uniform()}});
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double px[3] = {0.3 + 0.3 * x / w, 0.35, 0.3 + 0.3 * y / h};
      for (const auto& b : blobs) {
        const double d2 = ((y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx)) / (b.r * b.r);
        if (d2 < 1.0) {
          for (int c = 0; c < 3; ++c) {
            px[c] = 0.5 * px[c] + 0.5 * b.col[c];
          }
        }
      }
      const double tex = 0.04 * std::sin(0.9 * x + 0.3 * y) * std::cos(0.5 * y - 0.2 * x);
      for (int c = 0; c < 3; ++c) {
        img(c, y, x) = static_cast<float>(std::clamp(px[c] + tex, 0.0, 1.0));
      }
    }
  }
  return img;
}

/// Corner-rich scene for registration tests: rotated rectangles and triangles
/// over a gradient, 2x2 supersampled.
inline filmpipe::ImageTensor feature_scene(int h, int w, std::uint64_t seed, int shapes = 120) {
  filmpipe::Rng rng(seed);
  struct Poly {
    double px[4], py[4];
    int n;
    double col[3];
  };
  std::vector<Poly> polys;
  for (int i = 0; i < shapes; ++i) {
    Poly p{};
    p.n = rng.uniform() < 0.3 ? 3 : 4;
    const double cx = rng.uniform(0, w), cy = rng.uniform(0, h);
    const double r = rng.uniform(0.02, 0.09) * std::min(h, w);
    const double a0 = rng.uniform(0, 6.283185307179586);
    for (int k = 0; k < p.n; ++k) {
      const double a = a0 + k * 6.283185307179586 / p.n + rng.uniform(-0.3, 0.3);
      const double rr = r * rng.uniform(0.6, 1.4);
      p.px[k] = cx + rr * std::cos(a);
      p.py[k] = cy + rr * std::sin(a);
    }
    for (double& c : p.col) c = rng.uniform(0.05, 0.95);
    polys.push_back(p);
  }
  auto inside = [](const Poly& p, double x, double y) {
    bool in = false;
    for (int i = 0, j = p.n - 1; i < p.n; j = i++) {
      if ((p.py[i] > y) != (p.py[j] > y) &&
          x < (p.px[j] - p.px[i]) * (y - p.py[i]) / (p.py[j] - p.py[i]) + p.px[i])
        in = !in;
    }
    return in;
  };
  filmpipe::ImageTensor img(3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc[3] = {0, 0, 0};
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const double fx = x - 0.25 + 0.5 * sx, fy = y - 0.25 + 0.5 * sy;
          double px[3] = {0.2 + 0.5 * fx / w, 0.45, 0.7 - 0.5 * fy / h};
          for (const auto& p : polys) {
            if (inside(p, fx, fy))
              for (int c = 0; c < 3; ++c) px[c] = p.col[c];
          }
          for (int c = 0; c < 3; ++c) acc[c] += px[c] / 4;
        }
      }
      for (int c = 0; c < 3; ++c) img(c, y, x) = static_cast<float>(acc[c]);
    }
  }
  return img;
}

struct GradCheck {
  double rel_l2 = 0.0;    // ||a - n|| / ||n||
  double max_rel = 0.0;   // max |a - n| / max(|n|_inf, tiny)
};

/// Central differences of f at x over the listed indices (all when empty).
inline GradCheck check_gradient(std::span<double> x, const std::vector<double>& analytic,
                                const std::function<double()>& f,
                                std::vector<std::size_t> indices = {}, double eps = 1e-6) {
  if (indices.empty()) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      indices.push_back(i);
    }
  }
  double num2 = 0.0;
  double diff2 = 0.0;
  double ninf = 0.0;
  std::vector<double> numeric;
  for (std::size_t i : indices) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double fp = f();
    x[i] = saved - eps;
    const double fm = f();
    x[i] = saved;
    numeric.push_back((fp - fm) / (2 * eps));
    ninf = std::max(ninf, std::abs(numeric.back()));
  }
  GradCheck r;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const double d = analytic[indices[k]] - numeric[k];
    num2 += numeric[k] * numeric[k];
    diff2 += d * d;
    r.max_rel = std::max(r.max_rel, std::abs(d) / std::max(ninf, 1e-30));
  }
  r.rel_l2 = std::sqrt(diff2) / std::max(std::sqrt(num2), 1e-30);
  return r;
}

}  // namespace testing
