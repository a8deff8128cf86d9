#include "filmpipe/preprocess/homography.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unsupported/Eigen/LevenbergMarquardt>

#include "filmpipe/core/error.hpp"
#include "filmpipe/core/random.hpp"

namespace filmpipe::preprocess {

Homography::Homography(const Eigen::Matrix3d& m) {
  if (!m.allFinite()) {
    throw InvalidInputError("homography has non-finite entries");
  }
  if (std::abs(m(2, 2)) <= 1e-12 * m.cwiseAbs().maxCoeff()) {
    throw InvalidInputError("homography cannot be normalized: bottom-right entry is zero");
  }
  m_ = m / m(2, 2);
  if (std::abs(m_.topLeftCorner<2, 2>().determinant()) < 1e-12 ||
      std::abs(m_.determinant()) < 1e-12) {
    throw InvalidInputError("homography is singular");
  }
}

Homography Homography::translation(double dx, double dy) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = dx;
  m(1, 2) = dy;
  return Homography(m);
}

Point2 Homography::apply(const Point2& p) const {
  const Eigen::Vector3d q = m_ * Eigen::Vector3d(p.x, p.y, 1.0);
  return {q[0] / q[2], q[1] / q[2]};
}

Homography Homography::inverse() const { return Homography(m_.inverse()); }

Homography Homography::then(const Homography& next) const { return Homography(next.m_ * m_); }

namespace {

// Isotropic similarity: centroid to origin, mean distance sqrt(2).
Eigen::Matrix3d normalizer(const std::vector<Point2>& pts) {
  double cx = 0.0;
  double cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double d = 0.0;
  for (const auto& p : pts) {
    d += std::hypot(p.x - cx, p.y - cy);
  }
  d /= static_cast<double>(pts.size());
  if (!(d > 1e-12)) {
    throw InvalidInputError("fit_homography: points are coincident");
  }
  const double s = std::sqrt(2.0) / d;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

std::vector<Point2> transform(const Eigen::Matrix3d& t, const std::vector<Point2>& pts) {
  std::vector<Point2> out;
  out.reserve(pts.size());
  for (const auto& p : pts) {
    const Eigen::Vector3d q = t * Eigen::Vector3d(p.x, p.y, 1.0);
    out.push_back({q[0] / q[2], q[1] / q[2]});
  }
  return out;
}

Eigen::Matrix3d dlt(const std::vector<Point2>& a, const std::vector<Point2>& b) {
  const int n = static_cast<int>(a.size());
  Eigen::MatrixXd A(2 * n, 9);
  for (int i = 0; i < n; ++i) {
    const double x = a[i].x, y = a[i].y, u = b[i].x, v = b[i].y;
    A.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    A.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d m;
  m << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];
  return m;
}

double reprojection_error(const Eigen::Matrix3d& m, const Point2& s, const Point2& d) {
  const Eigen::Vector3d q = m * Eigen::Vector3d(s.x, s.y, 1.0);
  if (!(q[2] > 0.0)) {
    return std::numeric_limits<double>::infinity();
  }
  return std::hypot(q[0] / q[2] - d.x, q[1] / q[2] - d.y);
}

double triangle_area2(const Point2& a, const Point2& b, const Point2& c) {
  return std::abs((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
}

bool degenerate(const Point2* p) {
  constexpr int tri[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  for (const auto& t : tri) {
    if (triangle_area2(p[t[0]], p[t[1]], p[t[2]]) < 1e-3) {
      return true;
    }
  }
  return false;
}

struct Consensus {
  std::vector<bool> mask;
  int count = 0;
  double error_sum = 0.0;
};

Consensus score(const Eigen::Matrix3d& m, const std::vector<Point2>& src,
                const std::vector<Point2>& dst, double threshold) {
  Consensus c;
  c.mask.assign(src.size(), false);
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double e = reprojection_error(m, src[i], dst[i]);
    if (e < threshold) {
      c.mask[i] = true;
      ++c.count;
      c.error_sum += e;
    }
  }
  return c;
}

// Forward reprojection residuals in normalized coordinates; h22 fixed at 1.
struct ReprojectionFunctor : Eigen::DenseFunctor<double> {
  const std::vector<Point2>& a;
  const std::vector<Point2>& b;
  const std::vector<double>& wt;

  ReprojectionFunctor(const std::vector<Point2>& a_, const std::vector<Point2>& b_,
                      const std::vector<double>& w_)
      : Eigen::DenseFunctor<double>(8, static_cast<int>(2 * a_.size())), a(a_), b(b_), wt(w_) {}

  int operator()(const InputType& h, ValueType& f) const {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double x = a[i].x, y = a[i].y;
      const double w = h[6] * x + h[7] * y + 1.0;
      f[2 * i] = wt[i] * ((h[0] * x + h[1] * y + h[2]) / w - b[i].x);
      f[2 * i + 1] = wt[i] * ((h[3] * x + h[4] * y + h[5]) / w - b[i].y);
    }
    return 0;
  }

  int df(const InputType& h, JacobianType& J) const {
    J.setZero();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double x = a[i].x, y = a[i].y;
      const double w = h[6] * x + h[7] * y + 1.0;
      const double u = (h[0] * x + h[1] * y + h[2]) / w;
      const double v = (h[3] * x + h[4] * y + h[5]) / w;
      const auto r = static_cast<Eigen::Index>(2 * i);
      const double k = wt[i];
      J(r, 0) = x / w;
      J(r, 1) = y / w;
      J(r, 2) = 1.0 / w;
      J(r, 6) = -u * x / w;
      J(r, 7) = -u * y / w;
      J(r + 1, 3) = x / w;
      J(r + 1, 4) = y / w;
      J(r + 1, 5) = 1.0 / w;
      J(r + 1, 6) = -v * x / w;
      J(r + 1, 7) = -v * y / w;
      J.row(r) *= k;
      J.row(r + 1) *= k;
    }
    return 0;
  }
};

Eigen::Matrix3d refine_lm(const Eigen::Matrix3d& m, const std::vector<Point2>& src,
                          const std::vector<Point2>& dst, const std::vector<double>& weight) {
  const Eigen::Matrix3d ta = normalizer(src);
  const Eigen::Matrix3d tb = normalizer(dst);
  const std::vector<Point2> a = transform(ta, src);
  const std::vector<Point2> b = transform(tb, dst);
  Eigen::Matrix3d mn = tb * m * ta.inverse();
  mn /= mn(2, 2);
  Eigen::VectorXd h(8);
  h << mn(0, 0), mn(0, 1), mn(0, 2), mn(1, 0), mn(1, 1), mn(1, 2), mn(2, 0), mn(2, 1);
  ReprojectionFunctor f(a, b, weight);
  Eigen::LevenbergMarquardt<ReprojectionFunctor> lm(f);
  lm.setMaxfev(200);
  lm.minimize(h);
  Eigen::Matrix3d out;
  out << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0;
  return tb.inverse() * out * ta;
}

template <typename V>
std::vector<Point2> select(const std::vector<Point2>& pts, const V& mask) {
  std::vector<Point2> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (mask[i]) {
      out.push_back(pts[i]);
    }
  }
  return out;
}

}  // namespace

Homography fit_homography(const std::vector<Point2>& src, const std::vector<Point2>& dst) {
  if (src.size() != dst.size()) {
    throw InvalidInputError("fit_homography: point lists differ in length");
  }
  if (src.size() < 4) {
    throw InvalidInputError("fit_homography: need at least 4 correspondences, got " +
                            std::to_string(src.size()));
  }
  const Eigen::Matrix3d ta = normalizer(src);
  const Eigen::Matrix3d tb = normalizer(dst);
  const Eigen::Matrix3d mn = dlt(transform(ta, src), transform(tb, dst));
  return Homography(tb.inverse() * mn * ta);
}

HomographyFit estimate_homography(const std::vector<Point2>& src, const std::vector<Point2>& dst,
                                  const RansacConfig& config, const std::vector<double>* sigma) {
  if (src.size() != dst.size() || (sigma != nullptr && sigma->size() != src.size())) {
    throw InvalidInputError("estimate_homography: point lists differ in length");
  }
  const std::size_t n = src.size();
  if (n < 4) {
    throw AlignmentInfeasibleError("need at least 4 correspondences, got " + std::to_string(n));
  }
  Rng rng(config.seed);
  Consensus best;
  Eigen::Matrix3d best_m = Eigen::Matrix3d::Identity();
  std::size_t idx[4];
  Point2 ps[4];
  Point2 pd[4];
  for (int it = 0; it < config.iterations; ++it) {
    for (int k = 0; k < 4; ++k) {
      bool fresh;
      do {
        idx[k] = static_cast<std::size_t>(rng.uniform_index(n));
        fresh = std::find(idx, idx + k, idx[k]) == idx + k;
      } while (!fresh);
      ps[k] = src[idx[k]];
      pd[k] = dst[idx[k]];
    }
    if (degenerate(ps) || degenerate(pd)) {
      continue;
    }
    Eigen::Matrix3d m;
    try {
      m = fit_homography({ps, ps + 4}, {pd, pd + 4}).matrix();
    } catch (const InvalidInputError&) {
      continue;
    }
    Consensus c = score(m, src, dst, config.threshold_px);
    if (c.count > best.count || (c.count == best.count && c.count > 0 && c.error_sum < best.error_sum)) {
      best = std::move(c);
      best_m = m;
    }
  }
  auto infeasible = [&config](int count) {
    return AlignmentInfeasibleError("RANSAC consensus of " + std::to_string(count) +
                                    " inliers is below the minimum of " +
                                    std::to_string(config.min_inliers));
  };
  if (best.count < std::max(config.min_inliers, 4)) {
    throw infeasible(best.count);
  }

  // Refit on the consensus set and re-select inliers until the set is stable.
  Eigen::Matrix3d m = best_m;
  Consensus c = std::move(best);
  for (int round = 0; round < 5; ++round) {
    Eigen::Matrix3d next;
    try {
      next = fit_homography(select(src, c.mask), select(dst, c.mask)).matrix();
      if (config.refine) {
        std::vector<double> weight;
        for (std::size_t i = 0; i < n; ++i) {
          if (c.mask[i]) {
            weight.push_back(sigma != nullptr ? 1.0 / (*sigma)[i] : 1.0);
          }
        }
        next = Homography(refine_lm(next, select(src, c.mask), select(dst, c.mask), weight)).matrix();
      }
    } catch (const InvalidInputError&) {
      break;
    }
    Consensus nc = score(next, src, dst, config.threshold_px);
    if (nc.count < 4) {
      break;
    }
    const bool stable = nc.mask == c.mask;
    m = next;
    c = std::move(nc);
    if (stable) {
      break;
    }
  }
  if (c.count < config.min_inliers) {
    throw infeasible(c.count);
  }
  HomographyFit fit;
  fit.h = Homography(m);
  fit.inliers = std::move(c.mask);
  fit.num_inliers = c.count;
  fit.mean_error_px = c.error_sum / c.count;
  return fit;
}

WarpResult warp_perspective(const ImageTensor& img, const Homography& h, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw InvalidInputError("warp_perspective: output size must be positive");
  }
  const Eigen::Matrix3d inv = h.inverse().matrix();
  const int C = img.channels();
  const int H = img.height();
  const int W = img.width();
  WarpResult r{ImageTensor(C, out_h, out_w), std::vector<std::uint8_t>(
                                                 static_cast<std::size_t>(out_h) * out_w, 0)};
  constexpr double kEdge = 1e-9;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      const double w = inv(2, 0) * x + inv(2, 1) * y + inv(2, 2);
      if (!(w > 0.0)) {
        continue;
      }
      double sx = (inv(0, 0) * x + inv(0, 1) * y + inv(0, 2)) / w;
      double sy = (inv(1, 0) * x + inv(1, 1) * y + inv(1, 2)) / w;
      if (sx < -kEdge || sy < -kEdge || sx > W - 1 + kEdge || sy > H - 1 + kEdge) {
        continue;
      }
      sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
      sy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
      const int x0 = std::min(static_cast<int>(sx), W - 1);
      const int y0 = std::min(static_cast<int>(sy), H - 1);
      const int x1 = std::min(x0 + 1, W - 1);
      const int y1 = std::min(y0 + 1, H - 1);
      const double fx = sx - x0;
      const double fy = sy - y0;
      for (int c = 0; c < C; ++c) {
        const double top = (1 - fx) * img(c, y0, x0) + fx * img(c, y0, x1);
        const double bot = (1 - fx) * img(c, y1, x0) + fx * img(c, y1, x1);
        r.image(c, y, x) = static_cast<float>((1 - fy) * top + fy * bot);
      }
      r.valid[static_cast<std::size_t>(y) * out_w + x] = 1;
    }
  }
  return r;
}

imaging::Rect largest_valid_rect(const std::vector<std::uint8_t>& valid, int h, int w) {
  if (valid.size() != static_cast<std::size_t>(h) * w) {
    throw InvalidInputError("largest_valid_rect: mask size mismatch");
  }
  imaging::Rect best;
  std::vector<int> heights(static_cast<std::size_t>(w) + 1, 0);
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      heights[x] = valid[static_cast<std::size_t>(y) * w + x] ? heights[x] + 1 : 0;
    }
    stack.clear();
    for (int x = 0; x <= w; ++x) {
      while (!stack.empty() && heights[stack.back()] >= heights[x]) {
        const int hh = heights[stack.back()];
        stack.pop_back();
        const int left = stack.empty() ? 0 : stack.back() + 1;
        const long long area = static_cast<long long>(hh) * (x - left);
        if (area > best.area()) {
          best = {y - hh + 1, left, hh, x - left};
        }
      }
      stack.push_back(x);
    }
  }
  return best;
}

imaging::Rect shrink_to_multiple(const imaging::Rect& r, int m) {
  if (m < 1) {
    throw InvalidInputError("shrink_to_multiple: multiple must be positive");
  }
  imaging::Rect out = r;
  const int dh = r.height % m;
  const int dw = r.width % m;
  out.top += dh / 2;
  out.left += dw / 2;
  out.height -= dh;
  out.width -= dw;
  return out;
}

}  // namespace filmpipe::preprocess
