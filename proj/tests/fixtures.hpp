#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "filmpipe/imaging/io.hpp"
#include "filmpipe/losses/losses.hpp"
#include "filmpipe/nn/archive.hpp"
#include "filmpipe/preprocess/homography.hpp"
#include "support.hpp"

namespace testing {

// warm tone curve standing in for the film response
inline filmpipe::ImageTensor film_tone(const filmpipe::ImageTensor& d) {
  filmpipe::ImageTensor f(d.shape());
  const double gain[3] = {1.05, 0.95, 0.8};
  const double lift[3] = {0.06, 0.03, 0.08};
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < d.height(); ++y) {
      for (int x = 0; x < d.width(); ++x) {
        const double v = std::pow(d(c, y, x), 1.15);
        f(c, y, x) = static_cast<float>(std::clamp(lift[c] + gain[c] * 0.85 * v, 0.0, 1.0));
      }
    }
  }
  return f;
}

// small rotation + scale + shift about the image center
inline Eigen::Matrix3d mild_homography(int h, int w, double deg, double scale, double tx, double ty) {
  const double a = deg * 3.14159265358979323846 / 180.0;
  Eigen::Matrix3d c = Eigen::Matrix3d::Identity();
  c(0, 2) = -w / 2.0;
  c(1, 2) = -h / 2.0;
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  r(0, 0) = scale * std::cos(a);
  r(0, 1) = -scale * std::sin(a);
  r(1, 0) = scale * std::sin(a);
  r(1, 1) = scale * std::cos(a);
  r(0, 2) = w / 2.0 + tx;
  r(1, 2) = h / 2.0 + ty;
  return r * c;
}

/// <dir>/<id>/{digital,film}.png: film is the digital frame, mildly warped and toned.
inline void write_raw_pair(const std::filesystem::path& dir, const std::string& id, int h, int w,
                           std::uint64_t seed) {
  namespace pp = filmpipe::preprocess;
  const filmpipe::ImageTensor digital = feature_scene(h, w, seed);
  const pp::Homography H(mild_homography(h, w, 1.0 + 0.3 * (seed % 3), 1.02, 3.0, -2.0));
  const filmpipe::ImageTensor film = film_tone(pp::warp_perspective(digital, H, h, w).image);
  std::filesystem::create_directories(dir / id);
  filmpipe::imaging::write_image(dir / id / "digital.png", digital);
  filmpipe::imaging::write_image(dir / id / "film.png", film);
}

inline void write_flat_pair(const std::filesystem::path& dir, const std::string& id) {
  filmpipe::ImageTensor flat(3, 96, 128);
  flat.fill(0.5f);
  std::filesystem::create_directories(dir / id);
  filmpipe::imaging::write_image(dir / id / "digital.png", flat);
  filmpipe::imaging::write_image(dir / id / "film.png", flat);
}

/// Seeded random VGG-19 weights saved where the loss resolver looks for them.
inline void write_standin_vgg(const std::filesystem::path& weights_dir, std::uint64_t seed) {
  std::filesystem::create_directories(weights_dir);
  const auto fx = filmpipe::losses::FeatureExtractor<float>::random(seed);
  filmpipe::nn::Archive ar;
  fx.stack().save_into(ar);
  ar.save(weights_dir / filmpipe::losses::FeatureExtractor<float>::kWeightsFile);
}

inline Eigen::Matrix3d sample_homography(filmpipe::Rng& rng, double w, double h) {
  const double a = rng.uniform(-0.08, 0.08), s = rng.uniform(0.92, 1.08);
  Eigen::Matrix3d m;
  m << s * std::cos(a), -s * std::sin(a), rng.uniform(-20, 20), s * std::sin(a), s * std::cos(a),
      rng.uniform(-20, 20), rng.uniform(-5e-5, 5e-5), rng.uniform(-5e-5, 5e-5), 1.0;
  // keep the image center roughly in place
  const Eigen::Vector3d c = m * Eigen::Vector3d(w / 2, h / 2, 1);
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t(0, 2) = w / 2 - c[0] / c[2] + rng.uniform(-10, 10);
  t(1, 2) = h / 2 - c[1] / c[2] + rng.uniform(-10, 10);
  const Eigen::Matrix3d out = t * m;
  return out / out(2, 2);
}

inline double max_entry_diff(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  return (a / a(2, 2) - b / b(2, 2)).cwiseAbs().maxCoeff();
}

inline double mean_grid_error(const filmpipe::preprocess::Homography& est, const Eigen::Matrix3d& truth, int h, int w, int margin) {
  const filmpipe::preprocess::Homography t(truth);
  double e = 0.0;
  int n = 0;
  for (int y = margin; y < h - margin; y += 8)
    for (int x = margin; x < w - margin; x += 8) {
      const filmpipe::preprocess::Point2 a = est.apply({double(x), double(y)}), b = t.apply({double(x), double(y)});
      e += std::hypot(a.x - b.x, a.y - b.y);
      ++n;
    }
  return e / n;
}

// Two-sample Kolmogorov-Smirnov statistic by merging sorted samples.
inline double ks_statistic(std::vector<float> a, std::vector<float> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const float v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

inline std::vector<float> lightness(const filmpipe::ImageTensor& lab) {
  return {lab.plane(0), lab.plane(0) + lab.shape().plane()};
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace testing
