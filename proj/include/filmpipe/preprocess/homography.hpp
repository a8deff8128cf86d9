#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "filmpipe/core/tensor.hpp"
#include "filmpipe/imaging/geometry.hpp"
#include "filmpipe/preprocess/features.hpp"

namespace filmpipe::preprocess {

/// Projective map p' ~ M p on homogeneous pixel coordinates, M(2,2) == 1.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  /// Scales so the bottom-right entry is 1. Throws InvalidInputError when
  /// that entry is ~0 or the matrix is singular or non-finite.
  explicit Homography(const Eigen::Matrix3d& m);

  static Homography translation(double dx, double dy);

  [[nodiscard]] const Eigen::Matrix3d& matrix() const { return m_; }
  [[nodiscard]] Point2 apply(const Point2& p) const;
  [[nodiscard]] Homography inverse() const;
  [[nodiscard]] Homography then(const Homography& next) const;  // next o this

 private:
  Eigen::Matrix3d m_;
};

/// Normalized direct linear transform, least squares for n > 4.
/// Throws InvalidInputError for fewer than 4 pairs or degenerate geometry.
Homography fit_homography(const std::vector<Point2>& src, const std::vector<Point2>& dst);

struct RansacConfig {
  int iterations = 2000;
  double threshold_px = 3.0;
  std::uint64_t seed = 42;
  int min_inliers = 15;
  bool refine = true;  // Levenberg-Marquardt on the consensus set
};

struct HomographyFit {
  Homography h;
  std::vector<bool> inliers;
  int num_inliers = 0;
  double mean_error_px = 0.0;  // mean forward reprojection error over inliers
};

/// src[i] -> dst[i]. Throws AlignmentInfeasibleError when fewer than
/// min_inliers points agree with the best model. sigma, when given, is the
/// expected localization error of each pair and weights the refinement.
HomographyFit estimate_homography(const std::vector<Point2>& src, const std::vector<Point2>& dst,
                                  const RansacConfig& config = {},
                                  const std::vector<double>* sigma = nullptr);

struct WarpResult {
  ImageTensor image;
  std::vector<std::uint8_t> valid;  // row-major out_h x out_w, 1 where sampled inside the source
};

/// out(p) = bilinear sample of img at h^-1(p); outside samples are 0 and invalid.
WarpResult warp_perspective(const ImageTensor& img, const Homography& h, int out_h, int out_w);

/// Largest axis-aligned rectangle of valid pixels (first found on ties).
imaging::Rect largest_valid_rect(const std::vector<std::uint8_t>& valid, int h, int w);

/// Trims r so both sides are multiples of m, splitting the trim between opposite edges.
imaging::Rect shrink_to_multiple(const imaging::Rect& r, int m);

}  // namespace filmpipe::preprocess
