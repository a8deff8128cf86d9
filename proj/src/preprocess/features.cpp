#include "filmpipe/preprocess/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <opencv2/features2d.hpp>
#include <opencv2/flann.hpp>
#include <opencv2/imgproc.hpp>

#include "filmpipe/core/error.hpp"

namespace filmpipe::preprocess {

namespace {

cv::Mat to_gray8(const ImageTensor& img) {
  require_channels(img, 3, "detect_and_describe");
  cv::Mat gray(img.height(), img.width(), CV_8UC1);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = gray.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x) {
      const double l = 0.299 * img(0, y, x) + 0.587 * img(1, y, x) + 0.114 * img(2, y, x);
      row[x] = static_cast<std::uint8_t>(std::clamp(std::lround(l * 255.0), 0L, 255L));
    }
  }
  return gray;
}

cv::Mat to_mat(const std::vector<Descriptor>& d) {
  cv::Mat m(static_cast<int>(d.size()), 32, CV_8UC1);
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::memcpy(m.ptr<std::uint8_t>(static_cast<int>(i)), d[i].data(), 32);
  }
  return m;
}

constexpr double kCornerRatio = 0.4;

bool passes_ratio(int best, int second, double ratio) {
  return static_cast<double>(best) < ratio * static_cast<double>(second);
}

// LSH tables draw their bit subsets from cv::theRNG() (and rand() in some builds).
std::mutex& rand_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

int hamming(const Descriptor& a, const Descriptor& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); i += 8) {
    std::uint64_t x;
    std::uint64_t y;
    std::memcpy(&x, a.data() + i, 8);
    std::memcpy(&y, b.data() + i, 8);
    d += std::popcount(x ^ y);
  }
  return d;
}

FeatureSet detect_and_describe(const ImageTensor& img, int max_features, bool subpixel) {
  if (max_features < 1) {
    throw InvalidInputError("max_features must be positive");
  }
  const cv::Mat gray = to_gray8(img);
  cv::Ptr<cv::ORB> orb = cv::ORB::create(max_features);
  std::vector<cv::KeyPoint> kps;
  cv::Mat desc;
  orb->detectAndCompute(gray, cv::noArray(), kps, desc);

  std::vector<cv::Point2f> pts(kps.size());
  for (std::size_t i = 0; i < kps.size(); ++i) {
    pts[i] = kps[i].pt;
  }
  if (subpixel && !kps.empty()) {
    std::map<int, std::vector<std::size_t>> by_level;
    for (std::size_t i = 0; i < kps.size(); ++i) {
      by_level[kps[i].octave].push_back(i);
    }
    cv::Mat gx;
    cv::Mat gy;
    cv::Sobel(gray, gx, CV_32F, 1, 0);
    cv::Sobel(gray, gy, CV_32F, 0, 1);
    // Only saddle/corner-like neighbourhoods are refined; along plain edges the
    // refinement slides and would bias the homography.
    auto corner_like = [&](const cv::Point2f& p, int win) {
      double sxx = 0.0, syy = 0.0, sxy = 0.0;
      const int cx = static_cast<int>(std::lround(p.x));
      const int cy = static_cast<int>(std::lround(p.y));
      for (int y = std::max(0, cy - win); y <= std::min(gray.rows - 1, cy + win); ++y) {
        for (int x = std::max(0, cx - win); x <= std::min(gray.cols - 1, cx + win); ++x) {
          const double a = gx.at<float>(y, x);
          const double b = gy.at<float>(y, x);
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
        }
      }
      const double tr = sxx + syy;
      const double disc = std::sqrt(std::max(0.0, 0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy));
      const double lmax = 0.5 * tr + disc;
      const double lmin = 0.5 * tr - disc;
      return lmax > 0.0 && lmin / lmax > kCornerRatio;
    };
    for (const auto& [level, idx] : by_level) {
      const int win = std::max(2, static_cast<int>(std::lround(4.0 * std::pow(1.2, level))));
      std::vector<cv::Point2f> p;
      for (std::size_t i : idx) {
        p.push_back(kps[i].pt);
      }
      cv::cornerSubPix(gray, p, cv::Size(win, win), cv::Size(-1, -1),
                       cv::TermCriteria(cv::TermCriteria::EPS + cv::TermCriteria::COUNT, 40, 0.01));
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const cv::Point2f moved = p[j] - kps[idx[j]].pt;
        if (std::isfinite(p[j].x) && std::isfinite(p[j].y) && std::abs(moved.x) <= win &&
            std::abs(moved.y) <= win && corner_like(kps[idx[j]].pt, win)) {
          pts[idx[j]] = p[j];
        }
      }
    }
  }

  FeatureSet out;
  out.keypoints.reserve(kps.size());
  out.descriptors.resize(kps.size());
  for (std::size_t i = 0; i < kps.size(); ++i) {
    out.keypoints.push_back({pts[i].x, pts[i].y});
    out.scales.push_back(std::pow(1.2, kps[i].octave));
    std::memcpy(out.descriptors[i].data(), desc.ptr<std::uint8_t>(static_cast<int>(i)), 32);
  }
  return out;
}

std::vector<Match> match_descriptors(const std::vector<Descriptor>& query,
                                     const std::vector<Descriptor>& train,
                                     const MatchConfig& config) {
  auto enough = [&config](std::vector<Match> m) {
    if (static_cast<int>(m.size()) < config.min_matches) {
      throw AlignmentInfeasibleError("only " + std::to_string(m.size()) +
                                     " descriptor matches survive the ratio test");
    }
    return m;
  };
  if (query.empty() || train.empty()) {
    return enough({});
  }
  cv::FlannBasedMatcher matcher(cv::makePtr<cv::flann::LshIndexParams>(
                                    config.lsh_tables, config.lsh_key_bits, config.lsh_probe_level),
                                cv::makePtr<cv::flann::SearchParams>(32));
  std::vector<std::vector<cv::DMatch>> knn;
  {
    std::lock_guard<std::mutex> lock(rand_mutex());
    std::srand(config.seed);
    cv::theRNG() = cv::RNG(config.seed);
    matcher.knnMatch(to_mat(query), to_mat(train), knn, 2);
  }
  std::vector<Match> out;
  for (const auto& m : knn) {
    if (m.size() < 2 || m[0].trainIdx < 0 || m[1].trainIdx < 0) {
      continue;
    }
    const int best = hamming(query[m[0].queryIdx], train[m[0].trainIdx]);
    const int second = hamming(query[m[1].queryIdx], train[m[1].trainIdx]);
    if (passes_ratio(best, second, config.ratio)) {
      out.push_back({m[0].queryIdx, m[0].trainIdx, best});
    }
  }
  std::sort(out.begin(), out.end(), [](const Match& a, const Match& b) { return a.query < b.query; });
  return enough(std::move(out));
}

namespace reference {

std::vector<Match> match_descriptors(const std::vector<Descriptor>& query,
                                     const std::vector<Descriptor>& train, double ratio) {
  std::vector<Match> out;
  if (train.size() < 2) {
    return out;
  }
  for (std::size_t q = 0; q < query.size(); ++q) {
    int best = std::numeric_limits<int>::max();
    int second = best;
    int idx = -1;
    for (std::size_t t = 0; t < train.size(); ++t) {
      const int d = hamming(query[q], train[t]);
      if (d < best) {
        second = best;
        best = d;
        idx = static_cast<int>(t);
      } else if (d < second) {
        second = d;
      }
    }
    if (passes_ratio(best, second, ratio)) {
      out.push_back({static_cast<int>(q), idx, best});
    }
  }
  return out;
}

}  // namespace reference

}  // namespace filmpipe::preprocess
