#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "filmpipe/core/tensor.hpp"

namespace filmpipe::preprocess {

using Descriptor = std::array<std::uint8_t, 32>;  // 256-bit ORB descriptor

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct FeatureSet {
  std::vector<Point2> keypoints;  // pixel coordinates, (0,0) at the top-left pixel center
  std::vector<Descriptor> descriptors;
  std::vector<double> scales;  // pyramid scale of each keypoint, 1.2^level

  [[nodiscard]] std::size_t size() const { return keypoints.size(); }
};

/// ORB on the luma of a 3-channel image. Deterministic. With subpixel set,
/// keypoint locations (not descriptors) are refined to the nearby corner
/// saddle using a window that grows with the pyramid level.
FeatureSet detect_and_describe(const ImageTensor& img, int max_features = 5000,
                               bool subpixel = true);

struct Match {
  int query = 0;
  int train = 0;
  int distance = 0;  // Hamming
};

struct MatchConfig {
  double ratio = 0.75;
  int lsh_tables = 6;
  int lsh_key_bits = 12;
  int lsh_probe_level = 1;
  std::uint32_t seed = 42;  // LSH hash-function selection
  int min_matches = 4;
};

/// Approximate 2-NN over LSH tables, then the ratio test.
/// Each query appears at most once; sorted by query index. Throws
/// AlignmentInfeasibleError when fewer than min_matches survive.
std::vector<Match> match_descriptors(const std::vector<Descriptor>& query,
                                     const std::vector<Descriptor>& train,
                                     const MatchConfig& config = {});

int hamming(const Descriptor& a, const Descriptor& b);

namespace reference {

/// Exhaustive 2-NN with the same ratio test.
std::vector<Match> match_descriptors(const std::vector<Descriptor>& query,
                                     const std::vector<Descriptor>& train, double ratio = 0.75);

}  // namespace reference

}  // namespace filmpipe::preprocess
