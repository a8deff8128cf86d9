#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "filmpipe/dataset/dataset.hpp"
#include "filmpipe/preprocess/homography.hpp"

namespace filmpipe::preprocess {

/// L channel of `source` remapped so its distribution matches `reference`;
/// a and b are kept. 256-bin CDFs over each image's own L range.
ImageTensor match_luminance(const ImageTensor& source, const ImageTensor& reference,
                            int bins = 256);

/// The LAB-space step of match_luminance: returns lab_source with channel 0
/// remapped; channels 1 and 2 are copied bit for bit.
ImageTensor remap_lightness(const ImageTensor& lab_source, const ImageTensor& lab_reference,
                            int bins = 256);

struct RawPair {
  ImageTensor digital;
  ImageTensor film;
  std::string pair_id;
};

enum class WarpDirection { DigitalToFilm, FilmToDigital };
enum class LuminanceDirection { FilmToDigital, DigitalToFilm, None };

struct PreprocessConfig {
  int max_features = 5000;
  bool subpixel_keypoints = true;
  MatchConfig match;
  RansacConfig ransac;
  WarpDirection warp = WarpDirection::DigitalToFilm;
  LuminanceDirection luminance = LuminanceDirection::FilmToDigital;
  int histogram_bins = 256;
  int crop_multiple = 4;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys throw ConfigError.
  static PreprocessConfig from_json(const nlohmann::json& j);
  [[nodiscard]] std::string fingerprint() const;
};

struct AlignmentReport {
  std::string pair_id;
  int num_keypoints_digital = 0;
  int num_keypoints_film = 0;
  int num_matches = 0;
  int num_inliers = 0;
  double mean_reprojection_error_px = 0.0;
  bool accepted = false;
  std::string reason;  // set when rejected
  bool io_error = false;
  std::optional<Homography> homography;
  imaging::Rect crop;
  double valid_fraction = 0.0;  // crop area / frame area

  [[nodiscard]] nlohmann::json to_json() const;
};

struct PreprocessResult {
  std::optional<dataset::PairedSample> sample;  // empty when rejected
  AlignmentReport report;
};

/// Registers the moving image onto the fixed frame, crops both to the common
/// valid region and matches luminance. Infeasible alignment sets
/// report.accepted = false instead of throwing.
PreprocessResult preprocess_pair(const RawPair& raw, const PreprocessConfig& config = {});

/// <raw_dir>/<id>/{digital,film}.{png,jpg} -> <out_dir>/<id>/{digital,film}.png
/// plus <out_dir>/reports.jsonl. Returns one report per pair, sorted by id.
std::vector<AlignmentReport> preprocess_directory(const std::filesystem::path& raw_dir,
                                                  const std::filesystem::path& out_dir,
                                                  const PreprocessConfig& config = {});

}  // namespace filmpipe::preprocess
