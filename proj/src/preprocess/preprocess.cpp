#include "filmpipe/preprocess/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "filmpipe/core/error.hpp"
#include "filmpipe/core/hash.hpp"
#include "filmpipe/imaging/color.hpp"
#include "filmpipe/imaging/io.hpp"

namespace filmpipe::preprocess {

namespace fs = std::filesystem;

namespace {

struct Histogram {
  double lo = 0.0;
  double width = 0.0;  // bin width; 0 for a constant channel
  std::vector<double> mass;
  std::vector<double> cdf;  // cdf[b] = mass of bins 0..b
};

Histogram histogram(const float* v, std::size_t n, int bins) {
  Histogram h;
  const auto [mn, mx] = std::minmax_element(v, v + n);
  h.lo = *mn;
  h.width = (static_cast<double>(*mx) - *mn) / bins;
  h.mass.assign(static_cast<std::size_t>(bins), 0.0);
  if (h.width > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const int b = std::min(bins - 1, static_cast<int>((v[i] - h.lo) / h.width));
      h.mass[b] += 1.0;
    }
  } else {
    h.mass[0] = static_cast<double>(n);
  }
  h.cdf.resize(h.mass.size());
  double acc = 0.0;
  for (std::size_t b = 0; b < h.mass.size(); ++b) {
    h.mass[b] /= static_cast<double>(n);
    acc += h.mass[b];
    h.cdf[b] = acc;
  }
  return h;
}

double quantile_of(const Histogram& h, double v, int bins) {
  if (h.width == 0.0) {
    return 0.5;
  }
  const double t = (v - h.lo) / h.width;
  const int b = std::clamp(static_cast<int>(t), 0, bins - 1);
  const double below = b > 0 ? h.cdf[b - 1] : 0.0;
  return below + std::clamp(t - b, 0.0, 1.0) * h.mass[b];
}

double value_at(const Histogram& h, double q) {
  if (h.width == 0.0) {
    return h.lo;
  }
  const auto it = std::lower_bound(h.cdf.begin(), h.cdf.end(), q);
  std::size_t j = std::min<std::size_t>(it - h.cdf.begin(), h.cdf.size() - 1);
  while (h.mass[j] == 0.0 && j + 1 < h.mass.size()) {
    ++j;
  }
  const double below = j > 0 ? h.cdf[j - 1] : 0.0;
  const double frac = std::clamp((q - below) / h.mass[j], 0.0, 1.0);
  return h.lo + (static_cast<double>(j) + frac) * h.width;
}

}  // namespace

ImageTensor remap_lightness(const ImageTensor& lab_source, const ImageTensor& lab_reference,
                            int bins) {
  require_channels(lab_source, 3, "match_luminance");
  require_channels(lab_reference, 3, "match_luminance");
  require_nonempty(lab_source, "match_luminance");
  require_nonempty(lab_reference, "match_luminance");
  if (bins < 1) {
    throw InvalidInputError("match_luminance: bins must be positive");
  }
  const std::size_t ns = lab_source.shape().plane();
  const Histogram hs = histogram(lab_source.plane(0), ns, bins);
  const Histogram hr = histogram(lab_reference.plane(0), lab_reference.shape().plane(), bins);
  ImageTensor out = lab_source;
  float* L = out.plane(0);
  const float* src = lab_source.plane(0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(ns); ++i) {
    L[i] = static_cast<float>(value_at(hr, quantile_of(hs, src[i], bins)));
  }
  return out;
}

ImageTensor match_luminance(const ImageTensor& source, const ImageTensor& reference, int bins) {
  const ImageTensor lab =
      remap_lightness(imaging::rgb_to_lab(source), imaging::rgb_to_lab(reference), bins);
  return imaging::clamp01(imaging::lab_to_rgb(lab));
}

// ---------------------------------------------------------------- config

namespace {

const char* to_string(WarpDirection d) {
  return d == WarpDirection::DigitalToFilm ? "digital_to_film" : "film_to_digital";
}

const char* to_string(LuminanceDirection d) {
  switch (d) {
    case LuminanceDirection::FilmToDigital:
      return "film_to_digital";
    case LuminanceDirection::DigitalToFilm:
      return "digital_to_film";
    case LuminanceDirection::None:
      break;
  }
  return "none";
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const std::string& where) {
  if (!j.is_object()) {
    throw ConfigError(where + " must be a mapping");
  }
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) {
      throw ConfigError("unknown key '" + k + "' in " + where);
    }
  }
}

}  // namespace

nlohmann::json PreprocessConfig::to_json() const {
  return {{"max_features", max_features},
          {"subpixel_keypoints", subpixel_keypoints},
          {"match",
           {{"ratio", match.ratio},
            {"lsh_tables", match.lsh_tables},
            {"lsh_key_bits", match.lsh_key_bits},
            {"lsh_probe_level", match.lsh_probe_level},
            {"seed", match.seed},
            {"min_matches", match.min_matches}}},
          {"ransac",
           {{"iterations", ransac.iterations},
            {"threshold_px", ransac.threshold_px},
            {"seed", ransac.seed},
            {"min_inliers", ransac.min_inliers},
            {"refine", ransac.refine}}},
          {"warp", to_string(warp)},
          {"luminance", to_string(luminance)},
          {"histogram_bins", histogram_bins},
          {"crop_multiple", crop_multiple}};
}

PreprocessConfig PreprocessConfig::from_json(const nlohmann::json& j) {
  PreprocessConfig c;
  reject_unknown(j, {"max_features", "subpixel_keypoints", "match", "ransac", "warp", "luminance", "histogram_bins",
                     "crop_multiple"},
                 "preprocess");
  try {
    c.max_features = j.value("max_features", c.max_features);
    c.subpixel_keypoints = j.value("subpixel_keypoints", c.subpixel_keypoints);
    c.histogram_bins = j.value("histogram_bins", c.histogram_bins);
    c.crop_multiple = j.value("crop_multiple", c.crop_multiple);
    if (j.contains("match")) {
      const auto& m = j["match"];
      reject_unknown(m, {"ratio", "lsh_tables", "lsh_key_bits", "lsh_probe_level", "seed",
                         "min_matches"},
                     "preprocess.match");
      c.match.ratio = m.value("ratio", c.match.ratio);
      c.match.lsh_tables = m.value("lsh_tables", c.match.lsh_tables);
      c.match.lsh_key_bits = m.value("lsh_key_bits", c.match.lsh_key_bits);
      c.match.lsh_probe_level = m.value("lsh_probe_level", c.match.lsh_probe_level);
      c.match.seed = m.value("seed", c.match.seed);
      c.match.min_matches = m.value("min_matches", c.match.min_matches);
    }
    if (j.contains("ransac")) {
      const auto& r = j["ransac"];
      reject_unknown(r, {"iterations", "threshold_px", "seed", "min_inliers", "refine"},
                     "preprocess.ransac");
      c.ransac.iterations = r.value("iterations", c.ransac.iterations);
      c.ransac.threshold_px = r.value("threshold_px", c.ransac.threshold_px);
      c.ransac.seed = r.value("seed", c.ransac.seed);
      c.ransac.min_inliers = r.value("min_inliers", c.ransac.min_inliers);
      c.ransac.refine = r.value("refine", c.ransac.refine);
    }
    const std::string warp = j.value("warp", std::string(to_string(c.warp)));
    if (warp == "digital_to_film") {
      c.warp = WarpDirection::DigitalToFilm;
    } else if (warp == "film_to_digital") {
      c.warp = WarpDirection::FilmToDigital;
    } else {
      throw ConfigError("preprocess.warp must be digital_to_film or film_to_digital, got '" +
                        warp + "'");
    }
    const std::string lum = j.value("luminance", std::string(to_string(c.luminance)));
    if (lum == "film_to_digital") {
      c.luminance = LuminanceDirection::FilmToDigital;
    } else if (lum == "digital_to_film") {
      c.luminance = LuminanceDirection::DigitalToFilm;
    } else if (lum == "none") {
      c.luminance = LuminanceDirection::None;
    } else {
      throw ConfigError(
          "preprocess.luminance must be film_to_digital, digital_to_film or none, got '" + lum +
          "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed preprocess config: ") + e.what());
  }
  if (c.max_features < 1 || c.histogram_bins < 1 || c.crop_multiple < 1 ||
      c.ransac.iterations < 1 || !(c.ransac.threshold_px > 0.0) || !(c.match.ratio > 0.0)) {
    throw ConfigError("preprocess config values must be positive");
  }
  return c;
}

std::string PreprocessConfig::fingerprint() const { return filmpipe::fingerprint(to_json().dump()); }

nlohmann::json AlignmentReport::to_json() const {
  nlohmann::json j{{"pair_id", pair_id},
                   {"num_keypoints_digital", num_keypoints_digital},
                   {"num_keypoints_film", num_keypoints_film},
                   {"num_matches", num_matches},
                   {"num_inliers", num_inliers},
                   {"mean_reprojection_error_px", mean_reprojection_error_px},
                   {"accepted", accepted}};
  if (!reason.empty()) {
    j["reason"] = reason;
  }
  if (io_error) {
    j["io_error"] = true;
  }
  if (homography) {
    const Eigen::Matrix3d& m = homography->matrix();
    j["homography"] = {{m(0, 0), m(0, 1), m(0, 2)}, {m(1, 0), m(1, 1), m(1, 2)},
                       {m(2, 0), m(2, 1), m(2, 2)}};
  }
  if (accepted) {
    j["crop"] = {{"top", crop.top}, {"left", crop.left}, {"height", crop.height},
                 {"width", crop.width}};
    j["valid_fraction"] = valid_fraction;
  }
  return j;
}

// ---------------------------------------------------------------- pipeline

PreprocessResult preprocess_pair(const RawPair& raw, const PreprocessConfig& config) {
  require_channels(raw.digital, 3, "preprocess_pair (digital)");
  require_channels(raw.film, 3, "preprocess_pair (film)");
  PreprocessResult res;
  AlignmentReport& rep = res.report;
  rep.pair_id = raw.pair_id;

  const bool to_film = config.warp == WarpDirection::DigitalToFilm;
  const ImageTensor& moving = to_film ? raw.digital : raw.film;
  const ImageTensor& fixed = to_film ? raw.film : raw.digital;

  const FeatureSet fd = detect_and_describe(raw.digital, config.max_features, config.subpixel_keypoints);
  const FeatureSet ff = detect_and_describe(raw.film, config.max_features, config.subpixel_keypoints);
  rep.num_keypoints_digital = static_cast<int>(fd.size());
  rep.num_keypoints_film = static_cast<int>(ff.size());
  const FeatureSet& fm = to_film ? fd : ff;
  const FeatureSet& fx = to_film ? ff : fd;

  auto reject = [&res](std::string why) {
    res.report.accepted = false;
    res.report.reason = std::move(why);
    return res;
  };
  if (fm.size() == 0 || fx.size() == 0) {
    return reject("no keypoints detected");
  }

  std::vector<Match> matches;
  try {
    matches = match_descriptors(fm.descriptors, fx.descriptors, config.match);
  } catch (const AlignmentInfeasibleError& e) {
    return reject(e.what());
  }
  rep.num_matches = static_cast<int>(matches.size());
  std::vector<Point2> src;
  std::vector<Point2> dst;
  std::vector<double> sigma;
  for (const Match& m : matches) {
    src.push_back(fm.keypoints[m.query]);
    dst.push_back(fx.keypoints[m.train]);
    sigma.push_back(std::hypot(fm.scales[m.query], fx.scales[m.train]));
  }

  HomographyFit fit;
  try {
    fit = estimate_homography(src, dst, config.ransac, &sigma);
  } catch (const AlignmentInfeasibleError& e) {
    return reject(e.what());
  }
  rep.num_inliers = fit.num_inliers;
  rep.mean_reprojection_error_px = fit.mean_error_px;
  rep.homography = fit.h;

  WarpResult warped;
  try {
    warped = warp_perspective(moving, fit.h, fixed.height(), fixed.width());
  } catch (const InvalidInputError& e) {
    return reject(e.what());
  }
  const imaging::Rect rect = shrink_to_multiple(
      largest_valid_rect(warped.valid, fixed.height(), fixed.width()), config.crop_multiple);
  if (rect.height < 1 || rect.width < 1) {
    return reject("warped image leaves no valid region");
  }
  rep.crop = rect;
  rep.valid_fraction =
      static_cast<double>(rect.area()) / (static_cast<double>(fixed.height()) * fixed.width());

  ImageTensor moved = imaging::crop(warped.image, rect);
  ImageTensor still = imaging::crop(fixed, rect);
  ImageTensor digital = to_film ? std::move(moved) : std::move(still);
  ImageTensor film = to_film ? std::move(still) : std::move(moved);
  switch (config.luminance) {
    case LuminanceDirection::FilmToDigital:
      film = match_luminance(film, digital, config.histogram_bins);
      break;
    case LuminanceDirection::DigitalToFilm:
      digital = match_luminance(digital, film, config.histogram_bins);
      break;
    case LuminanceDirection::None:
      break;
  }
  rep.accepted = true;
  res.sample = dataset::PairedSample{std::move(digital), std::move(film), raw.pair_id};
  return res;
}

std::vector<AlignmentReport> preprocess_directory(const fs::path& raw_dir, const fs::path& out_dir,
                                                  const PreprocessConfig& config) {
  if (!fs::is_directory(raw_dir)) {
    throw IoError("raw directory not found: " + raw_dir.string());
  }
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(raw_dir)) {
    if (e.is_directory()) {
      ids.push_back(e.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  fs::create_directories(out_dir);

  std::vector<AlignmentReport> reports;
  for (const std::string& id : ids) {
    const auto d = imaging::find_image(raw_dir / id, "digital");
    const auto f = imaging::find_image(raw_dir / id, "film");
    fs::remove_all(out_dir / id);
    if (!d || !f) {
      AlignmentReport r;
      r.pair_id = id;
      r.reason = std::string("missing ") + (d ? "film" : "digital") + " image";
      reports.push_back(std::move(r));
      continue;
    }
    PreprocessResult res;
    try {
      res = preprocess_pair({imaging::read_image(*d), imaging::read_image(*f), id}, config);
    } catch (const IoError& e) {
      AlignmentReport r;
      r.pair_id = id;
      r.io_error = true;
      r.reason = e.what();
      reports.push_back(std::move(r));
      continue;
    }
    if (res.sample) {
      fs::create_directories(out_dir / id);
      imaging::write_image(out_dir / id / "digital.png", res.sample->digital);
      imaging::write_image(out_dir / id / "film.png", res.sample->film);
    }
    reports.push_back(std::move(res.report));
  }

  const std::string fp = config.fingerprint();
  const fs::path tmp = out_dir / "reports.jsonl.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot write " + tmp.string());
    }
    for (const auto& r : reports) {
      nlohmann::json j = r.to_json();
      j["config_fingerprint"] = fp;
      out << j.dump() << "\n";
    }
  }
  fs::rename(tmp, out_dir / "reports.jsonl");
  std::ofstream cfg(out_dir / "preprocess_config.json", std::ios::binary | std::ios::trunc);
  cfg << nlohmann::json{{"config", config.to_json()}, {"config_fingerprint", fp}}.dump(2) << "\n";
  return reports;
}

}  // namespace filmpipe::preprocess
