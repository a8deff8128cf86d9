#include "filmpipe/dataset/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "filmpipe/imaging/geometry.hpp"
#include "filmpipe/imaging/io.hpp"

namespace filmpipe::dataset {

namespace fs = std::filesystem;

std::vector<std::string> list_processed(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw IoError("processed directory not found: " + dir.string());
  }
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && fs::is_regular_file(e.path() / "digital.png") &&
        fs::is_regular_file(e.path() / "film.png")) {
      ids.push_back(e.path().filename().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<PairedSample> load_processed(const fs::path& dir, const std::vector<std::string>& ids) {
  const std::vector<std::string> wanted = ids.empty() ? list_processed(dir) : ids;
  std::vector<PairedSample> out;
  out.reserve(wanted.size());
  for (const auto& id : wanted) {
    PairedSample s{imaging::read_image(dir / id / "digital.png"),
                   imaging::read_image(dir / id / "film.png"), id};
    if (s.digital.shape() != s.film.shape()) {
      throw InvalidInputError("pair " + id + ": digital " + s.digital.shape().str() +
                              " and film " + s.film.shape().str() + " differ");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::string> SplitAssignment::ids(const std::string& split) const {
  if (split == "train") {
    return train;
  }
  if (split == "val") {
    return val;
  }
  if (split == "test") {
    return test;
  }
  if (split == "full") {
    std::vector<std::string> all = train;
    all.insert(all.end(), val.begin(), val.end());
    all.insert(all.end(), test.begin(), test.end());
    std::sort(all.begin(), all.end());
    return all;
  }
  throw ConfigError("unknown split '" + split + "' (expected train, val, test or full)");
}

nlohmann::json SplitAssignment::to_json() const {
  return {{"seed", seed}, {"train", train}, {"val", val}, {"test", test}};
}

SplitAssignment SplitAssignment::from_json(const nlohmann::json& j) {
  try {
    return {j.at("train").get<std::vector<std::string>>(),
            j.at("val").get<std::vector<std::string>>(),
            j.at("test").get<std::vector<std::string>>(), j.value("seed", std::uint64_t{0})};
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed splits file: ") + e.what());
  }
}

SplitAssignment split_dataset(std::vector<std::string> pair_ids, std::uint64_t seed) {
  const std::size_t n = pair_ids.size();
  if (n < 3) {
    throw InvalidInputError("split_dataset: need at least 3 pairs, got " + std::to_string(n));
  }
  std::sort(pair_ids.begin(), pair_ids.end());
  if (std::adjacent_find(pair_ids.begin(), pair_ids.end()) != pair_ids.end()) {
    throw InvalidInputError("split_dataset: duplicate pair ids");
  }
  Rng rng(seed);
  rng.shuffle(std::span<std::string>(pair_ids));
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.1 * n)));
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.2 * n)));
  SplitAssignment s;
  s.seed = seed;
  s.test.assign(pair_ids.begin(), pair_ids.begin() + n_test);
  s.val.assign(pair_ids.begin() + n_test, pair_ids.begin() + n_test + n_val);
  s.train.assign(pair_ids.begin() + n_test + n_val, pair_ids.end());
  for (auto* v : {&s.train, &s.val, &s.test}) {
    std::sort(v->begin(), v->end());
  }
  return s;
}

void save_splits(const SplitAssignment& s, const fs::path& path) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << s.to_json().dump(2) << "\n";
}

SplitAssignment load_splits(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read " + path.string());
  }
  try {
    return SplitAssignment::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "uniform") {
    return NoiseKind::Uniform;
  }
  if (name == "gaussian") {
    return NoiseKind::Gaussian;
  }
  throw ConfigError("unknown noise kind '" + name + "' (expected uniform or gaussian)");
}

std::string to_string(NoiseKind kind) { return kind == NoiseKind::Uniform ? "uniform" : "gaussian"; }

ImageTensor add_noise_channel(const ImageTensor& img, Rng& rng, NoiseKind kind) {
  require_channels(img, 3, "add_noise_channel");
  ImageTensor out(4, img.height(), img.width());
  std::copy(img.values().begin(), img.values().end(), out.data());
  float* noise = out.plane(3);
  const std::size_t n = img.shape().plane();
  constexpr float kBelowOne = 0x1.fffffep-1f;
  for (std::size_t i = 0; i < n; ++i) {
    if (kind == NoiseKind::Uniform) {
      noise[i] = rng.uniform_float();
    } else {
      const double v = 0.5 + rng.normal() / 6.0;
      noise[i] = std::clamp(static_cast<float>(v), 0.0f, kBelowOne);
    }
  }
  return out;
}

std::pair<ImageTensor, ImageTensor> recut_patch(const PairedSample& pair, int top, int left,
                                                int crop_size, int patch_size) {
  ImageTensor d = imaging::crop(pair.digital, top, left, crop_size, crop_size);
  ImageTensor f = imaging::crop(pair.film, top, left, crop_size, crop_size);
  if (crop_size != patch_size) {
    d = imaging::resize_bilinear(d, patch_size, patch_size);
    f = imaging::resize_bilinear(f, patch_size, patch_size);
  }
  return {std::move(d), std::move(f)};
}

PatchPair sample_patch(const PairedSample& pair, Rng& rng, const PatchConfig& config) {
  const int S = config.patch_size;
  const int H = pair.digital.height();
  const int W = pair.digital.width();
  if (pair.film.shape() != pair.digital.shape()) {
    throw InvalidInputError("sample_patch: pair " + pair.pair_id + " has mismatched shapes");
  }
  if (S < 1 || H < S || W < S) {
    throw InvalidInputError("sample_patch: image " + pair.digital.shape().str() +
                            " smaller than patch " + std::to_string(S));
  }
  int crop = S;
  if (config.resize) {
    if (!(config.scale_min > 0.0) || config.scale_max < config.scale_min) {
      throw ConfigError("scale_range must satisfy 0 < min <= max");
    }
    const double s = config.scale_max > config.scale_min
                         ? rng.uniform(config.scale_min, config.scale_max)
                         : config.scale_min;
    crop = static_cast<int>(std::lround(s * S));
    crop = std::clamp(crop, 1, std::min(H, W));
  }
  PatchPair p;
  p.source_pair_id = pair.pair_id;
  p.top = rng.uniform_int(0, H - crop);
  p.left = rng.uniform_int(0, W - crop);
  p.crop_size = crop;
  p.crop_scale = static_cast<double>(crop) / S;
  auto [d, f] = recut_patch(pair, p.top, p.left, crop, S);
  p.input = config.noise ? add_noise_channel(d, rng, config.noise_kind) : std::move(d);
  p.target = std::move(f);
  return p;
}

EpochStream::EpochStream(const std::vector<PairedSample>& pairs, int patches_per_image,
                         PatchConfig config, std::uint64_t seed)
    : pairs_(&pairs), config_(config), seed_(seed) {
  if (pairs.empty()) {
    throw InvalidInputError("make_epoch: no pairs");
  }
  if (patches_per_image < 1) {
    throw ConfigError("patches_per_image must be positive");
  }
  order_.reserve(pairs.size() * static_cast<std::size_t>(patches_per_image));
  for (std::uint32_t k = 0; k < pairs.size(); ++k) {
    order_.insert(order_.end(), static_cast<std::size_t>(patches_per_image), k);
  }
  Rng rng(derive_seed(seed, ~std::uint64_t{0}));
  rng.shuffle(std::span<std::uint32_t>(order_));
}

PatchPair EpochStream::at(std::size_t i) const {
  if (i >= order_.size()) {
    throw InvalidInputError("EpochStream: index out of range");
  }
  Rng rng(derive_seed(seed_, i));
  return sample_patch((*pairs_)[order_[i]], rng, config_);
}

EpochStream make_epoch(const std::vector<PairedSample>& pairs, int patches_per_image,
                       const PatchConfig& config, std::uint64_t seed) {
  return EpochStream(pairs, patches_per_image, config, seed);
}

}  // namespace filmpipe::dataset
