#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "filmpipe/core/random.hpp"
#include "filmpipe/core/tensor.hpp"

namespace filmpipe::dataset {

struct PairedSample {
  ImageTensor digital;
  ImageTensor film;
  std::string pair_id;
};

/// Pair ids under a processed directory: subdirectories holding both
/// digital.png and film.png, sorted.
std::vector<std::string> list_processed(const std::filesystem::path& dir);

/// Loads <dir>/<id>/{digital,film}.png for the given ids (all when empty).
/// Throws IoError on missing files, InvalidInputError on shape mismatch.
std::vector<PairedSample> load_processed(const std::filesystem::path& dir,
                                         const std::vector<std::string>& ids = {});

struct SplitAssignment {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;

  /// "train", "val", "test" or "full" (all ids, sorted).
  [[nodiscard]] std::vector<std::string> ids(const std::string& split) const;
  [[nodiscard]] nlohmann::json to_json() const;
  static SplitAssignment from_json(const nlohmann::json& j);
  bool operator==(const SplitAssignment&) const = default;
};

/// test = max(1, round(0.1 N)), val = max(1, round(0.2 N)), train = rest,
/// after a seeded shuffle of the sorted ids. Needs N >= 3.
SplitAssignment split_dataset(std::vector<std::string> pair_ids, std::uint64_t seed);

void save_splits(const SplitAssignment& s, const std::filesystem::path& path);
SplitAssignment load_splits(const std::filesystem::path& path);

enum class NoiseKind { Uniform, Gaussian };

NoiseKind parse_noise_kind(const std::string& name);
std::string to_string(NoiseKind kind);

struct PatchConfig {
  int patch_size = 256;
  bool resize = false;
  double scale_min = 1.0;
  double scale_max = 4.0;
  bool noise = false;
  NoiseKind noise_kind = NoiseKind::Uniform;
};

struct PatchPair {
  ImageTensor input;   // 3 or 4 channels
  ImageTensor target;  // always 3 channels
  std::string source_pair_id;
  int top = 0;
  int left = 0;
  int crop_size = 0;        // side of the square window cut from the source
  double crop_scale = 1.0;  // crop_size / patch_size
};

/// Samples one paired patch. With resize, s ~ U[scale_min, scale_max] and the
/// window side round(s * S) is clamped to the image; both images get the same
/// window and the same resize back to S x S.
PatchPair sample_patch(const PairedSample& pair, Rng& rng, const PatchConfig& config);

/// Re-cuts the patch described by (top, left, crop_size) without noise.
std::pair<ImageTensor, ImageTensor> recut_patch(const PairedSample& pair, int top, int left,
                                                int crop_size, int patch_size);

/// Appends one channel of noise in [0,1): i.i.d. uniform, or N(0.5, 1/6)
/// clipped for the Gaussian variant.
ImageTensor add_noise_channel(const ImageTensor& img, Rng& rng,
                              NoiseKind kind = NoiseKind::Uniform);

/// patches_per_image x |pairs| patches in a seeded order. Patch i is a pure
/// function of (seed, i), so any index can be generated independently.
/// The stream keeps a reference to pairs.
class EpochStream {
 public:
  EpochStream(const std::vector<PairedSample>& pairs, int patches_per_image, PatchConfig config,
              std::uint64_t seed);

  [[nodiscard]] std::size_t size() const { return order_.size(); }
  [[nodiscard]] PatchPair at(std::size_t i) const;

 private:
  const std::vector<PairedSample>* pairs_;
  PatchConfig config_;
  std::uint64_t seed_;
  std::vector<std::uint32_t> order_;
};

EpochStream make_epoch(const std::vector<PairedSample>& pairs, int patches_per_image,
                       const PatchConfig& config, std::uint64_t seed);

}  // namespace filmpipe::dataset
