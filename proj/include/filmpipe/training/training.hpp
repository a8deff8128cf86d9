#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "filmpipe/dataset/dataset.hpp"
#include "filmpipe/losses/losses.hpp"
#include "filmpipe/nn/adam.hpp"
#include "filmpipe/nn/unet.hpp"

namespace filmpipe::training {

enum class Experiment { SingleImage, FullData };

Experiment parse_experiment(const std::string& name);
std::string to_string(Experiment e);

struct TrainConfig {
  losses::LossSpec loss_spec{{{"mse", 1.0}}};
  bool noise = false;
  dataset::NoiseKind noise_kind = dataset::NoiseKind::Uniform;
  bool resize = false;
  double scale_min = 1.0;
  double scale_max = 4.0;
  int patch_size = 256;
  int patches_per_image = 400;
  int epochs = 1;
  int batch_size = 1;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // global L2 norm; 0 disables
  std::uint64_t seed = 0;
  Experiment experiment = Experiment::FullData;
  std::optional<std::string> single_image_id;
  int checkpoint_every = 500;
  // Re-use the first sampled patch for every step.
  bool fixed_patch = false;
  nn::NetworkConfig network;

  /// Throws ConfigError.
  void validate() const;

  [[nodiscard]] dataset::PatchConfig patch_config() const;
  [[nodiscard]] nn::AdamConfig adam_config() const;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys throw ConfigError.
  static TrainConfig from_json(const nlohmann::json& j);
  [[nodiscard]] std::string fingerprint() const;
};

struct StepRecord {
  std::int64_t step = 0;
  double total = 0.0;
  std::map<std::string, double> per_term;
};

struct CheckpointRecord {
  std::int64_t step = 0;
  std::filesystem::path path;
  std::string hash;
};

struct ValidationRecord {
  std::int64_t step = 0;
  double loss = 0.0;
};

struct TrainResult {
  nn::TranslationNetwork<float> network;
  std::vector<StepRecord> steps;
  std::vector<ValidationRecord> validations;
  std::vector<CheckpointRecord> checkpoints;
  std::optional<double> best_val;
  std::int64_t total_steps = 0;
};

struct TrainOptions {
  // Checkpoints and train_log.jsonl go here; nothing is written when empty.
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> resume_from;
  std::optional<std::filesystem::path> weights_dir;
  // Overrides the pretrained VGG lookup.
  const losses::FeatureExtractor<float>* feature_extractor = nullptr;
  // Stop after this many steps (the schedule itself is unchanged).
  std::optional<std::int64_t> max_steps;
  std::function<void(const StepRecord&)> on_step;
};

/// Optimizes a freshly initialized network (or the resumed one) over
/// epochs * patches_per_image * |train| patches. In single-image mode the
/// pair named by single_image_id is the only training pair and no
/// validation is run. Throws NonFiniteLossError naming the term and step.
TrainResult train(const TrainConfig& config, const std::vector<dataset::PairedSample>& train_pairs,
                  const std::vector<dataset::PairedSample>& val_pairs = {},
                  const TrainOptions& options = {});

/// Runs the network on a full image: reflect pad to the divisibility
/// multiple, append a seeded noise channel when the network takes 4
/// channels, forward, crop back, clip to [0,1].
ImageTensor apply(const nn::TranslationNetwork<float>& net, const ImageTensor& img,
                  std::optional<std::uint64_t> noise_seed = std::nullopt,
                  dataset::NoiseKind noise_kind = dataset::NoiseKind::Uniform);

/// Unclipped forward on a full image; shared by apply and validation.
ImageTensor forward_full(const nn::TranslationNetwork<float>& net, const ImageTensor& img,
                         std::uint64_t noise_seed, dataset::NoiseKind noise_kind);

struct RunSummary {
  std::int64_t total_steps = 0;
  std::map<std::string, double> mean_per_term;
  double mean_total = 0.0;
  std::vector<CheckpointRecord> checkpoints;
  std::optional<double> best_val;
};

/// Rebuilds a run summary from train_log.jsonl.
RunSummary summarize_log(const std::filesystem::path& log_path);
RunSummary summarize(const TrainResult& result);

}  // namespace filmpipe::training
