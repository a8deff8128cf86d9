#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "filmpipe/preprocess/preprocess.hpp"
#include "filmpipe/training/training.hpp"

namespace filmpipe::cli {

/// Resolved experiment: preset, then config file, then key=value overrides.
///
/// Keys are flat (loss=..., noise=true, patch_size=128, encoder_filters=[16,32]).
/// Nested preprocess settings use dotted paths (preprocess.ransac.threshold_px=2).
/// The network's input channel count follows the noise flag.
struct ExperimentConfig {
  std::string name;
  std::optional<std::filesystem::path> raw_dir;
  std::optional<std::filesystem::path> processed_dir;
  std::filesystem::path out_dir = "runs";
  std::optional<std::filesystem::path> weights_dir;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> resume;
  std::optional<std::filesystem::path> splits_file;
  std::optional<std::filesystem::path> report_jsonl;
  std::optional<std::filesystem::path> report_csv;

  training::TrainConfig train;
  preprocess::PreprocessConfig preprocess;

  std::string split = "test";
  bool include_baseline = true;

  /// Throws ConfigError for unknown keys, bad values or an unknown preset.
  static ExperimentConfig resolve(const std::optional<std::filesystem::path>& file,
                                  const std::vector<std::string>& overrides);
  static ExperimentConfig from_json(const nlohmann::json& merged);

  /// Built-in presets: "single-image" and "full-data".
  static nlohmann::json preset(const std::string& name);

  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  [[nodiscard]] std::string fingerprint() const;
  [[nodiscard]] std::filesystem::path run_dir() const { return out_dir / name; }
};

/// YAML scalar typing: booleans, integers and floats become numbers, the rest strings.
nlohmann::json parse_scalar(const std::string& text);

/// Parses a YAML document into JSON.
nlohmann::json yaml_to_json(const std::string& text);

/// Splits "a.b.c=value" and stores the parsed value at j["a"]["b"]["c"].
void apply_override(nlohmann::json& j, const std::string& assignment);

void deep_merge(nlohmann::json& base, const nlohmann::json& overlay);

}  // namespace filmpipe::cli
