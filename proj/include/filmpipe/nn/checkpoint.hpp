#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "filmpipe/nn/adam.hpp"
#include "filmpipe/nn/archive.hpp"
#include "filmpipe/nn/unet.hpp"

namespace filmpipe::nn {

struct Checkpoint {
  TranslationNetwork<float> network;
  std::int64_t step = 0;
  nlohmann::json extra;  // caller-defined metadata (training config, rng state, ...)
  std::optional<std::int64_t> adam_steps;
  std::vector<std::vector<double>> adam_m;
  std::vector<std::vector<double>> adam_v;
};

std::string checkpoint_filename(std::int64_t step);

/// Writes config, parameters, step and (optionally) Adam moments.
void save_checkpoint(const std::filesystem::path& path, const TranslationNetwork<float>& net,
                     std::int64_t step, const nlohmann::json& extra = nlohmann::json::object(),
                     Adam<float>* optimizer = nullptr);

/// Throws IoError for a missing or corrupt file, ConfigError when
/// expected_in_channels is set and differs from the stored network.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<int> expected_in_channels = std::nullopt);

/// Parameters only, for comparing two networks by their serialized form.
Archive network_archive(const TranslationNetwork<float>& net);

}  // namespace filmpipe::nn
