#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <vector>

#include "filmpipe/nn/layers.hpp"

namespace filmpipe::nn {

struct NetworkConfig {
  int in_channels = 3;
  std::vector<int> encoder_filters{64, 128, 256};
  int kernel_size = 3;
  int out_channels = 3;

  /// Throws ConfigError on an invalid combination.
  void validate() const;

  /// Number of encoder blocks D.
  [[nodiscard]] int depth() const { return static_cast<int>(encoder_filters.size()); }
  /// Spatial dims must be divisible by 2^(D-1): one 2x2 pool between consecutive blocks.
  [[nodiscard]] int required_multiple() const { return 1 << (depth() - 1); }

  [[nodiscard]] nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);

  bool operator==(const NetworkConfig&) const = default;
};

/// U-Net translation network.
///
///   encoder: D blocks of (conv k x k -> ReLU -> conv k x k -> ReLU), with a
///            2x2 max-pool between consecutive blocks
///   decoder: for each level from D-2 down to 0: 2x2 transposed conv
///            (stride 2), concatenate [skip, upsampled], then a conv block
///   head:    1x1 conv to out_channels, linear (no activation)
///
/// Convolutions are zero padded, so the output has the input's spatial size.
template <typename T>
class TranslationNetwork {
 public:
  TranslationNetwork(const NetworkConfig& config, std::uint64_t seed);

  /// Inference pass; output is unclipped.
  [[nodiscard]] Tensor<T> forward(const Tensor<T>& x) const;

  /// Forward pass that retains activations for backward().
  Tensor<T> forward_train(const Tensor<T>& x);

  /// Accumulates parameter gradients for the last forward_train() call.
  /// Optionally returns dL/d(input).
  void backward(const Tensor<T>& grad_out, Tensor<T>* grad_input = nullptr);

  void zero_grad();

  std::vector<Parameter<T>*> parameters();
  [[nodiscard]] std::vector<const Parameter<T>*> parameters() const;
  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] const NetworkConfig& config() const { return config_; }

  /// Throws InvalidInputError if x has the wrong channel count or its spatial
  /// dims are not multiples of required_multiple().
  void check_input(const Tensor<T>& x) const;

 private:
  struct Block {
    Conv2d<T> first;
    Conv2d<T> second;
  };
  struct LevelCache {
    Tensor<T> block_in;   // input to block.first
    Tensor<T> mid;        // ReLU(block.first(block_in))
    Tensor<T> out;        // ReLU(block.second(mid))
    std::vector<std::uint32_t> pool_argmax;
  };

  NetworkConfig config_;
  std::vector<Block> encoder_;
  std::vector<ConvTranspose2x2<T>> up_;  // up_[i]: level i+1 -> level i
  std::vector<Block> decoder_;           // decoder_[i]: level i
  Conv2d<T> head_;

  std::vector<LevelCache> enc_cache_;
  std::vector<LevelCache> dec_cache_;
  std::vector<Tensor<T>> up_in_cache_;
  bool has_cache_ = false;
};

}  // namespace filmpipe::nn
