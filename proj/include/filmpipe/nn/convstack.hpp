#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "filmpipe/nn/archive.hpp"
#include "filmpipe/nn/layers.hpp"

namespace filmpipe::nn {

/// A plain chain of conv / ReLU / 2x2 max-pool layers, as in the VGG
/// feature stacks. Conv layers carry the key prefix of their weights in a
/// torch-style state dict (e.g. "features.0").
template <typename T>
class ConvStack {
 public:
  enum class Kind { Conv, Relu, Pool };
  struct Layer {
    Kind kind;
    Conv2d<T> conv;
  };

  void add_conv(const std::string& key, int in, int out, int kernel = 3);
  void add_relu();
  void add_pool();

  [[nodiscard]] std::size_t size() const { return layers_.size(); }
  [[nodiscard]] const Layer& layer(std::size_t i) const { return layers_[i]; }
  [[nodiscard]] std::size_t pool_count() const;

  /// Throws IoError on missing or misshaped arrays.
  void load(const Archive& archive);
  void init_random(std::uint64_t seed);
  void save_into(Archive& archive) const;

  /// Outputs of the layers listed in taps (ascending indices), running
  /// only as far as the last tap.
  std::vector<Tensor<T>> forward_taps(const Tensor<T>& x, const std::vector<std::size_t>& taps) const;

  /// acts[0] = x, acts[i+1] = output of layer i, up to layer `last`.
  std::vector<Tensor<T>> forward_cache(const Tensor<T>& x, std::size_t last) const;

  /// Backpropagates to the input. tap_grads[i] is dL/d(output of layer
  /// taps[i]); absent entries (empty tensors) are skipped.
  Tensor<T> backward_input(const std::vector<Tensor<T>>& acts, const std::vector<std::size_t>& taps,
                           const std::vector<Tensor<T>>& tap_grads) const;

 private:
  Tensor<T> run(std::size_t i, const Tensor<T>& x) const;
  std::vector<Layer> layers_;
};

/// VGG-19 up to relu3_2 with torchvision key names.
template <typename T>
ConvStack<T> vgg19_to_relu3_2();

/// VGG-16 up to relu5_3, keyed like the LPIPS backbone slices
/// ("net.slice1.0" ... "net.slice5.28").
template <typename T>
ConvStack<T> vgg16_lpips();

/// Looks for `filename` in weights_dir, then in $FILMPIPE_WEIGHTS_DIR.
std::optional<std::filesystem::path> find_weights(const std::string& filename,
                                                  const std::optional<std::filesystem::path>& weights_dir);

}  // namespace filmpipe::nn
