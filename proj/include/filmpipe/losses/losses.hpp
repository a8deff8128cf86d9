#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "filmpipe/core/tensor.hpp"
#include "filmpipe/imaging/filter.hpp"
#include "filmpipe/nn/convstack.hpp"

namespace filmpipe::losses {

// Every loss returns its value in double. When grad is non-null it receives
// dL/dX with X's shape (overwritten, not accumulated).

template <typename T>
double mse_loss(const Tensor<T>& x, const Tensor<T>& y, Tensor<T>* grad = nullptr);

template <typename T>
double mae_loss(const Tensor<T>& x, const Tensor<T>& y, Tensor<T>* grad = nullptr);

/// MSE between Gaussian-blurred copies of X and Y.
template <typename T>
double color_loss(const Tensor<T>& x, const Tensor<T>& y,
                  const imaging::GaussianKernel& kernel = imaging::GaussianKernel::color_loss_default(),
                  Tensor<T>* grad = nullptr);

/// Anisotropic total variation: sum of absolute vertical and horizontal
/// neighbour differences over all channels.
template <typename T>
double total_variation(const Tensor<T>& z);

/// |TV(X) - TV(Y)|.
template <typename T>
double tvrel_loss(const Tensor<T>& x, const Tensor<T>& y, Tensor<T>* grad = nullptr);

/// Frozen VGG-19 perceptual feature extractor with taps at relu1_2, relu2_2
/// and relu3_2 (weights 0.4, 0.4, 0.2). Inputs in [0,1] are normalized with
/// the ImageNet mean and std before the first conv.
template <typename T>
class FeatureExtractor {
 public:
  static constexpr const char* kWeightsFile = "vgg19.bin";
  static constexpr int kMinSize = 32;

  explicit FeatureExtractor(nn::ConvStack<T> stack);
  /// Throws UnavailableError when the file is missing.
  static FeatureExtractor from_file(const std::filesystem::path& path);
  /// Resolves vgg19.bin under weights_dir or $FILMPIPE_WEIGHTS_DIR.
  static FeatureExtractor resolve(const std::optional<std::filesystem::path>& weights_dir);
  /// Seeded random weights; stands in for the pretrained network in tests.
  static FeatureExtractor random(std::uint64_t seed);

  [[nodiscard]] std::vector<Tensor<T>> features(const Tensor<T>& x) const;
  [[nodiscard]] const std::vector<std::size_t>& taps() const { return taps_; }
  [[nodiscard]] const std::vector<double>& tap_weights() const { return weights_; }
  [[nodiscard]] const nn::ConvStack<T>& stack() const { return stack_; }

  double loss(const Tensor<T>& x, const Tensor<T>& y, Tensor<T>* grad = nullptr) const;

 private:
  Tensor<T> normalize(const Tensor<T>& x) const;
  void check(const Tensor<T>& x) const;

  nn::ConvStack<T> stack_;
  std::vector<std::size_t> taps_{3, 8, 13};
  std::vector<double> weights_{0.4, 0.4, 0.2};
};

template <typename T>
double vgg_loss(const Tensor<T>& x, const Tensor<T>& y, const FeatureExtractor<T>& fx,
                Tensor<T>* grad = nullptr) {
  return fx.loss(x, y, grad);
}

/// Canonical loss names: mse, mae, vgg, color, tvrel.
const std::vector<std::string>& loss_names();

struct LossTerm {
  std::string name;
  double weight = 1.0;
  bool operator==(const LossTerm&) const = default;
};

struct LossSpec {
  std::vector<LossTerm> terms;

  /// Accepts "[mse:1, vgg:1]", "mse:1,vgg:1", "color+vgg+tvrel", "mse/vgg"
  /// (weight defaults to 1). Case-insensitive; "colour" and "tv-rel" are
  /// aliases. Throws ConfigError naming the valid losses.
  static LossSpec parse(const std::string& text);
  static LossSpec from_list(const std::vector<std::string>& items);

  /// Throws ConfigError when empty, duplicated, unknown or nonpositive.
  void validate() const;
  [[nodiscard]] bool uses(const std::string& name) const;
  /// "mse:1,vgg:1"
  [[nodiscard]] std::string str() const;
  /// Table-style label, e.g. "MSE/VGG".
  [[nodiscard]] std::string label() const;

  bool operator==(const LossSpec&) const = default;
};

struct LossValue {
  double total = 0.0;
  std::map<std::string, double> per_term;
};

/// total = sum of weight * term. fx is required iff the spec has a vgg term.
template <typename T>
LossValue combined_loss(const Tensor<T>& x, const Tensor<T>& y, const LossSpec& spec,
                        const FeatureExtractor<T>* fx, Tensor<T>* grad = nullptr);

}  // namespace filmpipe::losses
