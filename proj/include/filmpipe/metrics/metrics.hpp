#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "filmpipe/core/tensor.hpp"
#include "filmpipe/dataset/dataset.hpp"
#include "filmpipe/nn/archive.hpp"
#include "filmpipe/nn/convstack.hpp"

namespace filmpipe::metrics {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// 10 log10(max_val^2 / MSE); +inf when the images are identical.
double psnr(const ImageTensor& pred, const ImageTensor& target, double max_val = 1.0);

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Mean SSIM over channels and all fully-inside window positions, with a
/// Gaussian window. Throws InvalidInputError if the image is smaller than
/// the window.
double ssim(const ImageTensor& pred, const ImageTensor& target, const SsimParams& params = {});

namespace reference {
/// Direct per-window evaluation, serial.
double ssim(const ImageTensor& pred, const ImageTensor& target, const SsimParams& params = {});
}  // namespace reference

/// Learned full-reference metric; lower means more similar.
class PerceptualScorer {
 public:
  virtual ~PerceptualScorer() = default;
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual std::string variant() const = 0;
  [[nodiscard]] virtual double score(const ImageTensor& pred, const ImageTensor& target) const = 0;
};

/// LPIPS v0.1 on a VGG-16 trunk. Weights file keys: net.sliceN.<i>.{weight,bias}
/// for the trunk and linK.model.1.weight for the five 1x1 heads.
class Lpips final : public PerceptualScorer {
 public:
  static constexpr const char* kWeightsFile = "lpips_vgg.bin";

  static std::unique_ptr<Lpips> from_archive(const nn::Archive& archive);
  static std::unique_ptr<Lpips> random(std::uint64_t seed);

  [[nodiscard]] std::string name() const override { return "lpips"; }
  [[nodiscard]] std::string variant() const override { return "vgg16-v0.1"; }
  [[nodiscard]] double score(const ImageTensor& pred, const ImageTensor& target) const override;

  void save(const std::filesystem::path& path) const;

 private:
  nn::ConvStack<float> trunk_ = nn::vgg16_lpips<float>();
  std::vector<std::vector<float>> lin_;
};

/// PieAPP (sparse sampling): 64x64 patches at stride 27 on [0,255] inputs,
/// per-patch scores weighted by a learned confidence.
class PieApp final : public PerceptualScorer {
 public:
  static constexpr const char* kWeightsFile = "pieapp.bin";
  static constexpr int kPatch = 64;

  static std::unique_ptr<PieApp> from_archive(const nn::Archive& archive);
  static std::unique_ptr<PieApp> random(std::uint64_t seed);

  explicit PieApp(int stride = 27) : stride_(stride) {}

  [[nodiscard]] std::string name() const override { return "pieapp"; }
  [[nodiscard]] std::string variant() const override { return "pieapp-v0.1"; }
  [[nodiscard]] double score(const ImageTensor& pred, const ImageTensor& target) const override;

  void save(const std::filesystem::path& path) const;

 private:
  struct Linear {
    int in = 0;
    int out = 0;
    std::vector<float> weight;  // [out][in]
    std::vector<float> bias;
  };
  static std::unique_ptr<PieApp> build();
  void features(const ImageTensor& patch, std::vector<float>& feat, std::vector<float>& weight_feat) const;

  int stride_;
  nn::ConvStack<float> convs_;
  std::vector<std::size_t> taps_;
  Linear fc1_score_, fc2_score_, fc1_weight_, fc2_weight_, ref_score_subtract_;
};

/// Learned metrics found in weights_dir (or $FILMPIPE_WEIGHTS_DIR).
struct ScorerSet {
  std::shared_ptr<const PerceptualScorer> lpips;
  std::shared_ptr<const PerceptualScorer> pieapp;

  static ScorerSet resolve(const std::optional<std::filesystem::path>& weights_dir);
};

struct MetricRow {
  std::string pair_id;
  std::string method;
  double ssim = 0.0;
  double psnr = 0.0;
  std::optional<double> lpips;
  std::optional<double> pieapp;
};

/// How a method row is labelled in the rendered table.
struct MethodInfo {
  std::string tag = "model";
  std::string loss = "-";
  std::string noise = "-";
  std::string resize = "-";
};

struct Aggregate {
  MethodInfo info;
  std::size_t count = 0;
  double ssim = 0.0;
  double psnr = 0.0;
  std::optional<double> lpips;
  std::optional<double> pieapp;
};

struct EvaluationReport {
  std::vector<MetricRow> rows;        // sorted by (method order, pair_id)
  std::vector<Aggregate> aggregates;  // one per method, baseline first
  std::string config_fingerprint;
  std::string split;
  std::string lpips_variant = "unavailable";
  std::string pieapp_variant = "unavailable";
};

/// Scores each prediction against its film ground truth; with
/// include_baseline also scores the digital image itself as "baseline".
/// Throws InvalidInputError listing pair ids that have no ground truth.
EvaluationReport evaluate(const std::map<std::string, ImageTensor>& predictions,
                          const std::vector<dataset::PairedSample>& data, bool include_baseline,
                          const ScorerSet& scorers = {}, const MethodInfo& method = {});

void write_jsonl(const EvaluationReport& report, const std::filesystem::path& path);
void write_csv(const EvaluationReport& report, const std::filesystem::path& path);
std::string render_table(const EvaluationReport& report);

}  // namespace filmpipe::metrics
