#include "filmpipe/metrics/metrics.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "filmpipe/imaging/filter.hpp"

namespace filmpipe::metrics {

namespace fs = std::filesystem;

double psnr(const ImageTensor& pred, const ImageTensor& target, double max_val) {
  require_same_shape(pred, target, "psnr");
  require_nonempty(pred, "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(pred.size());
  if (mse == 0.0) {
    return kInf;
  }
  return 10.0 * std::log10(max_val * max_val / mse);
}

namespace {

void check_ssim_input(const ImageTensor& pred, const ImageTensor& target, const SsimParams& p) {
  require_same_shape(pred, target, "ssim");
  if (p.window < 1 || p.window % 2 == 0) {
    throw InvalidInputError("ssim: window must be odd and positive");
  }
  if (pred.height() < p.window || pred.width() < p.window) {
    throw InvalidInputError("ssim: image " + pred.shape().str() + " smaller than the " +
                            std::to_string(p.window) + "x" + std::to_string(p.window) + " window");
  }
}

double ssim_at(double mx, double my, double xx, double yy, double xy, double c1, double c2) {
  const double vx = xx - mx * mx;
  const double vy = yy - my * my;
  const double cov = xy - mx * my;
  return ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

}  // namespace

double ssim(const ImageTensor& pred, const ImageTensor& target, const SsimParams& params) {
  check_ssim_input(pred, target, params);
  const imaging::GaussianKernel kernel(params.window, params.sigma);
  const std::vector<double>& g = kernel.weights();
  const int win = params.window;
  const int H = pred.height();
  const int W = pred.width();
  const int oh = H - win + 1;
  const int ow = W - win + 1;
  const double c1 = std::pow(params.k1 * params.data_range, 2);
  const double c2 = std::pow(params.k2 * params.data_range, 2);

  double total = 0.0;
  std::vector<double> row_sums(static_cast<std::size_t>(oh));
  // horizontal pass: 5 moment maps of size H x ow
  std::vector<double> h(static_cast<std::size_t>(5) * H * ow);
  for (int c = 0; c < pred.channels(); ++c) {
    const float* x = pred.plane(c);
    const float* y = target.plane(c);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < H; ++r) {
      const float* xr = x + static_cast<std::size_t>(r) * W;
      const float* yr = y + static_cast<std::size_t>(r) * W;
      for (int j = 0; j < ow; ++j) {
        double s[5] = {0, 0, 0, 0, 0};
        for (int k = 0; k < win; ++k) {
          const double a = xr[j + k];
          const double b = yr[j + k];
          const double w = g[k];
          s[0] += w * a;
          s[1] += w * b;
          s[2] += w * a * a;
          s[3] += w * b * b;
          s[4] += w * a * b;
        }
        for (int m = 0; m < 5; ++m) {
          h[(static_cast<std::size_t>(m) * H + r) * ow + j] = s[m];
        }
      }
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < oh; ++i) {
      double acc = 0.0;
      for (int j = 0; j < ow; ++j) {
        double s[5] = {0, 0, 0, 0, 0};
        for (int k = 0; k < win; ++k) {
          const double w = g[k];
          for (int m = 0; m < 5; ++m) {
            s[m] += w * h[(static_cast<std::size_t>(m) * H + i + k) * ow + j];
          }
        }
        acc += ssim_at(s[0], s[1], s[2], s[3], s[4], c1, c2);
      }
      row_sums[i] = acc;
    }
    for (double v : row_sums) {
      total += v;
    }
  }
  return total / (static_cast<double>(pred.channels()) * oh * ow);
}

namespace reference {

double ssim(const ImageTensor& pred, const ImageTensor& target, const SsimParams& params) {
  check_ssim_input(pred, target, params);
  const imaging::GaussianKernel kernel(params.window, params.sigma);
  const std::vector<double>& g = kernel.weights();
  const int win = params.window;
  const int oh = pred.height() - win + 1;
  const int ow = pred.width() - win + 1;
  const double c1 = std::pow(params.k1 * params.data_range, 2);
  const double c2 = std::pow(params.k2 * params.data_range, 2);
  double total = 0.0;
  for (int c = 0; c < pred.channels(); ++c) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int u = 0; u < win; ++u) {
          for (int v = 0; v < win; ++v) {
            const double w = g[u] * g[v];
            const double a = pred(c, i + u, j + v);
            const double b = target(c, i + u, j + v);
            mx += w * a;
            my += w * b;
            xx += w * a * a;
            yy += w * b * b;
            xy += w * a * b;
          }
        }
        total += ssim_at(mx, my, xx, yy, xy, c1, c2);
      }
    }
  }
  return total / (static_cast<double>(pred.channels()) * oh * ow);
}

}  // namespace reference

// ---------------------------------------------------------------- LPIPS

namespace {

constexpr std::size_t kLpipsTaps[5] = {3, 8, 15, 22, 29};
constexpr int kLpipsChannels[5] = {64, 128, 256, 512, 512};
constexpr float kLpipsShift[3] = {-0.030f, -0.088f, -0.188f};
constexpr float kLpipsScale[3] = {0.458f, 0.448f, 0.450f};

void require_rgb_pair(const ImageTensor& a, const ImageTensor& b, const char* op, int min_size) {
  require_same_shape(a, b, op);
  require_channels(a, 3, op);
  if (a.height() < min_size || a.width() < min_size) {
    throw InvalidInputError(std::string(op) + ": image " + a.shape().str() + " smaller than " +
                            std::to_string(min_size) + "x" + std::to_string(min_size));
  }
}

}  // namespace

std::unique_ptr<Lpips> Lpips::from_archive(const nn::Archive& archive) {
  auto out = std::make_unique<Lpips>();
  out->trunk_.load(archive);
  for (int k = 0; k < 5; ++k) {
    const std::vector<std::int64_t> shape{1, kLpipsChannels[k], 1, 1};
    out->lin_.push_back(archive.get<float>("lin" + std::to_string(k) + ".model.1.weight", &shape));
  }
  return out;
}

std::unique_ptr<Lpips> Lpips::random(std::uint64_t seed) {
  auto out = std::make_unique<Lpips>();
  out->trunk_.init_random(seed);
  Rng rng(derive_seed(seed, 1));
  for (int c : kLpipsChannels) {
    std::vector<float> w(static_cast<std::size_t>(c));
    for (float& v : w) {
      v = static_cast<float>(std::abs(rng.normal()) / c);
    }
    out->lin_.push_back(std::move(w));
  }
  return out;
}

void Lpips::save(const fs::path& path) const {
  nn::Archive ar;
  ar.meta["format"] = "lpips";
  ar.meta["variant"] = variant();
  trunk_.save_into(ar);
  for (int k = 0; k < 5; ++k) {
    ar.put("lin" + std::to_string(k) + ".model.1.weight", lin_[k], {1, kLpipsChannels[k], 1, 1});
  }
  ar.save(path);
}

double Lpips::score(const ImageTensor& pred, const ImageTensor& target) const {
  require_rgb_pair(pred, target, "lpips", 16);
  auto prep = [](const ImageTensor& x) {
    ImageTensor out(x.shape());
    const std::size_t n = x.shape().plane();
    for (int c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        out.plane(c)[i] = (2.0f * x.plane(c)[i] - 1.0f - kLpipsShift[c]) / kLpipsScale[c];
      }
    }
    return out;
  };
  const std::vector<std::size_t> taps(std::begin(kLpipsTaps), std::end(kLpipsTaps));
  const auto f0 = trunk_.forward_taps(prep(pred), taps);
  const auto f1 = trunk_.forward_taps(prep(target), taps);
  double total = 0.0;
  for (std::size_t k = 0; k < taps.size(); ++k) {
    const ImageTensor& a = f0[k];
    const ImageTensor& b = f1[k];
    const std::size_t n = a.shape().plane();
    const int C = a.channels();
    double layer = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double na = 0.0;
      double nb = 0.0;
      for (int c = 0; c < C; ++c) {
        na += static_cast<double>(a.plane(c)[i]) * a.plane(c)[i];
        nb += static_cast<double>(b.plane(c)[i]) * b.plane(c)[i];
      }
      na = std::sqrt(na) + 1e-10;
      nb = std::sqrt(nb) + 1e-10;
      double v = 0.0;
      for (int c = 0; c < C; ++c) {
        const double d = a.plane(c)[i] / na - b.plane(c)[i] / nb;
        v += lin_[k][c] * d * d;
      }
      layer += v;
    }
    total += layer / static_cast<double>(n);
  }
  return total;
}

// ---------------------------------------------------------------- PieAPP

namespace {

constexpr int kPieFeatures = 120832;
constexpr int kPieWeightFeatures = 2048;

}  // namespace

std::unique_ptr<PieApp> PieApp::build() {
  auto p = std::make_unique<PieApp>();
  nn::ConvStack<float>& s = p->convs_;
  auto conv = [&s](int i, int in, int out) {
    s.add_conv("conv" + std::to_string(i), in, out);
    s.add_relu();
  };
  conv(1, 3, 64);
  conv(2, 64, 64);
  s.add_pool();
  conv(3, 64, 64);
  p->taps_.push_back(s.size() - 1);
  conv(4, 64, 128);
  s.add_pool();
  conv(5, 128, 128);
  p->taps_.push_back(s.size() - 1);
  conv(6, 128, 128);
  s.add_pool();
  conv(7, 128, 256);
  p->taps_.push_back(s.size() - 1);
  conv(8, 256, 256);
  s.add_pool();
  conv(9, 256, 256);
  p->taps_.push_back(s.size() - 1);
  conv(10, 256, 512);
  s.add_pool();
  conv(11, 512, 512);
  p->taps_.push_back(s.size() - 1);
  p->fc1_score_ = {kPieFeatures, 512, {}, {}};
  p->fc2_score_ = {512, 1, {}, {}};
  p->fc1_weight_ = {kPieWeightFeatures, 512, {}, {}};
  p->fc2_weight_ = {512, 1, {}, {}};
  p->ref_score_subtract_ = {1, 1, {}, {}};
  return p;
}

std::unique_ptr<PieApp> PieApp::from_archive(const nn::Archive& archive) {
  auto p = build();
  p->convs_.load(archive);
  auto load = [&archive](Linear& l, const std::string& key) {
    const std::vector<std::int64_t> ws{l.out, l.in};
    const std::vector<std::int64_t> bs{l.out};
    l.weight = archive.get<float>(key + ".weight", &ws);
    l.bias = archive.get<float>(key + ".bias", &bs);
  };
  load(p->fc1_score_, "fc1_score");
  load(p->fc2_score_, "fc2_score");
  load(p->fc1_weight_, "fc1_weight");
  load(p->fc2_weight_, "fc2_weight");
  load(p->ref_score_subtract_, "ref_score_subtract");
  return p;
}

std::unique_ptr<PieApp> PieApp::random(std::uint64_t seed) {
  auto p = build();
  p->convs_.init_random(seed);
  Rng rng(derive_seed(seed, 2));
  for (Linear* l : {&p->fc1_score_, &p->fc2_score_, &p->fc1_weight_, &p->fc2_weight_,
                    &p->ref_score_subtract_}) {
    l->weight.resize(static_cast<std::size_t>(l->in) * l->out);
    l->bias.resize(static_cast<std::size_t>(l->out));
    const double sd = 1.0 / std::sqrt(static_cast<double>(l->in));
    for (float& v : l->weight) {
      v = static_cast<float>(sd * rng.normal());
    }
    for (float& v : l->bias) {
      v = static_cast<float>(0.1 * rng.normal());
    }
  }
  // keep patch confidences positive, as trained models do
  for (float& v : p->fc2_weight_.bias) {
    v = std::abs(v) + 1.0f;
  }
  return p;
}

void PieApp::save(const fs::path& path) const {
  nn::Archive ar;
  ar.meta["format"] = "pieapp";
  ar.meta["variant"] = variant();
  convs_.save_into(ar);
  auto put = [&ar](const Linear& l, const std::string& key) {
    ar.put(key + ".weight", l.weight, {l.out, l.in});
    ar.put(key + ".bias", l.bias, {l.out});
  };
  put(fc1_score_, "fc1_score");
  put(fc2_score_, "fc2_score");
  put(fc1_weight_, "fc1_weight");
  put(fc2_weight_, "fc2_weight");
  put(ref_score_subtract_, "ref_score_subtract");
  ar.save(path);
}

void PieApp::features(const ImageTensor& patch, std::vector<float>& feat,
                      std::vector<float>& weight_feat) const {
  const auto maps = convs_.forward_taps(patch, taps_);
  feat.clear();
  for (const auto& m : maps) {
    feat.insert(feat.end(), m.values().begin(), m.values().end());
  }
  weight_feat.assign(maps.back().values().begin(), maps.back().values().end());
}

double PieApp::score(const ImageTensor& pred, const ImageTensor& target) const {
  require_rgb_pair(pred, target, "pieapp", kPatch);
  using Mat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vec = Eigen::VectorXf;
  auto apply = [](const Linear& l, const Vec& x) {
    const Eigen::Map<const Mat> w(l.weight.data(), l.out, l.in);
    const Eigen::Map<const Vec> b(l.bias.data(), l.out);
    return Vec(w * x + b);
  };
  auto scaled = [](const ImageTensor& img, int top, int left) {
    ImageTensor p(3, kPatch, kPatch);
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < kPatch; ++y) {
        for (int x = 0; x < kPatch; ++x) {
          p(c, y, x) = img(c, top + y, left + x) * 255.0f;
        }
      }
    }
    return p;
  };

  double num = 0.0;
  double den = 0.0;
  std::vector<float> fx, wx, fy, wy;
  for (int top = 0; top + kPatch <= pred.height(); top += stride_) {
    for (int left = 0; left + kPatch <= pred.width(); left += stride_) {
      features(scaled(pred, top, left), fx, wx);
      features(scaled(target, top, left), fy, wy);
      Vec df(kPieFeatures);
      for (int i = 0; i < kPieFeatures; ++i) {
        df[i] = fy[i] - fx[i];
      }
      Vec dw(kPieWeightFeatures);
      for (int i = 0; i < kPieWeightFeatures; ++i) {
        dw[i] = wy[i] - wx[i];
      }
      const Vec h = apply(fc1_score_, df).cwiseMax(0.0f);
      const Vec s = apply(fc2_score_, h) * 0.01f;
      const double d = apply(ref_score_subtract_, s)[0];
      const Vec hw = apply(fc1_weight_, dw).cwiseMax(0.0f);
      const double w = static_cast<double>(apply(fc2_weight_, hw)[0]) + 1e-6;
      num += d * w;
      den += w;
    }
  }
  return num / den;
}

ScorerSet ScorerSet::resolve(const std::optional<fs::path>& weights_dir) {
  ScorerSet s;
  if (const auto p = nn::find_weights(Lpips::kWeightsFile, weights_dir)) {
    s.lpips = Lpips::from_archive(nn::Archive::load(*p));
  }
  if (const auto p = nn::find_weights(PieApp::kWeightsFile, weights_dir)) {
    s.pieapp = PieApp::from_archive(nn::Archive::load(*p));
  }
  return s;
}

// ---------------------------------------------------------------- evaluation

namespace {

MetricRow score_row(const std::string& id, const std::string& method, const ImageTensor& pred,
                    const ImageTensor& target, const ScorerSet& scorers) {
  if (pred.shape() != target.shape()) {
    throw InvalidInputError("pair " + id + ": prediction " + pred.shape().str() +
                            " does not match ground truth " + target.shape().str());
  }
  MetricRow r{id, method, ssim(pred, target), psnr(pred, target), std::nullopt, std::nullopt};
  if (scorers.lpips) {
    r.lpips = scorers.lpips->score(pred, target);
  }
  if (scorers.pieapp) {
    r.pieapp = scorers.pieapp->score(pred, target);
  }
  return r;
}

}  // namespace

EvaluationReport evaluate(const std::map<std::string, ImageTensor>& predictions,
                          const std::vector<dataset::PairedSample>& data, bool include_baseline,
                          const ScorerSet& scorers, const MethodInfo& method) {
  std::map<std::string, const dataset::PairedSample*> by_id;
  for (const auto& s : data) {
    by_id[s.pair_id] = &s;
  }
  std::vector<std::string> missing;
  for (const auto& [id, img] : predictions) {
    if (!by_id.contains(id)) {
      missing.push_back(id);
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) {
      list += (list.empty() ? "" : ", ") + id;
    }
    throw InvalidInputError("no ground truth for predictions: " + list);
  }
  if (method.tag == "baseline" && !predictions.empty()) {
    throw InvalidInputError("method tag 'baseline' is reserved");
  }

  EvaluationReport rep;
  if (scorers.lpips) {
    rep.lpips_variant = scorers.lpips->variant();
  }
  if (scorers.pieapp) {
    rep.pieapp_variant = scorers.pieapp->variant();
  }
  std::vector<std::pair<std::string, MethodInfo>> methods;
  if (include_baseline) {
    for (const auto& [id, s] : by_id) {
      rep.rows.push_back(score_row(id, "baseline", s->digital, s->film, scorers));
    }
    methods.push_back({"baseline", MethodInfo{"baseline", "Baseline", "-", "-"}});
  }
  if (!predictions.empty()) {
    for (const auto& [id, img] : predictions) {
      rep.rows.push_back(score_row(id, method.tag, img, by_id.at(id)->film, scorers));
    }
    methods.push_back({method.tag, method});
  }

  for (const auto& [tag, info] : methods) {
    Aggregate a;
    a.info = info;
    double lp = 0.0;
    double pa = 0.0;
    bool all_lp = true;
    bool all_pa = true;
    for (const auto& r : rep.rows) {
      if (r.method != tag) {
        continue;
      }
      ++a.count;
      a.ssim += r.ssim;
      a.psnr += r.psnr;
      all_lp = all_lp && r.lpips.has_value();
      all_pa = all_pa && r.pieapp.has_value();
      lp += r.lpips.value_or(0.0);
      pa += r.pieapp.value_or(0.0);
    }
    if (a.count > 0) {
      const double n = static_cast<double>(a.count);
      a.ssim /= n;
      a.psnr /= n;
      if (all_lp) {
        a.lpips = lp / n;
      }
      if (all_pa) {
        a.pieapp = pa / n;
      }
    }
    rep.aggregates.push_back(a);
  }
  return rep;
}

namespace {

nlohmann::json number_or(double v) {
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  return v;
}

nlohmann::json optional_or(const std::optional<double>& v) {
  return v ? number_or(*v) : nlohmann::json("unavailable");
}

std::string fixed(double v, int digits) {
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

std::string fixed(const std::optional<double>& v, int digits) {
  return v ? fixed(*v, digits) : "unavailable";
}

std::vector<std::vector<std::string>> table_cells(const EvaluationReport& report) {
  std::vector<std::vector<std::string>> rows{
      {"Loss", "Noise", "Resize", "SSIM", "PSNR", "LPIPS", "PieAPP"}};
  for (const auto& a : report.aggregates) {
    rows.push_back({a.info.loss, a.info.noise, a.info.resize, fixed(a.ssim, 4), fixed(a.psnr, 2),
                    fixed(a.lpips, 4), fixed(a.pieapp, 4)});
  }
  return rows;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  return out;
}

}  // namespace

void write_jsonl(const EvaluationReport& report, const fs::path& path) {
  std::ofstream out = open_out(path);
  for (const auto& r : report.rows) {
    const nlohmann::json j{{"pair_id", r.pair_id},
                           {"method", r.method},
                           {"ssim", number_or(r.ssim)},
                           {"psnr", number_or(r.psnr)},
                           {"lpips", optional_or(r.lpips)},
                           {"pieapp", optional_or(r.pieapp)},
                           {"lpips_variant", report.lpips_variant},
                           {"split", report.split},
                           {"config_fingerprint", report.config_fingerprint}};
    out << j.dump() << "\n";
  }
}

void write_csv(const EvaluationReport& report, const fs::path& path) {
  std::ofstream out = open_out(path);
  for (const auto& row : table_cells(report)) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "," : "") << row[i];
    }
    out << "\n";
  }
}

std::string render_table(const EvaluationReport& report) {
  const auto rows = table_cells(report);
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      width[i] = std::max(width[i], row[i].size());
    }
  }
  std::ostringstream out;
  out << "split: " << (report.split.empty() ? "-" : report.split)
      << "  config: " << (report.config_fingerprint.empty() ? "-" : report.config_fingerprint)
      << "  lpips: " << report.lpips_variant << "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      const bool text = i < 3;
      out << (i ? "  " : "") << (text ? std::left : std::right) << std::setw(static_cast<int>(width[i]))
          << rows[r][i];
    }
    out << "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) {
        total += w + 2;
      }
      out << std::string(total - 2, '-') << "\n";
    }
  }
  return out.str();
}

}  // namespace filmpipe::metrics
