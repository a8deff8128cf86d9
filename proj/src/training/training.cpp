#include "filmpipe/training/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "filmpipe/core/hash.hpp"
#include "filmpipe/imaging/geometry.hpp"
#include "filmpipe/nn/checkpoint.hpp"

namespace filmpipe::training {

namespace fs = std::filesystem;
using nlohmann::json;

Experiment parse_experiment(const std::string& name) {
  if (name == "single-image" || name == "single_image") {
    return Experiment::SingleImage;
  }
  if (name == "full-data" || name == "full_data") {
    return Experiment::FullData;
  }
  throw ConfigError("unknown experiment '" + name + "' (expected single-image or full-data)");
}

std::string to_string(Experiment e) {
  return e == Experiment::SingleImage ? "single-image" : "full-data";
}

void TrainConfig::validate() const {
  loss_spec.validate();
  network.validate();
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    fail("learning_rate must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) {
    fail("adam epsilon must be positive");
  }
  if (weight_decay < 0.0 || grad_clip < 0.0) {
    fail("weight_decay and grad_clip must be nonnegative");
  }
  const int m = network.required_multiple();
  if (patch_size < 1 || patch_size % m != 0) {
    fail("patch_size " + std::to_string(patch_size) + " must be divisible by the network's " +
         "required multiple " + std::to_string(m));
  }
  if (loss_spec.uses("vgg") && patch_size < losses::FeatureExtractor<float>::kMinSize) {
    fail("vgg loss needs patch_size >= " +
         std::to_string(losses::FeatureExtractor<float>::kMinSize));
  }
  const int want = noise ? 4 : 3;
  if (network.in_channels != want) {
    fail("noise=" + std::string(noise ? "true" : "false") + " requires a network with " +
         std::to_string(want) + " input channels, got " + std::to_string(network.in_channels));
  }
  if (network.out_channels != 3) {
    fail("network must produce 3 channels");
  }
  if (resize && !(scale_min > 0.0 && scale_max >= scale_min)) {
    fail("scale range must satisfy 0 < scale_min <= scale_max");
  }
  if (patches_per_image < 1 || epochs < 1 || batch_size < 1) {
    fail("patches_per_image, epochs and batch_size must be positive");
  }
  if (checkpoint_every < 1) {
    fail("checkpoint_every must be positive");
  }
  if (experiment == Experiment::SingleImage && (!single_image_id || single_image_id->empty())) {
    fail("single-image experiment requires single_image_id");
  }
}

dataset::PatchConfig TrainConfig::patch_config() const {
  dataset::PatchConfig p;
  p.patch_size = patch_size;
  p.resize = resize;
  p.scale_min = scale_min;
  p.scale_max = scale_max;
  p.noise = noise;
  p.noise_kind = noise_kind;
  return p;
}

nn::AdamConfig TrainConfig::adam_config() const {
  return {learning_rate, beta1, beta2, epsilon, weight_decay};
}

json TrainConfig::to_json() const {
  json j{{"loss", loss_spec.str()},
         {"noise", noise},
         {"noise_kind", dataset::to_string(noise_kind)},
         {"resize", resize},
         {"scale_range", {scale_min, scale_max}},
         {"patch_size", patch_size},
         {"patches_per_image", patches_per_image},
         {"epochs", epochs},
         {"batch_size", batch_size},
         {"learning_rate", learning_rate},
         {"beta1", beta1},
         {"beta2", beta2},
         {"epsilon", epsilon},
         {"weight_decay", weight_decay},
         {"grad_clip", grad_clip},
         {"seed", seed},
         {"experiment", to_string(experiment)},
         {"single_image_id", nullptr},
         {"checkpoint_every", checkpoint_every},
         {"fixed_patch", fixed_patch},
         {"network", network.to_json()}};
  if (single_image_id) {
    j["single_image_id"] = *single_image_id;
  }
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  static const std::set<std::string> known{
      "loss",       "noise",         "noise_kind",   "resize",         "scale_range",
      "patch_size", "patches_per_image", "epochs",   "batch_size",     "learning_rate",
      "beta1",      "beta2",         "epsilon",      "weight_decay",   "grad_clip",
      "seed",       "experiment",    "single_image_id", "checkpoint_every", "fixed_patch",
      "network"};
  if (!j.is_object()) {
    throw ConfigError("training config must be an object");
  }
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) {
      throw ConfigError("unknown training config key '" + k + "'");
    }
  }
  TrainConfig c;
  try {
    if (j.contains("loss")) {
      const json& l = j.at("loss");
      c.loss_spec = l.is_array() ? losses::LossSpec::from_list(l.get<std::vector<std::string>>())
                                 : losses::LossSpec::parse(l.get<std::string>());
    }
    c.noise = j.value("noise", c.noise);
    if (j.contains("noise_kind")) {
      c.noise_kind = dataset::parse_noise_kind(j.at("noise_kind").get<std::string>());
    }
    c.resize = j.value("resize", c.resize);
    if (j.contains("scale_range")) {
      const auto r = j.at("scale_range").get<std::vector<double>>();
      if (r.size() != 2) {
        throw ConfigError("scale_range must have two entries");
      }
      c.scale_min = r[0];
      c.scale_max = r[1];
    }
    c.patch_size = j.value("patch_size", c.patch_size);
    c.patches_per_image = j.value("patches_per_image", c.patches_per_image);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.seed = j.value("seed", c.seed);
    if (j.contains("experiment")) {
      c.experiment = parse_experiment(j.at("experiment").get<std::string>());
    }
    if (j.contains("single_image_id") && !j.at("single_image_id").is_null()) {
      c.single_image_id = j.at("single_image_id").get<std::string>();
    }
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.fixed_patch = j.value("fixed_patch", c.fixed_patch);
    if (j.contains("network")) {
      c.network = nn::NetworkConfig::from_json(j.at("network"));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed training config: ") + e.what());
  }
  return c;
}

std::string TrainConfig::fingerprint() const { return filmpipe::fingerprint(to_json().dump()); }

ImageTensor forward_full(const nn::TranslationNetwork<float>& net, const ImageTensor& img,
                         std::uint64_t noise_seed, dataset::NoiseKind noise_kind) {
  const int in = net.config().in_channels;
  if (img.channels() != 3) {
    throw ConfigError("expected a 3-channel image, got " + std::to_string(img.channels()) +
                      " channels (network takes " + std::to_string(in) + ")");
  }
  require_nonempty(img, "apply");
  const int m = net.config().required_multiple();
  const int H = img.height();
  const int W = img.width();
  ImageTensor x = imaging::pad_reflect(img, (m - H % m) % m, (m - W % m) % m);
  if (in == 4) {
    Rng rng(noise_seed);
    x = dataset::add_noise_channel(x, rng, noise_kind);
  }
  const ImageTensor y = net.forward(x);
  return imaging::crop(y, 0, 0, H, W);
}

ImageTensor apply(const nn::TranslationNetwork<float>& net, const ImageTensor& img,
                  std::optional<std::uint64_t> noise_seed, dataset::NoiseKind noise_kind) {
  return imaging::clamp01(forward_full(net, img, noise_seed.value_or(0), noise_kind));
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms
     << 'Z';
  return os.str();
}

class LogWriter {
 public:
  LogWriter() = default;
  LogWriter(const fs::path& path, bool append)
      : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) {
      throw IoError("cannot open training log " + path.string());
    }
  }
  void write(json j) {
    if (!out_.is_open()) {
      return;
    }
    j["timestamp"] = utc_now();
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void check_finite(const losses::LossValue& lv, const losses::LossSpec& spec, std::int64_t step) {
  for (const auto& t : spec.terms) {
    const double v = lv.per_term.at(t.name);
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "loss term '" << t.name << "' is non-finite (" << v << ") at step " << step;
      throw NonFiniteLossError(os.str());
    }
  }
  if (!std::isfinite(lv.total)) {
    throw NonFiniteLossError("total loss is non-finite at step " + std::to_string(step));
  }
}

void clip_gradients(const std::vector<nn::Parameter<float>*>& params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (float g : p->grad) {
      sq += static_cast<double>(g) * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) {
    return;
  }
  const float s = static_cast<float>(max_norm / norm);
  for (auto* p : params) {
    for (float& g : p->grad) {
      g *= s;
    }
  }
}

double validation_loss(const nn::TranslationNetwork<float>& net,
                       const std::vector<dataset::PairedSample>& val, const TrainConfig& cfg,
                       const losses::FeatureExtractor<float>* fx, std::int64_t step) {
  double sum = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const ImageTensor pred =
        forward_full(net, val[i].digital, derive_seed(cfg.seed ^ 0x76616cULL, i), cfg.noise_kind);
    const auto lv = losses::combined_loss(pred, val[i].film, cfg.loss_spec, fx);
    check_finite(lv, cfg.loss_spec, step);
    sum += lv.total;
  }
  return sum / static_cast<double>(val.size());
}

}  // namespace

TrainResult train(const TrainConfig& config, const std::vector<dataset::PairedSample>& train_pairs,
                  const std::vector<dataset::PairedSample>& val_pairs,
                  const TrainOptions& options) {
  config.validate();

  std::vector<dataset::PairedSample> pairs;
  std::vector<dataset::PairedSample> val;
  if (config.experiment == Experiment::SingleImage) {
    auto it = std::find_if(train_pairs.begin(), train_pairs.end(),
                           [&](const auto& p) { return p.pair_id == *config.single_image_id; });
    if (it == train_pairs.end()) {
      throw ConfigError("single_image_id '" + *config.single_image_id + "' not in dataset");
    }
    pairs.push_back(*it);
  } else {
    pairs = train_pairs;
    val = val_pairs;
  }
  if (pairs.empty()) {
    throw InvalidInputError("training set is empty");
  }

  std::optional<losses::FeatureExtractor<float>> owned_fx;
  const losses::FeatureExtractor<float>* fx = options.feature_extractor;
  if (config.loss_spec.uses("vgg") && fx == nullptr) {
    owned_fx.emplace(losses::FeatureExtractor<float>::resolve(options.weights_dir));
    fx = &*owned_fx;
  }

  nn::Adam<float> adam(config.adam_config());
  std::int64_t start = 0;
  std::optional<double> best_val;
  std::optional<nn::TranslationNetwork<float>> net_opt;
  if (options.resume_from) {
    nn::Checkpoint ck = nn::load_checkpoint(*options.resume_from, config.network.in_channels);
    if (!(ck.network.config() == config.network)) {
      throw ConfigError("checkpoint network " + ck.network.config().to_json().dump() +
                        " does not match config " + config.network.to_json().dump());
    }
    start = ck.step;
    if (ck.adam_steps) {
      adam.restore(*ck.adam_steps, std::move(ck.adam_m), std::move(ck.adam_v));
    }
    if (ck.extra.contains("best_val") && ck.extra.at("best_val").is_number()) {
      best_val = ck.extra.at("best_val").get<double>();
    }
    net_opt.emplace(std::move(ck.network));
  } else {
    net_opt.emplace(config.network, derive_seed(config.seed, 1));
  }
  nn::TranslationNetwork<float>& net = *net_opt;

  const dataset::PatchConfig patch_cfg = config.patch_config();
  const std::size_t per_epoch = static_cast<std::size_t>(config.patches_per_image) * pairs.size();
  const std::int64_t steps_per_epoch =
      static_cast<std::int64_t>((per_epoch + config.batch_size - 1) / config.batch_size);
  std::int64_t total = steps_per_epoch * config.epochs;
  if (options.max_steps) {
    total = std::min(total, *options.max_steps);
  }

  fs::path ckpt_dir;
  LogWriter log;
  if (options.out_dir) {
    ckpt_dir = *options.out_dir / "checkpoints";
    fs::create_directories(ckpt_dir);
    log = LogWriter(*options.out_dir / "train_log.jsonl", options.resume_from.has_value());
    log.write({{"event", "start"},
               {"step", start},
               {"total_steps", total},
               {"config", config.to_json()},
               {"config_fingerprint", config.fingerprint()}});
  }

  TrainResult result{net, {}, {}, {}, best_val, start};

  auto save = [&](const std::string& name, std::int64_t step) {
    if (!options.out_dir) {
      return;
    }
    const fs::path path = ckpt_dir / name;
    json extra{{"train_config", config.to_json()},
               {"config_fingerprint", config.fingerprint()},
               {"best_val", best_val ? json(*best_val) : json(nullptr)}};
    nn::save_checkpoint(path, net, step, extra, &adam);
    CheckpointRecord rec{step, path, file_fingerprint(path)};
    log.write({{"event", "checkpoint"},
               {"step", step},
               {"path", path.filename().string()},
               {"hash", rec.hash}});
    result.checkpoints.push_back(std::move(rec));
  };

  std::optional<dataset::EpochStream> stream;
  int stream_epoch = -1;
  std::optional<dataset::PatchPair> fixed;
  const auto params = net.parameters();

  for (std::int64_t step = start + 1; step <= total; ++step) {
    const std::int64_t k = step - 1;
    const int epoch = static_cast<int>(k / steps_per_epoch);
    const std::size_t first = static_cast<std::size_t>(k % steps_per_epoch) * config.batch_size;
    const std::size_t last = std::min(first + config.batch_size, per_epoch);
    if (epoch != stream_epoch) {
      stream.emplace(dataset::make_epoch(pairs, config.patches_per_image, patch_cfg,
                                         derive_seed(config.seed, 100 + epoch)));
      stream_epoch = epoch;
    }

    net.zero_grad();
    StepRecord rec{step, 0.0, {}};
    const double inv = 1.0 / static_cast<double>(last - first);
    for (std::size_t i = first; i < last; ++i) {
      if (config.fixed_patch && !fixed) {
        fixed = stream->at(0);
      }
      const dataset::PatchPair patch = config.fixed_patch ? *fixed : stream->at(i);
      const ImageTensor out = net.forward_train(patch.input);
      ImageTensor grad;
      const auto lv = losses::combined_loss(out, patch.target, config.loss_spec, fx, &grad);
      check_finite(lv, config.loss_spec, step);
      rec.total += inv * lv.total;
      for (const auto& [name, v] : lv.per_term) {
        rec.per_term[name] += inv * v;
      }
      if (last - first > 1) {
        for (float& g : grad.values()) {
          g = static_cast<float>(g * inv);
        }
      }
      net.backward(grad);
    }
    if (config.grad_clip > 0.0) {
      clip_gradients(params, config.grad_clip);
    }
    adam.step(params);

    log.write({{"event", "step"},
               {"step", step},
               {"total", rec.total},
               {"losses", rec.per_term},
               {"lr", adam.current_lr()}});
    if (options.on_step) {
      options.on_step(rec);
    }
    result.steps.push_back(rec);

    const bool boundary = step % config.checkpoint_every == 0 || step == total;
    if (boundary && !val.empty()) {
      const double v = validation_loss(net, val, config, fx, step);
      result.validations.push_back({step, v});
      log.write({{"event", "validation"}, {"step", step}, {"loss", v}});
      if (!best_val || v < *best_val) {
        best_val = v;
        save("ckpt_best.bin", step);
      }
    }
    if (boundary) {
      save(nn::checkpoint_filename(step), step);
    }
  }

  if (options.out_dir && total > start) {
    fs::copy_file(ckpt_dir / nn::checkpoint_filename(total), ckpt_dir / "ckpt_final.bin",
                  fs::copy_options::overwrite_existing);
  }
  log.write({{"event", "end"}, {"step", std::max(total, start)},
             {"best_val", best_val ? json(*best_val) : json(nullptr)}});

  result.network = net;
  result.best_val = best_val;
  result.total_steps = std::max(total, start);
  return result;
}

RunSummary summarize(const TrainResult& result) {
  RunSummary s;
  s.total_steps = result.total_steps;
  for (const auto& r : result.steps) {
    s.mean_total += r.total;
    for (const auto& [k, v] : r.per_term) {
      s.mean_per_term[k] += v;
    }
  }
  if (!result.steps.empty()) {
    const double n = static_cast<double>(result.steps.size());
    s.mean_total /= n;
    for (auto& [k, v] : s.mean_per_term) {
      v /= n;
    }
  }
  s.checkpoints = result.checkpoints;
  s.best_val = result.best_val;
  return s;
}

RunSummary summarize_log(const fs::path& log_path) {
  std::ifstream in(log_path);
  if (!in) {
    throw IoError("cannot read training log " + log_path.string());
  }
  TrainResult r{nn::TranslationNetwork<float>(nn::NetworkConfig{}, 0), {}, {}, {}, std::nullopt, 0};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IoError(log_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const std::string ev = j.value("event", "");
    const std::int64_t step = j.value("step", std::int64_t{0});
    if (ev == "step") {
      r.steps.push_back({step, j.at("total").get<double>(),
                         j.at("losses").get<std::map<std::string, double>>()});
      r.total_steps = std::max(r.total_steps, step);
    } else if (ev == "checkpoint") {
      r.checkpoints.push_back(
          {step, log_path.parent_path() / "checkpoints" / j.at("path").get<std::string>(),
           j.at("hash").get<std::string>()});
    } else if (ev == "validation") {
      const double v = j.at("loss").get<double>();
      if (!r.best_val || v < *r.best_val) {
        r.best_val = v;
      }
    } else if (ev == "end" || ev == "start") {
      r.total_steps = std::max(r.total_steps, step);
    }
  }
  return summarize(r);
}

}  // namespace filmpipe::training
