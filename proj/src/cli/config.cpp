#include "filmpipe/cli/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "filmpipe/core/hash.hpp"

namespace filmpipe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Values that stay text even when they look numeric (ids like 0042, paths).
const std::set<std::string>& string_keys() {
  static const std::set<std::string> k{
      "name",       "raw_dir",     "processed_dir", "out_dir",     "weights_dir",
      "checkpoint", "resume",      "splits_file",   "report_jsonl", "report_csv",
      "split",      "experiment",  "single_image_id", "noise_kind", "loss"};
  return k;
}

// TrainConfig keys that sit at the top level of an experiment config.
const std::set<std::string>& train_keys() {
  static const std::set<std::string> k{
      "loss",          "noise",         "noise_kind", "resize",     "scale_range",
      "patch_size",    "patches_per_image", "epochs", "batch_size", "learning_rate",
      "beta1",         "beta2",         "epsilon",    "weight_decay", "grad_clip",
      "seed",          "experiment",    "single_image_id", "checkpoint_every", "fixed_patch"};
  return k;
}

const std::set<std::string>& other_keys() {
  static const std::set<std::string> k{
      "name",       "raw_dir",  "processed_dir", "out_dir",     "weights_dir",   "checkpoint",
      "resume",     "splits_file", "report_jsonl", "report_csv", "split",        "include_baseline",
      "preprocess", "encoder_filters", "kernel_size"};
  return k;
}

json convert(const YAML::Node& n, bool keep_text) {
  switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      // "!" tags quoted scalars
      if (keep_text || n.Tag() == "!") {
        return n.Scalar();
      }
      return parse_scalar(n.Scalar());
    case YAML::NodeType::Sequence: {
      json a = json::array();
      for (const auto& e : n) {
        a.push_back(convert(e, keep_text));
      }
      return a;
    }
    case YAML::NodeType::Map: {
      json o = json::object();
      for (const auto& kv : n) {
        const std::string key = kv.first.as<std::string>();
        if (key == "loss" && kv.second.IsMap()) {
          // json objects sort their keys; term order names the table row
          json terms = json::array();
          for (const auto& t : kv.second) {
            terms.push_back({{t.first.as<std::string>(), convert(t.second, false)}});
          }
          o[key] = terms;
          continue;
        }
        o[key] = convert(kv.second, string_keys().contains(key));
      }
      return o;
    }
  }
  return nullptr;
}

std::string loss_text(const json& v) {
  if (v.is_string()) {
    return v.get<std::string>();
  }
  std::vector<std::string> items;
  if (v.is_array()) {
    for (const auto& e : v) {
      if (e.is_object()) {
        for (const auto& [k, w] : e.items()) {
          items.push_back(k + ":" + w.dump());
        }
      } else {
        items.push_back(e.is_string() ? e.get<std::string>() : e.dump());
      }
    }
  } else if (v.is_object()) {
    for (const auto& [k, w] : v.items()) {
      items.push_back(k + ":" + w.dump());
    }
  } else {
    throw ConfigError("loss must be a string, list or mapping");
  }
  std::string s;
  for (const auto& i : items) {
    s += (s.empty() ? "" : ",") + i;
  }
  return s;
}

}  // namespace

json parse_scalar(const std::string& text) {
  static const std::regex int_re(R"(^[-+]?[0-9]+$)");
  static const std::regex float_re(R"(^[-+]?([0-9]+\.?[0-9]*|\.[0-9]+)([eE][-+]?[0-9]+)?$)");
  if (text == "~" || text == "null" || text == "Null" || text.empty()) {
    return nullptr;
  }
  if (text == "true" || text == "True" || text == "TRUE" || text == "yes" || text == "Yes") {
    return true;
  }
  if (text == "false" || text == "False" || text == "FALSE" || text == "no" || text == "No") {
    return false;
  }
  if (std::regex_match(text, int_re)) {
    try {
      return text[0] == '-' ? json(std::stoll(text)) : json(std::stoull(text));
    } catch (const std::out_of_range&) {
      return text;
    }
  }
  if (std::regex_match(text, float_re)) {
    return std::stod(text);
  }
  return text;
}

json yaml_to_json(const std::string& text) {
  try {
    return convert(YAML::Load(text), false);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("invalid YAML: ") + e.what());
  }
}

void deep_merge(json& base, const json& overlay) {
  if (!base.is_object() || !overlay.is_object()) {
    base = overlay;
    return;
  }
  for (const auto& [k, v] : overlay.items()) {
    if (base.contains(k) && base[k].is_object() && v.is_object()) {
      deep_merge(base[k], v);
    } else {
      base[k] = v;
    }
  }
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  std::vector<std::string> path;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) {
      throw ConfigError("bad override key '" + key + "'");
    }
    path.push_back(part);
  }
  json value;
  if (string_keys().contains(path.back())) {
    value = raw;
  } else {
    try {
      value = raw.empty() ? json(nullptr) : convert(YAML::Load(raw), false);
    } catch (const YAML::Exception&) {
      value = raw;
    }
  }
  json* node = &j;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    json& next = (*node)[path[i]];
    if (!next.is_object()) {
      next = json::object();
    }
    node = &next;
  }
  (*node)[path.back()] = value;
}

json ExperimentConfig::preset(const std::string& name) {
  // both follow the same optimizer and patch schedule
  json common{{"patch_size", 256},        {"patches_per_image", 400}, {"epochs", 1},
              {"batch_size", 1},          {"learning_rate", 1e-3},    {"seed", 42},
              {"checkpoint_every", 500},  {"encoder_filters", {64, 128, 256}},
              {"kernel_size", 3},         {"loss", "mse:1"},          {"include_baseline", true}};
  if (name == "single-image") {
    common["experiment"] = "single-image";
    common["split"] = "full";
    return common;
  }
  if (name == "full-data") {
    common["experiment"] = "full-data";
    common["split"] = "test";
    return common;
  }
  throw ConfigError("unknown experiment preset '" + name + "' (expected single-image or full-data)");
}

ExperimentConfig ExperimentConfig::resolve(const std::optional<fs::path>& file,
                                           const std::vector<std::string>& overrides) {
  json from_file = json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) {
      throw ConfigError("cannot read config file " + file->string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    from_file = yaml_to_json(buf.str());
    if (from_file.is_null()) {
      from_file = json::object();
    }
    if (!from_file.is_object()) {
      throw ConfigError(file->string() + ": config must be a mapping");
    }
  }
  json over = json::object();
  for (const auto& o : overrides) {
    apply_override(over, o);
  }
  std::string preset_name = "full-data";
  if (over.contains("experiment")) {
    preset_name = over["experiment"].get<std::string>();
  } else if (from_file.contains("experiment") && from_file["experiment"].is_string()) {
    preset_name = from_file["experiment"].get<std::string>();
  }
  json merged = preset(training::to_string(training::parse_experiment(preset_name)));
  deep_merge(merged, from_file);
  deep_merge(merged, over);
  return from_json(merged);
}

ExperimentConfig ExperimentConfig::from_json(const json& m) {
  if (!m.is_object()) {
    throw ConfigError("experiment config must be a mapping");
  }
  json tj = json::object();
  for (const auto& [k, v] : m.items()) {
    if (train_keys().contains(k)) {
      tj[k] = k == "loss" ? json(loss_text(v)) : v;
    } else if (!other_keys().contains(k)) {
      std::string valid;
      for (const auto* set : {&train_keys(), &other_keys()}) {
        for (const auto& s : *set) {
          valid += (valid.empty() ? "" : ", ") + s;
        }
      }
      throw ConfigError("unknown config key '" + k + "' (valid keys: " + valid + ")");
    }
  }

  if (m.contains("seed") && !(m.at("seed").is_number_integer() && m.at("seed").get<long long>() >= 0)) {
    throw ConfigError("seed must be a nonnegative integer");
  }

  ExperimentConfig c;
  try {
    const bool noise = tj.value("noise", false);
    tj["network"] = {{"in_channels", noise ? 4 : 3},
                     {"encoder_filters", m.value("encoder_filters", std::vector<int>{64, 128, 256})},
                     {"kernel_size", m.value("kernel_size", 3)},
                     {"out_channels", 3}};
    c.train = training::TrainConfig::from_json(tj);

    auto opt_path = [&](const char* key) -> std::optional<fs::path> {
      if (!m.contains(key) || m.at(key).is_null()) {
        return std::nullopt;
      }
      return fs::path(m.at(key).get<std::string>());
    };
    c.raw_dir = opt_path("raw_dir");
    c.processed_dir = opt_path("processed_dir");
    c.weights_dir = opt_path("weights_dir");
    c.checkpoint = opt_path("checkpoint");
    c.resume = opt_path("resume");
    c.splits_file = opt_path("splits_file");
    c.report_jsonl = opt_path("report_jsonl");
    c.report_csv = opt_path("report_csv");
    if (auto o = opt_path("out_dir")) {
      c.out_dir = *o;
    }
    c.split = m.value("split", c.split);
    c.include_baseline = m.value("include_baseline", c.include_baseline);

    json pj = m.value("preprocess", json::object());
    if (!pj.is_object()) {
      throw ConfigError("preprocess must be a mapping");
    }
    // one seed drives every stage unless a stage names its own
    for (const char* stage : {"match", "ransac"}) {
      if (!pj.contains(stage) || !pj[stage].contains("seed")) {
        pj[stage]["seed"] = c.train.seed;
      }
    }
    c.preprocess = preprocess::PreprocessConfig::from_json(pj);

    if (m.contains("name") && !m.at("name").is_null()) {
      c.name = m.at("name").get<std::string>();
    } else {
      std::string loss = c.train.loss_spec.label();
      for (char& ch : loss) {
        ch = ch == '/' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      }
      c.name = training::to_string(c.train.experiment) + "_" + loss;
      if (c.train.noise) {
        c.name += "_noise";
      }
      if (c.train.resize) {
        c.name += "_resize";
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  train.validate();
  static const std::set<std::string> splits{"train", "val", "test", "full"};
  if (!splits.contains(split)) {
    throw ConfigError("split must be one of train, val, test, full; got '" + split + "'");
  }
  if (name.empty() || name.find('/') != std::string::npos || name == "." || name == "..") {
    throw ConfigError("invalid experiment name '" + name + "'");
  }
}

json ExperimentConfig::to_json() const {
  json j = train.to_json();
  j.erase("network");
  j["encoder_filters"] = train.network.encoder_filters;
  j["kernel_size"] = train.network.kernel_size;
  j["name"] = name;
  j["out_dir"] = out_dir.string();
  auto put = [&](const char* key, const std::optional<fs::path>& p) {
    j[key] = p ? json(p->string()) : json(nullptr);
  };
  put("raw_dir", raw_dir);
  put("processed_dir", processed_dir);
  put("weights_dir", weights_dir);
  put("checkpoint", checkpoint);
  put("resume", resume);
  put("splits_file", splits_file);
  put("report_jsonl", report_jsonl);
  put("report_csv", report_csv);
  j["split"] = split;
  j["include_baseline"] = include_baseline;
  j["preprocess"] = preprocess.to_json();
  return j;
}

std::string ExperimentConfig::fingerprint() const { return filmpipe::fingerprint(to_json().dump()); }

}  // namespace filmpipe::cli
