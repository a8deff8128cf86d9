#include "filmpipe/nn/checkpoint.hpp"

#include "filmpipe/nn/archive.hpp"

namespace filmpipe::nn {

namespace {

std::vector<std::int64_t> shape64(const std::vector<int>& s) { return {s.begin(), s.end()}; }

}  // namespace

std::string checkpoint_filename(std::int64_t step) {
  return "ckpt_step" + std::to_string(step) + ".bin";
}

Archive network_archive(const TranslationNetwork<float>& net) {
  Archive ar;
  ar.meta["format"] = "filmpipe-checkpoint";
  ar.meta["network"] = net.config().to_json();
  for (const Parameter<float>* p : net.parameters()) {
    ar.put(p->name, p->value, shape64(p->shape));
  }
  return ar;
}

void save_checkpoint(const std::filesystem::path& path, const TranslationNetwork<float>& net,
                     std::int64_t step, const nlohmann::json& extra, Adam<float>* optimizer) {
  Archive ar = network_archive(net);
  ar.meta["step"] = step;
  ar.meta["extra"] = extra;
  if (optimizer != nullptr && optimizer->steps() > 0) {
    ar.meta["adam_steps"] = optimizer->steps();
    const auto params = net.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto shape = shape64(params[k]->shape);
      ar.put("adam.m." + params[k]->name, optimizer->first_moments()[k], shape);
      ar.put("adam.v." + params[k]->name, optimizer->second_moments()[k], shape);
    }
  }
  ar.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<int> expected_in_channels) {
  const Archive ar = Archive::load(path);
  if (ar.meta.value("format", "") != "filmpipe-checkpoint" || !ar.meta.contains("network")) {
    throw IoError(path.string() + ": not a network checkpoint");
  }
  const NetworkConfig config = NetworkConfig::from_json(ar.meta.at("network"));
  if (expected_in_channels && *expected_in_channels != config.in_channels) {
    throw ConfigError(path.string() + ": checkpoint network has " +
                      std::to_string(config.in_channels) + " input channels but " +
                      std::to_string(*expected_in_channels) + " were requested" +
                      (*expected_in_channels == 4 ? " (noise=true)" : " (noise=false)"));
  }
  Checkpoint ck{TranslationNetwork<float>(config, 0), ar.meta.value("step", std::int64_t{0}),
                ar.meta.value("extra", nlohmann::json::object()), std::nullopt, {}, {}};
  auto params = ck.network.parameters();
  for (Parameter<float>* p : params) {
    const auto shape = shape64(p->shape);
    p->value = ar.get<float>(p->name, &shape);
  }
  if (ar.meta.contains("adam_steps")) {
    ck.adam_steps = ar.meta.at("adam_steps").get<std::int64_t>();
    for (Parameter<float>* p : params) {
      const auto shape = shape64(p->shape);
      ck.adam_m.push_back(ar.get<double>("adam.m." + p->name, &shape));
      ck.adam_v.push_back(ar.get<double>("adam.v." + p->name, &shape));
    }
  }
  return ck;
}

}  // namespace filmpipe::nn
