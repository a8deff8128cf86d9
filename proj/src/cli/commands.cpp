#include "filmpipe/cli/commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iomanip>
#include <map>
#include <set>

#include "filmpipe/core/hash.hpp"
#include "filmpipe/imaging/io.hpp"
#include "filmpipe/metrics/metrics.hpp"
#include "filmpipe/nn/checkpoint.hpp"

namespace filmpipe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void echo(std::ostream& out, const std::string& command, const json& resolved,
          const std::string& fp) {
  out << "filmpipe " << command << "\n"
      << "resolved config:\n"
      << resolved.dump(2) << "\n"
      << "config fingerprint: " << fp << "\n";
}

const fs::path& require_dir(const std::optional<fs::path>& p, const char* key) {
  if (!p) {
    throw ConfigError(std::string(key) + " is not set");
  }
  if (!fs::is_directory(*p)) {
    throw ConfigError(std::string(key) + " does not exist: " + p->string());
  }
  return *p;
}

std::vector<dataset::PairedSample> load_data(const ExperimentConfig& c) {
  const fs::path& dir = require_dir(c.processed_dir, "processed_dir");
  auto data = dataset::load_processed(dir);
  if (data.empty()) {
    throw ConfigError("no processed pairs under " + dir.string());
  }
  return data;
}

std::vector<dataset::PairedSample> select(const std::vector<dataset::PairedSample>& data,
                                          const std::vector<std::string>& ids) {
  const std::set<std::string> want(ids.begin(), ids.end());
  std::vector<dataset::PairedSample> out;
  for (const auto& s : data) {
    if (want.contains(s.pair_id)) {
      out.push_back(s);
    }
  }
  return out;
}

std::uint64_t image_noise_seed(std::uint64_t seed, const std::string& id) {
  Fnv1a64 h;
  h.update(id);
  return derive_seed(seed, h.digest());
}

std::string yes_no(bool v) { return v ? "Yes" : "No"; }

std::string fmt_ms(double ms) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << ms << " ms";
  return os.str();
}

}  // namespace

dataset::SplitAssignment resolve_splits(const ExperimentConfig& c,
                                        const std::vector<std::string>& available,
                                        std::ostream& out) {
  std::optional<fs::path> path;
  if (c.splits_file) {
    if (!fs::exists(*c.splits_file)) {
      throw ConfigError("splits_file does not exist: " + c.splits_file->string());
    }
    path = c.splits_file;
  } else if (c.processed_dir && fs::exists(*c.processed_dir / "splits.json")) {
    path = *c.processed_dir / "splits.json";
  } else if (fs::exists(c.run_dir() / "splits.json")) {
    path = c.run_dir() / "splits.json";
  }
  dataset::SplitAssignment s;
  if (path) {
    s = dataset::load_splits(*path);
    const std::set<std::string> have(available.begin(), available.end());
    for (const auto& id : s.ids("full")) {
      if (!have.contains(id)) {
        throw ConfigError(path->string() + " names pair '" + id + "' which is not in the dataset");
      }
    }
    out << "splits: " << path->string() << "\n";
  } else {
    s = dataset::split_dataset(available, c.train.seed);
    fs::create_directories(c.run_dir());
    dataset::save_splits(s, c.run_dir() / "splits.json");
    out << "splits: new, written to " << (c.run_dir() / "splits.json").string() << "\n";
  }
  out << "split sizes: train " << s.train.size() << ", val " << s.val.size() << ", test "
      << s.test.size() << "\n";
  return s;
}

int cmd_preprocess(const ExperimentConfig& c, std::ostream& out, std::ostream& /*err*/) {
  const fs::path& raw = require_dir(c.raw_dir, "raw_dir");
  if (!c.processed_dir) {
    throw ConfigError("processed_dir (--out-dir) is not set");
  }
  bool any = false;
  for (const auto& e : fs::directory_iterator(raw)) {
    any = any || e.is_directory();
  }
  if (!any) {
    throw ConfigError("raw_dir has no pair directories: " + raw.string());
  }
  echo(out, "preprocess",
       {{"raw_dir", raw.string()},
        {"processed_dir", c.processed_dir->string()},
        {"preprocess", c.preprocess.to_json()}},
       c.preprocess.fingerprint());

  const auto reports = preprocess::preprocess_directory(raw, *c.processed_dir, c.preprocess);
  int accepted = 0;
  int io_failures = 0;
  for (const auto& r : reports) {
    out << r.pair_id << ": ";
    if (r.accepted) {
      ++accepted;
      out << "accepted, " << r.num_inliers << "/" << r.num_matches << " inliers, error "
          << std::fixed << std::setprecision(3) << r.mean_reprojection_error_px << " px, crop "
          << r.crop.height << "x" << r.crop.width << "\n";
    } else {
      io_failures += r.io_error ? 1 : 0;
      out << (r.io_error ? "failed: " : "rejected: ") << r.reason << "\n";
    }
    out.unsetf(std::ios::floatfield);
  }
  out << accepted << " processed, " << reports.size() - accepted << " rejected\n"
      << "reports: " << (*c.processed_dir / "reports.jsonl").string() << "\n";
  return io_failures > 0 ? kExitPartial : kExitOk;
}

int cmd_train(const ExperimentConfig& c, std::ostream& out, std::ostream& /*err*/) {
  const auto data = load_data(c);
  const fs::path run = c.run_dir();
  echo(out, "train", c.to_json(), c.fingerprint());
  fs::create_directories(run);

  std::vector<std::string> ids;
  for (const auto& s : data) {
    ids.push_back(s.pair_id);
  }
  std::vector<dataset::PairedSample> train_pairs = data;
  std::vector<dataset::PairedSample> val_pairs;
  if (c.train.experiment == training::Experiment::FullData) {
    const auto splits = resolve_splits(c, ids, out);
    train_pairs = select(data, splits.train);
    val_pairs = select(data, splits.val);
  }
  {
    std::ofstream cfg(run / "config.json", std::ios::trunc);
    cfg << json{{"config", c.to_json()}, {"config_fingerprint", c.fingerprint()}}.dump(2) << "\n";
  }

  training::TrainOptions opts;
  opts.out_dir = run;
  opts.resume_from = c.resume;
  opts.weights_dir = c.weights_dir;
  std::int64_t total = 0;
  opts.on_step = [&](const training::StepRecord& r) {
    if (r.step % 50 == 0 || r.step == 1) {
      out << "step " << r.step << " loss " << r.total;
      for (const auto& [k, v] : r.per_term) {
        out << " " << k << "=" << v;
      }
      out << "\n";
    }
    total = r.step;
  };
  const auto result = training::train(c.train, train_pairs, val_pairs, opts);
  for (const auto& v : result.validations) {
    out << "validation step " << v.step << " loss " << v.loss << "\n";
  }
  out << "trained " << result.total_steps << " steps\n";
  for (const auto& ck : result.checkpoints) {
    out << "checkpoint " << ck.path.string() << " " << ck.hash << "\n";
  }
  out << "log: " << (run / "train_log.jsonl").string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const ExperimentConfig& c, std::ostream& out, std::ostream& /*err*/) {
  const auto data = load_data(c);
  const fs::path run = c.run_dir();

  std::optional<fs::path> ckpt = c.checkpoint;
  if (!ckpt) {
    for (const char* name : {"ckpt_best.bin", "ckpt_final.bin"}) {
      if (fs::exists(run / "checkpoints" / name)) {
        ckpt = run / "checkpoints" / name;
        break;
      }
    }
  }
  if (!ckpt && !c.include_baseline) {
    throw ConfigError("no checkpoint found for " + run.string() +
                      " and include_baseline is false; nothing to evaluate");
  }
  echo(out, "evaluate", c.to_json(), c.fingerprint());

  std::vector<std::string> ids;
  for (const auto& s : data) {
    ids.push_back(s.pair_id);
  }
  std::string split_label = c.split;
  std::vector<dataset::PairedSample> eval;
  if (c.train.experiment == training::Experiment::SingleImage) {
    eval = select(data, {*c.train.single_image_id});
    if (eval.empty()) {
      throw ConfigError("single_image_id '" + *c.train.single_image_id + "' not in dataset");
    }
    split_label = "single-image:" + *c.train.single_image_id;
  } else if (c.split == "full") {
    eval = data;
  } else {
    eval = select(data, resolve_splits(c, ids, out).ids(c.split));
  }
  out << "evaluating " << eval.size() << " pairs (split " << split_label << ")\n";

  std::map<std::string, ImageTensor> preds;
  metrics::MethodInfo info{c.name, c.train.loss_spec.label(), yes_no(c.train.noise),
                           yes_no(c.train.resize)};
  if (ckpt) {
    const nn::Checkpoint ck = nn::load_checkpoint(*ckpt, c.train.noise ? 4 : 3);
    out << "checkpoint: " << ckpt->string() << " (step " << ck.step << ")\n";
    dataset::NoiseKind kind = c.train.noise_kind;
    if (ck.extra.contains("train_config")) {
      const auto tc = training::TrainConfig::from_json(ck.extra.at("train_config"));
      info.loss = tc.loss_spec.label();
      info.noise = yes_no(tc.noise);
      info.resize = yes_no(tc.resize);
      kind = tc.noise_kind;
    }
    for (const auto& s : eval) {
      preds[s.pair_id] =
          training::apply(ck.network, s.digital, image_noise_seed(c.train.seed, s.pair_id), kind);
    }
  } else {
    out << "no checkpoint; baseline only\n";
  }

  auto report = metrics::evaluate(preds, eval, c.include_baseline,
                                  metrics::ScorerSet::resolve(c.weights_dir), info);
  report.split = split_label;
  report.config_fingerprint = c.fingerprint();

  const std::string stem = "eval_" + (c.train.experiment == training::Experiment::SingleImage
                                          ? std::string("single")
                                          : c.split);
  const fs::path jsonl = c.report_jsonl.value_or(run / (stem + ".jsonl"));
  const fs::path csv = c.report_csv.value_or(run / (stem + ".csv"));
  for (const auto& p : {jsonl, csv}) {
    if (p.has_parent_path()) {
      fs::create_directories(p.parent_path());
    }
  }
  metrics::write_jsonl(report, jsonl);
  metrics::write_csv(report, csv);
  out << metrics::render_table(report) << "report: " << jsonl.string() << "\n"
      << "table: " << csv.string() << "\n";
  return kExitOk;
}

int cmd_apply(const ApplyArgs& a, std::ostream& out, std::ostream& err) {
  if (!fs::exists(a.checkpoint)) {
    throw ConfigError("checkpoint not found: " + a.checkpoint.string());
  }
  const nn::Checkpoint ck = nn::load_checkpoint(a.checkpoint);
  std::uint64_t seed = 0;
  dataset::NoiseKind kind = dataset::NoiseKind::Uniform;
  if (ck.extra.contains("train_config")) {
    const auto tc = training::TrainConfig::from_json(ck.extra.at("train_config"));
    seed = tc.seed;
    kind = tc.noise_kind;
  }
  seed = a.noise_seed.value_or(seed);

  std::vector<fs::path> files;
  for (const auto& in : a.inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        if (e.is_regular_file() && imaging::is_image_file(e.path())) {
          found.push_back(e.path());
        }
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.push_back(in);
    }
  }
  if (files.empty()) {
    throw ConfigError("no input images");
  }
  json resolved{{"checkpoint", a.checkpoint.string()},
                {"step", ck.step},
                {"network", ck.network.config().to_json()},
                {"noise_seed", seed},
                {"noise_kind", dataset::to_string(kind)},
                {"out_dir", a.out_dir.string()},
                {"inputs", json::array()}};
  for (const auto& f : files) {
    resolved["inputs"].push_back(f.string());
  }
  echo(out, "apply", resolved, fingerprint(resolved.dump()));
  fs::create_directories(a.out_dir);

  int failed = 0;
  for (const auto& f : files) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const ImageTensor img = imaging::read_image(f);
      const ImageTensor y = training::apply(ck.network, img, seed, kind);
      const fs::path dst = a.out_dir / (f.stem().string() + ".png");
      imaging::write_image(dst, y);
      const double ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      out << f.string() << " -> " << dst.string() << " (" << img.height() << "x" << img.width()
          << ", " << fmt_ms(ms) << ")\n";
    } catch (const Error& e) {
      ++failed;
      err << "error: " << f.string() << ": " << e.what() << "\n";
    }
  }
  out << files.size() - failed << "/" << files.size() << " images written\n";
  return failed > 0 ? kExitPartial : kExitOk;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"filmpipe: paired digital-to-film image translation"};
  app.require_subcommand(1);

  std::string config_file;
  std::string seed;
  std::vector<std::string> overrides;
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_file, "YAML experiment config");
    sub->add_option("--seed", seed, "Seed for every random stage");
    sub->add_option("overrides", overrides, "key=value overrides");
  };

  std::string raw_dir;
  std::string pre_out;
  auto* pre = app.add_subcommand("preprocess", "Register raw pairs and write the processed dataset");
  common(pre);
  pre->add_option("--raw-dir", raw_dir, "Directory of <id>/{digital,film} images");
  pre->add_option("--out-dir", pre_out, "Processed dataset directory");

  std::string resume;
  auto* trn = app.add_subcommand("train", "Train a translation network");
  common(trn);
  trn->add_option("--resume", resume, "Checkpoint to resume from");

  std::string eval_ckpt;
  std::string split;
  bool no_baseline = false;
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint and/or the digital baseline");
  common(ev);
  ev->add_option("--checkpoint", eval_ckpt, "Checkpoint to evaluate");
  ev->add_option("--split", split, "train, val, test or full");
  ev->add_flag("--no-baseline", no_baseline, "Skip the digital baseline rows");

  ApplyArgs apply_args;
  std::vector<std::string> inputs;
  std::string apply_out;
  std::uint64_t noise_seed = 0;
  auto* ap = app.add_subcommand("apply", "Run a checkpoint on images");
  ap->add_option("--checkpoint", apply_args.checkpoint, "Checkpoint file")->required();
  ap->add_option("--out-dir", apply_out, "Output directory")->required();
  auto* ns = ap->add_option("--noise-seed", noise_seed, "Seed for the noise channel");
  ap->add_option("inputs", inputs, "Images or directories")->required();

  std::vector<const char*> argv{"filmpipe"};
  for (const auto& a : args) {
    argv.push_back(a.c_str());
  }
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (ap->parsed()) {
      apply_args.out_dir = apply_out;
      for (const auto& i : inputs) {
        apply_args.inputs.emplace_back(i);
      }
      if (ns->count() > 0) {
        apply_args.noise_seed = noise_seed;
      }
      return cmd_apply(apply_args, out, err);
    }
    std::vector<std::string> ov = overrides;
    auto flag = [&](const std::string& key, const std::string& v) {
      if (!v.empty()) {
        ov.push_back(key + "=" + v);
      }
    };
    flag("seed", seed);
    flag("raw_dir", raw_dir);
    flag("processed_dir", pre_out);
    flag("resume", resume);
    flag("checkpoint", eval_ckpt);
    flag("split", split);
    if (no_baseline) {
      ov.push_back("include_baseline=false");
    }
    const ExperimentConfig cfg = ExperimentConfig::resolve(
        config_file.empty() ? std::nullopt : std::optional<fs::path>(config_file), ov);
    if (pre->parsed()) {
      return cmd_preprocess(cfg, out, err);
    }
    if (trn->parsed()) {
      return cmd_train(cfg, out, err);
    }
    return cmd_evaluate(cfg, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnavailableError& e) {
    err << "unavailable: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidInputError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitPartial;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) {
    args.emplace_back(argv[i]);
  }
  return run(args, out, err);
}

}  // namespace filmpipe::cli
