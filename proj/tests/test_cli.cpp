#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "filmpipe/cli/commands.hpp"
#include "filmpipe/cli/config.hpp"
#include "filmpipe/nn/checkpoint.hpp"
#include "fixtures.hpp"

using namespace filmpipe;
using namespace filmpipe::cli;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path tmp(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

// 3 raw pairs (one featureless) preprocessed once for the whole file
struct Dataset {
  fs::path raw = tmp("filmpipe_cli_raw");
  fs::path processed = tmp("filmpipe_cli_proc");
  Run first;
  Dataset() {
    testing::write_raw_pair(raw, "p0", 160, 208, 40);
    testing::write_raw_pair(raw, "p1", 160, 208, 41);
    testing::write_flat_pair(raw, "p2");
    first = invoke({"preprocess", "--raw-dir", raw.string(), "--out-dir", processed.string(),
                 "--seed", "42"});
  }
};

const Dataset& dataset_fixture() {
  static const Dataset d;
  return d;
}

std::vector<std::string> tiny(const fs::path& out_dir, std::vector<std::string> extra = {}) {
  std::vector<std::string> a{"processed_dir=" + dataset_fixture().processed.string(),
                             "out_dir=" + out_dir.string(),
                             "encoder_filters=[8,16]",
                             "patch_size=32",
                             "patches_per_image=6",
                             "checkpoint_every=5"};
  a.insert(a.end(), extra.begin(), extra.end());
  return a;
}

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("override parsing and presets") {
  const auto c = ExperimentConfig::resolve(
      std::nullopt, {"experiment=single-image", "single_image_id=0042", "loss=[mse:1, vgg:0.5]",
                     "noise=true", "scale_range=[1,2]", "preprocess.ransac.threshold_px=2.5"});
  CHECK(c.train.experiment == training::Experiment::SingleImage);
  CHECK(*c.train.single_image_id == "0042");
  CHECK(c.train.loss_spec.str() == "mse:1,vgg:0.5");
  CHECK(c.train.network.in_channels == 4);
  CHECK(c.train.scale_max == 2.0);
  CHECK(c.preprocess.ransac.threshold_px == 2.5);
  CHECK(c.preprocess.ransac.seed == 42);
  CHECK(c.train.patches_per_image == 400);
  CHECK(c.train.learning_rate == 1e-3);
  CHECK(c.train.batch_size == 1);
  CHECK(c.split == "full");

  const auto d = ExperimentConfig::resolve(std::nullopt, {});
  CHECK(d.train.experiment == training::Experiment::FullData);
  CHECK(d.split == "test");
  CHECK(d.train.network.encoder_filters == std::vector<int>{64, 128, 256});

  // round trip and fingerprint stability
  const auto back = ExperimentConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.fingerprint() == c.fingerprint());
  CHECK(c.fingerprint() != d.fingerprint());

  CHECK_THROWS_AS(ExperimentConfig::resolve(std::nullopt, {"lossx=mse"}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::resolve(std::nullopt, {"novalue"}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::resolve(std::nullopt, {"experiment=both"}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::resolve(std::nullopt, {"split=holdout"}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::resolve(std::nullopt, {"seed=-1"}), ConfigError);
}

TEST_CASE("config file layering") {
  const fs::path dir = tmp("filmpipe_cli_cfg");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "exp.yaml");
    f << "experiment: single-image\nsingle_image_id: p1\nloss:\n  - color\n  - vgg\n  - tvrel\n"
         "patch_size: 128\npreprocess:\n  ransac:\n    iterations: 500\n";
  }
  const auto c = ExperimentConfig::resolve(dir / "exp.yaml", {"patch_size=64"});
  CHECK(c.train.loss_spec.label() == "Color/VGG/TV-Rel");
  CHECK(c.train.patch_size == 64);
  CHECK(c.preprocess.ransac.iterations == 500);
  CHECK(c.train.experiment == training::Experiment::SingleImage);
  CHECK(c.name == "single-image_color-vgg-tv-rel");
  CHECK_THROWS_AS(ExperimentConfig::resolve(dir / "missing.yaml", {}), ConfigError);
}

TEST_CASE("scalar typing") {
  CHECK(parse_scalar("true") == true);
  CHECK(parse_scalar("12") == 12);
  CHECK(parse_scalar("1e-3") == 1e-3);
  CHECK(parse_scalar("abc") == "abc");
  CHECK(parse_scalar("").is_null());
}

TEST_CASE("preprocess command") {
  const Dataset& d = dataset_fixture();
  CHECK(d.first.code == kExitOk);
  CHECK(d.first.out.find("config fingerprint:") != std::string::npos);
  CHECK(d.first.out.find("2 processed, 1 rejected") != std::string::npos);
  CHECK(dataset::list_processed(d.processed) == std::vector<std::string>{"p0", "p1"});
  const std::string reports = testing::slurp(d.processed / "reports.jsonl");
  CHECK(std::count(reports.begin(), reports.end(), '\n') == 3);

  // rerun with the same seed: byte-identical PNGs
  const fs::path again = tmp("filmpipe_cli_proc2");
  const Run r = invoke({"preprocess", "--raw-dir", d.raw.string(), "--out-dir", again.string(),
                     "--seed", "42"});
  CHECK(r.code == kExitOk);
  for (const char* id : {"p0", "p1"}) {
    for (const char* f : {"digital.png", "film.png"}) {
      CHECK(testing::slurp(d.processed / id / f) == testing::slurp(again / id / f));
    }
  }

  const fs::path empty = tmp("filmpipe_cli_empty");
  fs::create_directories(empty);
  CHECK(invoke({"preprocess", "--raw-dir", empty.string(), "--out-dir", again.string()}).code ==
        kExitUsage);
  CHECK(invoke({"preprocess", "--raw-dir", (empty / "nope").string(), "--out-dir", again.string()})
            .code == kExitUsage);

  // an unreadable image fails that pair and the run, not the others
  const fs::path broken = tmp("filmpipe_cli_broken");
  testing::write_raw_pair(broken, "ok", 160, 208, 42);
  fs::create_directories(broken / "bad");
  std::ofstream(broken / "bad" / "digital.png") << "not a png";
  std::ofstream(broken / "bad" / "film.png") << "not a png";
  const Run b = invoke({"preprocess", "--raw-dir", broken.string(), "--out-dir",
                     tmp("filmpipe_cli_broken_out").string()});
  CHECK(b.code == kExitPartial);
  CHECK(b.out.find("ok: accepted") != std::string::npos);
  CHECK(b.out.find("bad: failed") != std::string::npos);
}

TEST_CASE("train command") {
  const fs::path runs = tmp("filmpipe_cli_runs");
  const Run r = invoke(cat({"train", "experiment=single-image", "single_image_id=p0", "loss=[mse:1]"},
                        tiny(runs)));
  INFO(r.err);
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("resolved config:") != std::string::npos);
  const fs::path run = runs / "single-image_mse";
  CHECK(fs::exists(run / "checkpoints" / "ckpt_step5.bin"));
  CHECK(fs::exists(run / "checkpoints" / "ckpt_final.bin"));
  CHECK(fs::exists(run / "config.json"));
  CHECK(fs::exists(run / "train_log.jsonl"));

  const Run bad = invoke(cat({"train", "loss=[mse:1,sharpness:1]"}, tiny(runs)));
  CHECK(bad.code == kExitUsage);
  CHECK(bad.err.find("mse, mae, vgg, color, tvrel") != std::string::npos);

  const Run mismatch =
      invoke(cat({"train", "experiment=single-image", "single_image_id=p0", "noise=true",
               "--resume", (run / "checkpoints" / "ckpt_step5.bin").string()},
              tiny(runs)));
  CHECK(mismatch.code == kExitUsage);

  CHECK(invoke(cat({"train"}, tiny(runs, {"processed_dir=/nonexistent/x"}))).code == kExitUsage);
  CHECK(invoke({"train", "--bogus-flag"}).code == kExitUsage);
}

TEST_CASE("all nine loss combinations train") {
  const fs::path weights = tmp("filmpipe_cli_weights");
  testing::write_standin_vgg(weights, 3);
  const fs::path runs = tmp("filmpipe_cli_nine");
  for (const char* loss : {"color/vgg/tvrel", "color/vgg", "mse/vgg", "mae", "color", "mse",
                           "tvrel", "vgg", "mse/vgg/tvrel"}) {
    CAPTURE(loss);
    const Run r = invoke(cat({"train", "experiment=single-image", "single_image_id=p1",
                           std::string("loss=") + loss, "weights_dir=" + weights.string(),
                           "patches_per_image=2"},
                          tiny(runs)));
    INFO(r.err);
    CHECK(r.code == kExitOk);
  }
  CHECK(fs::exists(runs / "single-image_color-vgg-tv-rel" / "checkpoints" / "ckpt_final.bin"));
}

TEST_CASE("full-data training writes splits and validation") {
  const fs::path runs = tmp("filmpipe_cli_full");
  // 2 processed pairs is too few to split
  const Run r = invoke(cat({"train"}, tiny(runs)));
  CHECK(r.code == kExitUsage);

  // three processed pairs: reuse p0 under another id
  const fs::path proc = tmp("filmpipe_cli_proc3");
  fs::copy(dataset_fixture().processed, proc, fs::copy_options::recursive);
  fs::copy(proc / "p0", proc / "p3", fs::copy_options::recursive);
  const Run ok = invoke(cat({"train", "name=full"}, tiny(runs, {"processed_dir=" + proc.string()})));
  INFO(ok.err);
  REQUIRE(ok.code == kExitOk);
  CHECK(fs::exists(runs / "full" / "splits.json"));
  CHECK(fs::exists(runs / "full" / "checkpoints" / "ckpt_best.bin"));
  CHECK(ok.out.find("validation step") != std::string::npos);

  const Run ev = invoke(cat({"evaluate", "name=full"}, tiny(runs, {"processed_dir=" + proc.string()})));
  INFO(ev.err);
  CHECK(ev.code == kExitOk);
  CHECK(ev.out.find("ckpt_best.bin") != std::string::npos);
  CHECK(fs::exists(runs / "full" / "eval_test.csv"));
}

TEST_CASE("evaluate command") {
  const fs::path runs = tmp("filmpipe_cli_eval");

  // baseline only: no checkpoint needed
  const Run base = invoke(cat({"evaluate", "split=full", "name=base"}, tiny(runs)));
  INFO(base.err);
  REQUIRE(base.code == kExitOk);
  const std::string csv = testing::slurp(runs / "base" / "eval_full.csv");
  CHECK(csv.rfind("Loss,Noise,Resize,SSIM,PSNR,LPIPS,PieAPP\n", 0) == 0);
  CHECK(csv.find("Baseline") != std::string::npos);

  // identical inputs twice: identical CSV bytes
  CHECK(invoke(cat({"evaluate", "split=full", "name=base"}, tiny(runs))).code == kExitOk);
  CHECK(testing::slurp(runs / "base" / "eval_full.csv") == csv);

  // with a trained single-image model
  const Run t = invoke(cat({"train", "experiment=single-image", "single_image_id=p1"}, tiny(runs)));
  REQUIRE(t.code == kExitOk);
  const Run e = invoke(cat({"evaluate", "experiment=single-image", "single_image_id=p1"}, tiny(runs)));
  INFO(e.err);
  REQUIRE(e.code == kExitOk);
  const std::string table = testing::slurp(runs / "single-image_mse" / "eval_single.csv");
  CHECK(table.find("MSE,No,No") != std::string::npos);

  // checkpoint trained without noise, evaluated as a noise model
  const fs::path ck = runs / "single-image_mse" / "checkpoints" / "ckpt_final.bin";
  const Run mm = invoke(cat({"evaluate", "experiment=single-image", "single_image_id=p1", "noise=true",
                          "--checkpoint", ck.string()},
                         tiny(runs)));
  CHECK(mm.code == kExitUsage);

  const Run none = invoke(cat({"evaluate", "name=nothing", "--no-baseline"}, tiny(runs)));
  CHECK(none.code == kExitUsage);
}

TEST_CASE("apply command") {
  const fs::path runs = tmp("filmpipe_cli_apply");
  REQUIRE(invoke(cat({"train", "experiment=single-image", "single_image_id=p0", "noise=true"},
                  tiny(runs)))
              .code == kExitOk);
  const fs::path ck = runs / "single-image_mse_noise" / "checkpoints" / "ckpt_final.bin";

  const fs::path in = tmp("filmpipe_cli_apply_in");
  fs::create_directories(in);
  for (int i = 0; i < 5; ++i) {
    imaging::write_image(in / ("img" + std::to_string(i) + ".png"),
                         testing::synthetic_scene(37 + i, 50 + 3 * i, 60 + i));
  }
  const fs::path out1 = tmp("filmpipe_cli_apply_o1");
  const Run one = invoke({"apply", "--checkpoint", ck.string(), "--out-dir", out1.string(),
                       "--noise-seed", "9", (in / "img0.png").string()});
  INFO(one.err);
  REQUIRE(one.code == kExitOk);
  CHECK(one.out.find(" ms)") != std::string::npos);
  const ImageTensor got = imaging::read_image(out1 / "img0.png");
  CHECK(got.height() == 37);
  CHECK(got.width() == 50);

  const fs::path out2 = tmp("filmpipe_cli_apply_o2");
  CHECK(invoke({"apply", "--checkpoint", ck.string(), "--out-dir", out2.string(), "--noise-seed", "9",
             in.string()})
            .code == kExitOk);
  int n = 0;
  for (const auto& e : fs::directory_iterator(out2)) {
    n += e.path().extension() == ".png";
  }
  CHECK(n == 5);
  CHECK(testing::slurp(out1 / "img0.png") == testing::slurp(out2 / "img0.png"));

  std::ofstream(in / "broken.png") << "garbage";
  const Run partial = invoke({"apply", "--checkpoint", ck.string(), "--out-dir",
                           tmp("filmpipe_cli_apply_o3").string(), in.string()});
  CHECK(partial.code == kExitPartial);
  CHECK(partial.err.find("broken.png") != std::string::npos);
  CHECK(partial.out.find("5/6 images written") != std::string::npos);

  CHECK(invoke({"apply", "--checkpoint", (runs / "none.bin").string(), "--out-dir", out2.string(),
             in.string()})
            .code == kExitUsage);
}

TEST_CASE("shipped example configs resolve") {
  const fs::path dir = fs::path(FILMPIPE_SOURCE_DIR) / "configs";
  const auto single = cli::ExperimentConfig::resolve(dir / "single_image.yaml", {});
  CHECK(single.train.experiment == training::Experiment::SingleImage);
  CHECK(single.train.single_image_id == "0001");
  CHECK(single.train.network.in_channels == 4);
  CHECK(single.train.loss_spec.label() == "MSE/VGG");
  CHECK(single.name == "single-image_mse-vgg_noise_resize");

  const auto full = cli::ExperimentConfig::resolve(dir / "full_data.yaml", {});
  CHECK(full.train.loss_spec.label() == "Color/VGG/TV-Rel");
  CHECK(full.split == "test");
  CHECK(full.preprocess.ransac.threshold_px == 3.0);
}
