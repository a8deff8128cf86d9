#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "filmpipe/dataset/dataset.hpp"
#include "filmpipe/imaging/io.hpp"
#include "support.hpp"

using namespace filmpipe;
using namespace filmpipe::dataset;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> make_ids(int n) {
  std::vector<std::string> ids;
  for (int i = 0; i < n; ++i) ids.push_back("img" + std::to_string(1000 + i));
  return ids;
}

PairedSample make_pair(int h, int w, std::uint64_t seed) {
  return {testing::random_tensor(3, h, w, seed), testing::random_tensor(3, h, w, seed + 1),
          "p" + std::to_string(seed)};
}

bool same(const ImageTensor& a, const ImageTensor& b) {
  return a.shape() == b.shape() && std::equal(a.data(), a.data() + a.size(), b.data());
}

}  // namespace

TEST_CASE("split sizes") {
  auto check = [](int n, std::size_t tr, std::size_t va, std::size_t te) {
    const SplitAssignment s = split_dataset(make_ids(n), 7);
    CHECK(s.train.size() == tr);
    CHECK(s.val.size() == va);
    CHECK(s.test.size() == te);
  };
  check(38, 26, 8, 4);
  check(10, 7, 2, 1);
  check(3, 1, 1, 1);
  CHECK_THROWS_AS(split_dataset(make_ids(2), 1), InvalidInputError);
}

TEST_CASE("splits are disjoint, exhaustive and seeded") {
  for (int n : {3, 5, 11, 38, 57}) {
    for (std::uint64_t seed : {0u, 1u, 99u}) {
      const auto ids = make_ids(n);
      const SplitAssignment s = split_dataset(ids, seed);
      std::vector<std::string> all = s.train;
      all.insert(all.end(), s.val.begin(), s.val.end());
      all.insert(all.end(), s.test.begin(), s.test.end());
      std::sort(all.begin(), all.end());
      CHECK(all == ids);
      CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
      CHECK(split_dataset(ids, seed) == s);
      auto shuffled = ids;
      std::reverse(shuffled.begin(), shuffled.end());
      CHECK(split_dataset(shuffled, seed) == s);
      CHECK(s.ids("full") == ids);
    }
  }
  CHECK(split_dataset(make_ids(38), 1) != split_dataset(make_ids(38), 2));
  CHECK_THROWS_AS(split_dataset(make_ids(10), 1).ids("holdout"), ConfigError);
}

TEST_CASE("splits round trip through json") {
  const fs::path p = fs::temp_directory_path() / "filmpipe_splits_test.json";
  const SplitAssignment s = split_dataset(make_ids(12), 5);
  save_splits(s, p);
  CHECK(load_splits(p) == s);
  fs::remove(p);
  CHECK_THROWS_AS(load_splits(p), IoError);
}

TEST_CASE("plain crops share geometry") {
  const PairedSample pair = make_pair(300, 280, 3);
  PatchConfig cfg;
  cfg.patch_size = 64;
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const PatchPair p = sample_patch(pair, rng, cfg);
    REQUIRE(p.input.shape() == Shape{3, 64, 64});
    REQUIRE(p.target.shape() == Shape{3, 64, 64});
    CHECK(p.crop_size == 64);
    CHECK(p.top >= 0);
    CHECK(p.left >= 0);
    CHECK(p.top + 64 <= 300);
    CHECK(p.left + 64 <= 280);
    // the same window in both images
    CHECK(p.input(1, 5, 7) == pair.digital(1, p.top + 5, p.left + 7));
    CHECK(p.target(2, 63, 0) == pair.film(2, p.top + 63, p.left));
  }
}

TEST_CASE("resize with unit scale equals plain crop") {
  const PairedSample pair = make_pair(200, 200, 4);
  PatchConfig plain;
  plain.patch_size = 64;
  PatchConfig sized = plain;
  sized.resize = true;
  sized.scale_min = sized.scale_max = 1.0;
  Rng a(9), b(9);
  for (int i = 0; i < 20; ++i) {
    const PatchPair p = sample_patch(pair, a, plain);
    const PatchPair q = sample_patch(pair, b, sized);
    CHECK(p.top == q.top);
    CHECK(p.left == q.left);
    CHECK(same(p.input, q.input));
    CHECK(same(p.target, q.target));
  }
}

TEST_CASE("recorded geometry reproduces patches") {
  const PairedSample pair = make_pair(160, 220, 5);
  PatchConfig cfg;
  cfg.patch_size = 32;
  cfg.resize = true;
  cfg.noise = true;
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const PatchPair p = sample_patch(pair, rng, cfg);
    CHECK(p.input.channels() == 4);
    CHECK(p.target.channels() == 3);
    CHECK(p.crop_scale == doctest::Approx(p.crop_size / 32.0));
    const auto [in, tgt] = recut_patch(pair, p.top, p.left, p.crop_size, 32);
    CHECK(same(tgt, p.target));
    CHECK(std::equal(in.data(), in.data() + in.size(), p.input.data()));
  }
}

TEST_CASE("crop size is uniform over the scale range") {
  // 1024x1024 source, S = 256, s ~ U[1, 4]: crop side uniform on [256, 1024]
  PairedSample pair{ImageTensor(3, 1024, 1024), ImageTensor(3, 1024, 1024), "big"};
  PatchConfig cfg;
  cfg.resize = true;
  Rng rng(2024);
  const int n = 2000, bins = 10;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < n; ++i) {
    const PatchPair p = sample_patch(pair, rng, cfg);
    REQUIRE(p.crop_size >= 256);
    REQUIRE(p.crop_size <= 1024);
    REQUIRE(p.input.shape() == Shape{3, 256, 256});
    const int b = std::min(bins - 1, static_cast<int>((p.crop_size - 256) * bins / 768.0));
    ++counts[b];
  }
  double chi2 = 0.0;
  const double expected = static_cast<double>(n) / bins;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // chi-squared critical value, 9 dof, alpha 0.01
  CHECK(chi2 < 21.666);
}

TEST_CASE("oversized scale clamps to the image") {
  const PairedSample pair = make_pair(100, 140, 6);
  PatchConfig cfg;
  cfg.patch_size = 64;
  cfg.resize = true;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const PatchPair p = sample_patch(pair, rng, cfg);
    CHECK(p.crop_size <= 100);
    CHECK(p.input.shape() == Shape{3, 64, 64});
  }
  CHECK_THROWS_AS(sample_patch(make_pair(50, 80, 1), rng, cfg), InvalidInputError);
}

TEST_CASE("noise channel") {
  const ImageTensor img = testing::random_tensor(3, 256, 256, 8);
  Rng rng(77);
  const ImageTensor out = add_noise_channel(img, rng);
  REQUIRE(out.channels() == 4);
  CHECK(std::equal(img.data(), img.data() + img.size(), out.data()));
  double mean = 0.0;
  const float* noise = out.plane(3);
  for (std::size_t i = 0; i < out.shape().plane(); ++i) {
    CHECK_UNARY(noise[i] >= 0.0f && noise[i] < 1.0f);
    mean += noise[i];
  }
  mean /= static_cast<double>(out.shape().plane());
  CHECK(std::abs(mean - 0.5) < 0.01);

  const ImageTensor again = add_noise_channel(img, rng);
  CHECK_FALSE(std::equal(out.plane(3), out.plane(3) + out.shape().plane(), again.plane(3)));

  const ImageTensor g = add_noise_channel(img, rng, NoiseKind::Gaussian);
  double gm = 0.0;
  for (std::size_t i = 0; i < g.shape().plane(); ++i) {
    CHECK_UNARY(g.plane(3)[i] >= 0.0f && g.plane(3)[i] < 1.0f);
    gm += g.plane(3)[i];
  }
  CHECK(std::abs(gm / g.shape().plane() - 0.5) < 0.01);

  CHECK_THROWS_AS(add_noise_channel(out, rng), InvalidInputError);
  CHECK(parse_noise_kind("gaussian") == NoiseKind::Gaussian);
  CHECK(to_string(NoiseKind::Uniform) == "uniform");
  CHECK_THROWS_AS(parse_noise_kind("pink"), ConfigError);
}

TEST_CASE("epoch stream size and determinism") {
  PatchConfig cfg;
  cfg.patch_size = 32;
  const std::vector<PairedSample> one{make_pair(64, 64, 1)};
  CHECK(make_epoch(one, 400, cfg, 1).size() == 400);

  std::vector<PairedSample> train;
  for (int i = 0; i < 26; ++i) train.push_back(make_pair(40, 40, 100 + 2 * i));
  const EpochStream big = make_epoch(train, 400, cfg, 1);
  CHECK(big.size() == 10400);
  std::map<std::string, int> per_source;
  for (std::size_t i = 0; i < big.size(); i += 1) {
    if (i % 13 == 0) ++per_source[big.at(i).source_pair_id];
  }
  CHECK(per_source.size() > 20);

  const EpochStream a = make_epoch(train, 3, cfg, 42);
  const EpochStream b = make_epoch(train, 3, cfg, 42);
  const EpochStream c = make_epoch(train, 3, cfg, 43);
  bool differs = false;
  for (std::size_t i = a.size(); i-- > 0;) {
    const PatchPair pa = a.at(i);
    const PatchPair pb = b.at(i);
    CHECK(pa.source_pair_id == pb.source_pair_id);
    CHECK(same(pa.input, pb.input));
    differs = differs || pa.source_pair_id != c.at(i).source_pair_id;
  }
  CHECK(differs);
  CHECK_THROWS_AS(make_epoch({}, 3, cfg, 1), InvalidInputError);
}

TEST_CASE("processed directory loading") {
  const fs::path dir = fs::temp_directory_path() / "filmpipe_processed_test";
  fs::remove_all(dir);
  for (int i = 0; i < 3; ++i) {
    const fs::path sub = dir / ("pair" + std::to_string(i));
    fs::create_directories(sub);
    imaging::write_image(sub / "digital.png", testing::random_tensor(3, 16, 24, i));
    imaging::write_image(sub / "film.png", testing::random_tensor(3, 16, 24, 10 + i));
  }
  fs::create_directories(dir / "incomplete");
  imaging::write_image(dir / "incomplete" / "digital.png", testing::random_tensor(3, 8, 8, 0));

  const auto ids = list_processed(dir);
  CHECK(ids == std::vector<std::string>{"pair0", "pair1", "pair2"});
  const auto data = load_processed(dir, {"pair2"});
  REQUIRE(data.size() == 1);
  CHECK(data[0].pair_id == "pair2");
  CHECK(data[0].film.shape() == Shape{3, 16, 24});
  CHECK(load_processed(dir).size() == 3);
  CHECK_THROWS_AS(load_processed(dir, {"nope"}), IoError);

  imaging::write_image(dir / "pair1" / "film.png", testing::random_tensor(3, 16, 20, 1));
  CHECK_THROWS_AS(load_processed(dir, {"pair1"}), InvalidInputError);
  fs::remove_all(dir);
}
