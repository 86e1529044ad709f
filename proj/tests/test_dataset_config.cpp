#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "derm/config.hpp"
#include "derm/dataset.hpp"

using namespace derm;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("derm_test_" + std::to_string(std::random_device{}()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

Image solid(float v) {
  Image img(4, 4);
  for (auto& px : img.pixels) px = v;
  return img;
}

}  // namespace

TEST_CASE("label mapping groups the seven codes into the binary target") {
  for (const char* mal : {"mel", "bcc", "akiec", "1"}) CHECK(map_label(mal) == 1);
  for (const char* ben : {"nv", "bkl", "vasc", "df", "0"}) CHECK(map_label(ben) == 0);
  CHECK(!map_label("xyz").has_value());
}

TEST_CASE("manifest loading validates rows and file existence") {
  TempDir dir;
  write_ppm_file((dir.path / "a.ppm").string(), solid(0.5f));
  write_ppm_file((dir.path / "b.ppm").string(), solid(0.2f));

  write_text(dir.path / "ok.csv", "image_path,label\na.ppm,mel\nb.ppm,nv\n");
  auto ds = load_manifest((dir.path / "ok.csv").string(), dir.path.string());
  CHECK(ds.entries.size() == 2);
  CHECK(ds.entries[0].label == 1);
  CHECK(ds.entries[1].label == 0);

  write_text(dir.path / "bad_label.csv", "image_path,label\na.ppm,mel\nb.ppm,???\n");
  CHECK_THROWS_WITH_AS(load_manifest((dir.path / "bad_label.csv").string(), dir.path.string()),
                       doctest::Contains("row 3"), ConfigError);

  write_text(dir.path / "missing.csv", "image_path,label\nnope.ppm,mel\n");
  CHECK_THROWS_AS(load_manifest((dir.path / "missing.csv").string(), dir.path.string()), IoError);

  write_text(dir.path / "empty.csv", "image_path,label\n");
  CHECK_THROWS_AS(load_manifest((dir.path / "empty.csv").string(), dir.path.string()), IoError);

  write_text(dir.path / "no_header.csv", "a.ppm,mel\n");
  CHECK_THROWS_AS(load_manifest((dir.path / "no_header.csv").string(), dir.path.string()),
                  IoError);
}

TEST_CASE("stratified split is disjoint, exhaustive and proportional") {
  LabeledDataset ds;
  for (int i = 0; i < 780; ++i) ds.entries.push_back({"x.ppm", "nv", 0});
  for (int i = 0; i < 220; ++i) ds.entries.push_back({"x.ppm", "mel", 1});

  const auto splits = stratified_split(ds, SplitRatios{}, 7);
  CHECK(splits.train.size() + splits.val.size() + splits.test.size() == 1000);

  std::vector<int> seen(1000, 0);
  for (const auto* part : {&splits.train, &splits.val, &splits.test})
    for (std::size_t idx : *part) seen[idx] += 1;
  for (int s : seen) CHECK(s == 1);

  // Per-split class proportion within one sample of the global 78/22.
  for (const auto* part : {&splits.train, &splits.val, &splits.test}) {
    double pos = 0;
    for (std::size_t idx : *part) pos += ds.entries[idx].label;
    CHECK(std::abs(pos - 0.22 * static_cast<double>(part->size())) <= 1.0);
  }

  // Determinism and seed sensitivity.
  const auto again = stratified_split(ds, SplitRatios{}, 7);
  CHECK(again.train == splits.train);
  const auto other = stratified_split(ds, SplitRatios{}, 8);
  CHECK(other.train != splits.train);
}

TEST_CASE("stratified split rejects classes too small to cover three splits") {
  LabeledDataset ds;
  for (int i = 0; i < 10; ++i) ds.entries.push_back({"x.ppm", "nv", 0});
  ds.entries.push_back({"x.ppm", "mel", 1});
  ds.entries.push_back({"x.ppm", "mel", 1});
  CHECK_THROWS_AS(stratified_split(ds, SplitRatios{}, 1), ConfigError);
}

TEST_CASE("batches partition the index range and keep the remainder") {
  const auto batches = make_batches(10, 4, 3, 0, true);
  REQUIRE(batches.size() == 3);
  CHECK(batches[2].size() == 2);
  std::vector<int> seen(10, 0);
  for (const auto& b : batches)
    for (std::size_t i : b) seen[i] += 1;
  for (int s : seen) CHECK(s == 1);
  CHECK(make_batches(10, 4, 3, 0, true) == batches);
  CHECK(make_batches(10, 4, 3, 1, true) != batches);
}

TEST_CASE("config parsing applies defaults and round-trips") {
  const auto cfg = parse_config("[data]\ndata_root = /tmp\n[train]\nseed = 9\n");
  CHECK(cfg.image_size == 224);
  CHECK(cfg.epochs == 10);
  CHECK(cfg.batch_size == 32);
  CHECK(cfg.lr == 1e-4);
  CHECK(cfg.seed == 9);

  const auto back = parse_config(serialize_config(cfg));
  CHECK(serialize_config(back) == serialize_config(cfg));
  CHECK(back.stage_channels == cfg.stage_channels);
  CHECK(back.lr == cfg.lr);
  CHECK(back.augment.crop_scale_lo == cfg.augment.crop_scale_lo);
}

TEST_CASE("config rejects unknown keys and sections with the line number") {
  CHECK_THROWS_WITH_AS(parse_config("[data]\nimage_size = 224\nbogus = 1\n"),
                       doctest::Contains("line 3"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[nope]\n"), doctest::Contains("line 1"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[train]\nepochs == 3\n"), doctest::Contains("line 2"),
                       ConfigError);
  CHECK_THROWS_AS(parse_config("key = 1\n"), ConfigError);
}

TEST_CASE("config parses lists, intervals and enums") {
  const auto cfg = parse_config(
      "[model]\nkind = parallel\nstage_channels = 4,8\nfusion = spline\n"
      "spline_range = -1.5,1.5\n[augment]\njitter_factor = 0.9,1.1\n"
      "[data]\nimage_size = 32\n[model]\npatch_size = 8\n");
  CHECK(cfg.model_kind == ModelKind::Parallel);
  CHECK(cfg.stage_channels == std::vector<std::size_t>{4, 8});
  CHECK(cfg.fusion == FusionKind::Spline);
  CHECK(cfg.spline_lo == -1.5);
  CHECK(cfg.augment.jitter_lo == 0.9);
  CHECK_THROWS_AS(parse_config("[model]\nkind = diagonal\n"), ConfigError);
}

TEST_CASE("config validation catches incompatible geometry") {
  // 224 with 4 stages is fine; 100 is not divisible by 16.
  CHECK_THROWS_AS(parse_config("[data]\nimage_size = 100\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nbatch_size = 0\n"), ConfigError);
}

TEST_CASE("comments and blank lines are ignored") {
  const auto cfg = parse_config("# top comment\n\n[train]\n# inner\nepochs = 3\n");
  CHECK(cfg.epochs == 3);
}
