#include <fstream>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "pvfault/dataset.hpp"
#include "pvfault/error.hpp"

using namespace pvfault;
namespace fs = std::filesystem;

namespace {

DatasetManifest fixture(std::size_t defective, std::size_t normal, std::size_t augmented = 0) {
  DatasetManifest m;
  m.class_names = {"defective", "normal"};
  for (std::size_t label = 0; label < 2; ++label) {
    const std::size_t n = label == 0 ? defective : normal;
    for (std::size_t i = 0; i < n; ++i) {
      Sample s;
      s.path = m.class_names[label] + "/" + std::to_string(i) + ".png";
      s.label = label;
      m.samples.push_back(s);
    }
  }
  for (std::size_t i = 0; i < augmented; ++i) {
    Sample s;
    s.path = "defective/aug" + std::to_string(i) + ".png";
    s.provenance.origin = Origin::augmented;
    s.provenance.source = "defective/" + std::to_string(i % defective) + ".png";
    s.provenance.seed = 100 + i;
    s.provenance.transforms = {{TransformKind::brightness, 0.125, 0},
                               {TransformKind::salt_pepper, 0.018, 77}};
    m.samples.push_back(s);
  }
  return m;
}

void write_gray(const fs::path& p, std::uint8_t v, std::size_t w = 6, std::size_t h = 4) {
  fs::create_directories(p.parent_path());
  write_png(ImageBuffer(w, h, v), p);
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("class folders load in sorted order with warnings for other files") {
  testing::TempDir dir("ds_load");
  write_gray(dir / "normal/b.png", 10);
  write_gray(dir / "normal/a.png", 20);
  write_gray(dir / "defective/z.png", 30);
  std::ofstream(dir / "normal/notes.txt") << "x";
  std::vector<std::string> warnings;
  const DatasetManifest m =
      load_directory(dir.path(), [&](const std::string& w) { warnings.push_back(w); });
  CHECK(m.class_names == std::vector<std::string>{"defective", "normal"});
  REQUIRE(m.samples.size() == 3);
  CHECK(m.samples[0].path == "defective/z.png");
  CHECK(m.samples[0].label == 0);
  CHECK(m.samples[1].path == "normal/a.png");
  CHECK(m.samples[2].label == 1);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("notes.txt") != std::string::npos);
}

TEST_CASE("an empty class folder or missing root is an error") {
  testing::TempDir dir("ds_empty");
  write_gray(dir / "defective/a.png", 1);
  fs::create_directories(dir / "normal");
  CHECK_THROWS_AS(load_directory(dir.path()), IoError);
  CHECK_THROWS_AS(load_directory(dir / "nope"), IoError);
}

TEST_CASE("stratified split: 48 of 228 keeps class proportions") {
  const DatasetManifest m = fixture(153, 75);
  const DatasetManifest s = split_train_valid(m, 48, 1);
  CHECK(s.count(Split::valid) == 48);
  CHECK(s.count(Split::train) == 180);
  std::size_t valid_defective = 0;
  for (const Sample& x : s.samples) valid_defective += x.split == Split::valid && x.label == 0;
  // 48 * 153/228 = 32.2 -> 32, 48 * 75/228 = 15.8 -> 16
  CHECK(valid_defective == 32);
  CHECK(split_train_valid(m, 48, 1) == s);
  CHECK_FALSE(split_train_valid(m, 48, 2) == s);
  CHECK_THROWS_AS(split_train_valid(m, 0, 1), ConfigError);
  CHECK_THROWS_AS(split_train_valid(m, 228, 1), ConfigError);
}

TEST_CASE("originals-only validation and leak exclusion") {
  const DatasetManifest m = fixture(10, 10, 30);
  DatasetManifest s = split_train_valid(m, 6, 3, true);
  for (const Sample& x : s.samples) {
    if (x.provenance.origin == Origin::augmented) CHECK(x.split == Split::train);
  }
  std::set<std::string> valid;
  for (const Sample& x : s.samples)
    if (x.split == Split::valid) valid.insert(x.path);
  const std::size_t excluded = exclude_validation_copies(s);
  CHECK(excluded > 0);
  for (const Sample& x : s.samples) {
    if (x.split == Split::train && x.provenance.origin == Origin::augmented)
      CHECK(valid.count(x.provenance.source) == 0);
  }
}

TEST_CASE("epoch batches partition the split, keep the last partial batch and reshuffle") {
  std::vector<std::size_t> idx(70);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i * 3;
  const auto e1 = epoch_batches(idx, 32, 9, 1);
  REQUIRE(e1.size() == 3);
  CHECK(e1[2].size() == 6);
  std::multiset<std::size_t> seen;
  for (const auto& b : e1) seen.insert(b.begin(), b.end());
  CHECK(seen == std::multiset<std::size_t>(idx.begin(), idx.end()));
  CHECK(epoch_batches(idx, 32, 9, 1) == e1);
  CHECK_FALSE(epoch_batches(idx, 32, 9, 2) == e1);
  CHECK_THROWS_AS(epoch_batches(idx, 0, 9, 1), ConfigError);
}

TEST_CASE("manifest JSONL round-trips provenance") {
  testing::TempDir dir("ds_manifest");
  DatasetManifest m = split_train_valid(fixture(4, 3, 2), 2, 5);
  write_manifest(m, dir / "m.jsonl");
  CHECK(read_manifest(dir / "m.jsonl") == m);
  std::ofstream(dir / "bad.jsonl") << "{\"record\":\"sample\"}\n";
  CHECK_THROWS(read_manifest(dir / "bad.jsonl"));
}

TEST_CASE("images decode, resize and batch") {
  const ImageBuffer jpg = read_image(fs::path(TEST_DATA_DIR) / "solid.jpg");
  CHECK(jpg.width == 4);
  CHECK(jpg.height == 3);
  CHECK(std::abs(int(jpg.at(1, 1, 0)) - 200) <= 3);
  CHECK(std::abs(int(jpg.at(1, 1, 2)) - 50) <= 3);
  const ImageBuffer png = read_image(fs::path(TEST_DATA_DIR) / "gray.png");
  CHECK(png.at(4, 1, 2) == 77);

  Rng rng{4};
  ImageBuffer img(7, 5);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  CHECK(resize_bilinear(img, 7, 5) == img);
  CHECK(resize_bilinear(ImageBuffer(9, 9, 40), 4, 6) == ImageBuffer(4, 6, 40));

  const Tensor unit = to_tensor(ImageBuffer(2, 2, 255), Normalization::unit);
  CHECK(unit(2, 1, 1) == 1.0f);
  const Tensor centered = to_tensor(ImageBuffer(2, 2, 0), Normalization::centered);
  CHECK(centered(0, 0, 0) == -0.5f);

  testing::TempDir dir("ds_batch");
  write_gray(dir / "defective/a.png", 255, 10, 8);
  write_gray(dir / "normal/b.png", 0, 5, 5);
  DatasetManifest m = load_directory(dir.path());
  ImageCache cache(m, dir.path(), 16, Normalization::unit);
  const std::vector<std::size_t> pick{1, 0};
  const Batch b = make_batch(cache, pick);
  CHECK(b.images.shape() == Shape{2, 3, 16, 16});
  CHECK(b.labels == std::vector<std::size_t>{1, 0});
  CHECK(b.images(0, 0, 3, 3) == 0.0f);
  CHECK(b.images(1, 2, 3, 3) == 1.0f);
}

TEST_CASE("unreadable images are reported by path") {
  testing::TempDir dir("ds_corrupt");
  write_gray(dir / "defective/a.png", 1);
  fs::create_directories(dir / "normal");
  std::ofstream(dir / "normal/broken.png") << "not an image";
  DatasetManifest m = load_directory(dir.path());
  ImageCache cache(m, dir.path(), 16);
  try {
    cache.image(1);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("broken.png") != std::string::npos);
  }
}

}  // TEST_SUITE
