#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "pvfault/augment.hpp"
#include "pvfault/dataset.hpp"
#include "pvfault/error.hpp"

using namespace pvfault;

namespace {

ImageBuffer random_image(std::size_t w, std::size_t h, Rng& rng) {
  ImageBuffer img(w, h);
  for (std::uint8_t& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

DatasetManifest fixture(std::size_t defective, std::size_t normal) {
  DatasetManifest m;
  m.class_names = {"defective", "normal"};
  for (std::size_t label = 0; label < 2; ++label) {
    const std::size_t n = label == 0 ? defective : normal;
    for (std::size_t i = 0; i < n; ++i) {
      Sample s;
      s.path = m.class_names[label] + "/img_" + std::to_string(i) + ".png";
      s.label = label;
      m.samples.push_back(s);
    }
  }
  return m;
}

ImageBuffer load_fixture(const std::string& path) {
  Rng rng{std::hash<std::string>{}(path)};
  return random_image(12, 10, rng);
}

std::size_t changed_pixels(const ImageBuffer& a, const ImageBuffer& b) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.width * a.height; ++i) {
    bool diff = false;
    for (std::size_t c = 0; c < 3; ++c) diff |= a.pixels[i * 3 + c] != b.pixels[i * 3 + c];
    n += diff;
  }
  return n;
}

}  // namespace

TEST_SUITE("augment") {

TEST_CASE("flips are involutions") {
  Rng rng{1};
  for (int i = 0; i < 1000; ++i) {
    const ImageBuffer img = random_image(1 + rng.below(9), 1 + rng.below(9), rng);
    CHECK(flip_vertical(flip_vertical(img)) == img);
    CHECK(flip_horizontal(flip_horizontal(img)) == img);
  }
  ImageBuffer two(2, 1);
  two.set_gray(0, 0, 10);
  two.set_gray(1, 0, 20);
  CHECK(flip_horizontal(two).at(0, 0, 0) == 20);
}

TEST_CASE("brightness is additive with half-to-even rounding and clamping") {
  ImageBuffer img(3, 1);
  img.set_gray(0, 0, 200);
  img.set_gray(1, 0, 0);
  img.set_gray(2, 0, 100);
  const ImageBuffer up = adjust_brightness(img, 0.25);
  CHECK(up.at(0, 0, 0) == 255);    // 263.75 clamps
  CHECK(up.at(1, 0, 0) == 64);     // 63.75 rounds to 64
  CHECK(up.at(2, 0, 0) == 164);
  const ImageBuffer down = adjust_brightness(img, -0.25);
  CHECK(down.at(1, 0, 0) == 0);
  CHECK(down.at(2, 0, 0) == 36);   // 36.25
  // 0.5/255 adds exactly half a level: 100.5 -> 100, 101.5 -> 102.
  img.set_gray(0, 0, 101);
  const ImageBuffer half = adjust_brightness(img, 0.5 / 255.0);
  CHECK(half.at(2, 0, 0) == 100);
  CHECK(half.at(0, 0, 0) == 102);
  CHECK_THROWS_AS(adjust_brightness(img, 0.3), ConfigError);
}

TEST_CASE("exposure is a 2^delta gain") {
  ImageBuffer img(1, 1);
  img.set_gray(0, 0, 200);
  CHECK(adjust_exposure(img, 0.15).at(0, 0, 0) == static_cast<int>(std::nearbyint(std::min(255.0, 200 * std::pow(2.0, 0.15)))));
  CHECK(adjust_exposure(img, -0.15).at(0, 0, 0) == static_cast<int>(std::nearbyint(200 * std::pow(2.0, -0.15))));
  CHECK(adjust_exposure(img, 0.0) == img);
  CHECK_THROWS_AS(adjust_exposure(img, -0.2), ConfigError);
}

TEST_CASE("gaussian blur") {
  CHECK(gaussian_kernel(0.0) == std::vector<double>{1.0});
  const auto k = gaussian_kernel(3.5);
  CHECK(k.size() == 2 * 11 + 1);
  double sum = 0;
  for (double v : k) sum += v;
  CHECK(sum == doctest::Approx(1.0));
  CHECK(k[0] == doctest::Approx(k.back()));
  Rng rng{2};
  const ImageBuffer img = random_image(9, 7, rng);
  CHECK(gaussian_blur(img, 0.0) == img);
  ImageBuffer flat(5, 5, 77);
  CHECK(gaussian_blur(flat, 2.0) == flat);
  CHECK_THROWS_AS(gaussian_blur(img, 3.6), ConfigError);
}

TEST_CASE("salt and pepper corrupts exactly round(fraction*W*H) pixels") {
  Rng rng{3};
  for (int i = 0; i < 100; ++i) {
    const std::size_t w = 8 + rng.below(60), h = 8 + rng.below(60);
    // Mid-gray so every corrupted pixel is visibly changed.
    ImageBuffer img(w, h, 128);
    const std::size_t expected =
        static_cast<std::size_t>(std::nearbyint(0.018 * static_cast<double>(w * h)));
    CHECK(salt_pepper_count(w, h, 0.018) == expected);
    const ImageBuffer out = salt_pepper(img, 0.018, rng.next());
    CHECK(changed_pixels(img, out) == expected);
    for (std::size_t p = 0; p < w * h; ++p) {
      const std::uint8_t v = out.pixels[p * 3];
      CHECK((v == 0 || v == 255 || v == 128));
      CHECK(out.pixels[p * 3 + 1] == v);
    }
  }
  ImageBuffer img(10, 10, 128);
  CHECK(salt_pepper(img, 0.018, 5) == salt_pepper(img, 0.018, 5));
  // 0.018 * 90 * 25 = 40.5 exactly; ties go to even.
  CHECK(salt_pepper_count(90, 25, 0.018) == 40);
  CHECK(salt_pepper_count(100, 100, 0.018) == 180);
  CHECK(salt_pepper_count(5, 5, 0.018) == 0);
}

TEST_CASE("expand_dataset reaches 361/177 from 153/75") {
  const DatasetManifest m = fixture(153, 75);
  const ExpandedDataset out = expand_dataset(m, default_augmentation_spec(42), load_fixture);
  const auto counts = out.manifest.class_counts();
  CHECK(counts[0] == 361);
  CHECK(counts[1] == 177);
  CHECK(out.manifest.samples.size() == 538);
  CHECK(out.images.size() == 538 - 228);

  std::set<std::string> paths;
  std::map<std::string, std::size_t> per_source;
  for (const Sample& s : out.manifest.samples) {
    CHECK(paths.insert(s.path).second);
    if (s.provenance.origin != Origin::augmented) continue;
    CHECK_FALSE(s.provenance.transforms.empty());
    ++per_source[s.provenance.source];
    // Each generated image is its source replayed through the recorded transforms.
    CHECK(out.images.at(s.path) == replay(load_fixture(s.provenance.source), s.provenance.transforms));
  }
  // Round-robin: 208 defective copies over 153 sources, 102 normal over 75.
  for (const auto& [src, n] : per_source) CHECK((n == 1 || n == 2));
}

TEST_CASE("expansion is a pure function of the seed") {
  const DatasetManifest m = fixture(6, 3);
  AugmentationSpec spec = default_augmentation_spec(7);
  spec.targets = {{"defective", 14}, {"normal", 9}};
  const ExpandedDataset a = expand_dataset(m, spec, load_fixture);
  const ExpandedDataset b = expand_dataset(m, spec, load_fixture);
  CHECK(a.manifest == b.manifest);
  CHECK(a.images == b.images);
  spec.seed = 8;
  CHECK_FALSE(expand_dataset(m, spec, load_fixture).manifest == a.manifest);
}

TEST_CASE("sampled parameters stay within their ranges") {
  const AugmentationSpec spec = default_augmentation_spec(9);
  for (std::size_t copy = 0; copy < 500; ++copy) {
    const auto ts = sample_transforms(spec, copy % 2, copy, nullptr);
    CHECK_FALSE(ts.empty());
    for (const TransformRecord& t : ts) {
      switch (t.kind) {
        case TransformKind::brightness: CHECK(std::abs(t.value) <= 0.25); break;
        case TransformKind::exposure: CHECK(std::abs(t.value) <= 0.15); break;
        case TransformKind::gaussian_blur: CHECK((t.value >= 0 && t.value <= 3.5)); break;
        case TransformKind::salt_pepper: CHECK(t.value == 0.018); break;
        default: break;
      }
    }
  }
}

TEST_CASE("invalid specs and targets are rejected") {
  AugmentationSpec spec = default_augmentation_spec(1);
  spec.transforms[2].hi = 0.3;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = default_augmentation_spec(1);
  spec.targets = {{"defective", 2}};
  CHECK_THROWS_AS(expand_dataset(fixture(5, 5), spec, load_fixture), ConfigError);
  spec.targets = {{"cracked", 20}};
  CHECK_THROWS_AS(expand_dataset(fixture(5, 5), spec, load_fixture), ConfigError);
}

TEST_CASE("expand_directory writes images and a readable manifest") {
  testing::TempDir src("aug_src"), out("aug_out");
  const DatasetManifest m = fixture(3, 2);
  for (const Sample& s : m.samples) {
    std::filesystem::create_directories((src.path() / s.path).parent_path());
    write_png(load_fixture(s.path), src.path() / s.path);
  }
  AugmentationSpec spec = default_augmentation_spec(5);
  spec.targets = {{"defective", 5}, {"normal", 4}};
  const DatasetManifest written = expand_directory(load_directory(src.path()), spec, src.path(), out.path());
  CHECK(read_manifest(out.path() / kManifestFileName) == written);
  CHECK(load_dataset(out.path()).class_counts() == std::vector<std::size_t>{5, 4});
  for (const Sample& s : written.samples) CHECK(std::filesystem::exists(out.path() / s.path));
}

}  // TEST_SUITE
