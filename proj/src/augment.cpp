#include "pvfault/augment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "pvfault/rng.hpp"

namespace pvfault {

namespace fs = std::filesystem;

namespace {

std::uint8_t to_pixel(double v) {
  // nearbyint rounds half to even under the default rounding mode.
  return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
}

void check_range(double value, double lo, double hi, const char* what) {
  if (!(value >= lo && value <= hi)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s %.6g outside [%.6g, %.6g]", what, value, lo, hi);
    throw ConfigError(buf);
  }
}

}  // namespace

ImageBuffer flip_vertical(const ImageBuffer& image) {
  ImageBuffer out(image.width, image.height);
  const std::size_t row = image.width * ImageBuffer::channels;
  for (std::size_t y = 0; y < image.height; ++y) {
    std::copy_n(&image.pixels[(image.height - 1 - y) * row], row, &out.pixels[y * row]);
  }
  return out;
}

ImageBuffer flip_horizontal(const ImageBuffer& image) {
  ImageBuffer out(image.width, image.height);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      for (std::size_t c = 0; c < ImageBuffer::channels; ++c) {
        out.at(x, y, c) = image.at(image.width - 1 - x, y, c);
      }
    }
  }
  return out;
}

ImageBuffer adjust_brightness(const ImageBuffer& image, double delta) {
  check_range(delta, -kMaxBrightness, kMaxBrightness, "brightness");
  ImageBuffer out = image;
  const double shift = delta * 255.0;
  for (std::uint8_t& p : out.pixels) p = to_pixel(p + shift);
  return out;
}

ImageBuffer adjust_exposure(const ImageBuffer& image, double delta) {
  check_range(delta, -kMaxExposure, kMaxExposure, "exposure");
  ImageBuffer out = image;
  const double gain = std::exp2(delta);
  for (std::uint8_t& p : out.pixels) p = to_pixel(p * gain);
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  check_range(sigma, 0.0, kMaxBlurSigma, "blur sigma");
  if (sigma == 0.0) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
    taps[i + radius] = w;
    sum += w;
  }
  for (double& w : taps) w /= sum;
  return taps;
}

ImageBuffer gaussian_blur(const ImageBuffer& image, double sigma) {
  const std::vector<double> taps = gaussian_kernel(sigma);
  if (taps.size() == 1) return image;
  const long radius = static_cast<long>(taps.size() / 2);
  const long w = static_cast<long>(image.width), h = static_cast<long>(image.height);
  constexpr std::size_t ch = ImageBuffer::channels;

  std::vector<double> horizontal(image.pixels.size());
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k) {
          const long sx = std::clamp(x + k, 0L, w - 1);
          acc += taps[k + radius] * image.pixels[(y * w + sx) * ch + c];
        }
        horizontal[(y * w + x) * ch + c] = acc;
      }
    }
  }
  ImageBuffer out(image.width, image.height);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k) {
          const long sy = std::clamp(y + k, 0L, h - 1);
          acc += taps[k + radius] * horizontal[(sy * w + x) * ch + c];
        }
        out.pixels[(y * w + x) * ch + c] = to_pixel(acc);
      }
    }
  }
  return out;
}

std::size_t salt_pepper_count(std::size_t width, std::size_t height, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("salt-and-pepper fraction must lie in (0, 1)");
  }
  return static_cast<std::size_t>(std::nearbyint(fraction * static_cast<double>(width * height)));
}

ImageBuffer salt_pepper(const ImageBuffer& image, double fraction, std::uint64_t seed) {
  const std::size_t total = image.width * image.height;
  const std::size_t count = salt_pepper_count(image.width, image.height, fraction);
  ImageBuffer out = image;
  if (count == 0) return out;
  // Partial Fisher-Yates: the first `count` slots are a uniform sample
  // without replacement.
  std::vector<std::size_t> positions(total);
  for (std::size_t i = 0; i < total; ++i) positions[i] = i;
  Rng rng{seed, 0x5a17ull};
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(positions[i], positions[i + rng.below(total - i)]);
    const std::uint8_t v = rng.coin() ? 255 : 0;
    std::uint8_t* p = &out.pixels[positions[i] * ImageBuffer::channels];
    p[0] = p[1] = p[2] = v;
  }
  return out;
}

ImageBuffer apply_transform(const ImageBuffer& image, const TransformRecord& t) {
  switch (t.kind) {
    case TransformKind::flip_vertical: return flip_vertical(image);
    case TransformKind::flip_horizontal: return flip_horizontal(image);
    case TransformKind::brightness: return adjust_brightness(image, t.value);
    case TransformKind::exposure: return adjust_exposure(image, t.value);
    case TransformKind::gaussian_blur: return gaussian_blur(image, t.value);
    case TransformKind::salt_pepper: return salt_pepper(image, t.value, t.seed);
  }
  return image;
}

ImageBuffer replay(const ImageBuffer& image, const std::vector<TransformRecord>& transforms) {
  ImageBuffer out = image;
  for (const TransformRecord& t : transforms) out = apply_transform(out, t);
  return out;
}

void AugmentationSpec::validate() const {
  if (transforms.empty()) throw ConfigError("augmentation spec has no transforms");
  if (!(include_probability > 0.0 && include_probability <= 1.0)) {
    throw ConfigError("transform inclusion probability must lie in (0, 1]");
  }
  for (const TransformRange& r : transforms) {
    if (r.lo > r.hi) throw ConfigError("empty range for " + std::string(to_string(r.kind)));
    switch (r.kind) {
      case TransformKind::brightness:
        check_range(r.lo, -kMaxBrightness, kMaxBrightness, "brightness bound");
        check_range(r.hi, -kMaxBrightness, kMaxBrightness, "brightness bound");
        break;
      case TransformKind::exposure:
        check_range(r.lo, -kMaxExposure, kMaxExposure, "exposure bound");
        check_range(r.hi, -kMaxExposure, kMaxExposure, "exposure bound");
        break;
      case TransformKind::gaussian_blur:
        check_range(r.lo, 0.0, kMaxBlurSigma, "blur bound");
        check_range(r.hi, 0.0, kMaxBlurSigma, "blur bound");
        break;
      case TransformKind::salt_pepper:
        if (!(r.lo > 0.0 && r.hi < 1.0)) {
          throw ConfigError("salt-and-pepper fraction must lie in (0, 1)");
        }
        break;
      default:
        break;
    }
  }
}

AugmentationSpec default_augmentation_spec(std::uint64_t seed) {
  AugmentationSpec spec;
  spec.seed = seed;
  spec.transforms = {
      {TransformKind::flip_vertical, 0.0, 0.0},
      {TransformKind::flip_horizontal, 0.0, 0.0},
      {TransformKind::brightness, -kMaxBrightness, kMaxBrightness},
      {TransformKind::exposure, -kMaxExposure, kMaxExposure},
      {TransformKind::gaussian_blur, 0.0, kMaxBlurSigma},
      {TransformKind::salt_pepper, kSaltPepperFraction, kSaltPepperFraction},
  };
  spec.targets = {{"defective", 361}, {"normal", 177}};
  return spec;
}

namespace {

TransformRecord draw(const TransformRange& r, Rng& rng) {
  TransformRecord t;
  t.kind = r.kind;
  switch (r.kind) {
    case TransformKind::flip_vertical:
    case TransformKind::flip_horizontal:
      break;
    case TransformKind::salt_pepper:
      t.value = r.lo == r.hi ? r.lo : rng.uniform(r.lo, r.hi);
      t.seed = rng.next();
      break;
    default:
      t.value = rng.uniform(r.lo, r.hi);
      break;
  }
  return t;
}

}  // namespace

std::vector<TransformRecord> sample_transforms(const AugmentationSpec& spec, std::size_t label,
                                               std::size_t copy, std::uint64_t* stream_seed) {
  const std::uint64_t stream = Rng{spec.seed, 0xa06ull, label, copy}.next();
  if (stream_seed) *stream_seed = stream;
  Rng rng(stream);
  std::vector<TransformRecord> out;
  for (const TransformRange& r : spec.transforms) {
    if (rng.bernoulli(spec.include_probability)) out.push_back(draw(r, rng));
  }
  if (out.empty()) {
    out.push_back(draw(spec.transforms[rng.below(spec.transforms.size())], rng));
  }
  return out;
}

ExpandedDataset expand_dataset(const DatasetManifest& manifest, const AugmentationSpec& spec,
                               const std::function<ImageBuffer(const std::string&)>& load) {
  spec.validate();
  if (manifest.samples.empty()) throw ConfigError("cannot augment an empty manifest");
  for (const auto& [name, target] : spec.targets) {
    if (std::find(manifest.class_names.begin(), manifest.class_names.end(), name) ==
        manifest.class_names.end()) {
      throw ConfigError("augmentation target for unknown class '" + name + "'");
    }
  }

  ExpandedDataset result;
  result.manifest.class_names = manifest.class_names;
  std::vector<std::vector<std::size_t>> originals(manifest.class_names.size());
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    result.manifest.samples.push_back(manifest.samples[i]);
    if (manifest.samples[i].provenance.origin != Origin::augmented) {
      originals.at(manifest.samples[i].label).push_back(i);
    }
  }
  const std::vector<std::size_t> counts = manifest.class_counts();

  for (std::size_t label = 0; label < manifest.class_names.size(); ++label) {
    const std::string& name = manifest.class_names[label];
    const auto it = spec.targets.find(name);
    const std::size_t target = it == spec.targets.end() ? counts[label] : it->second;
    if (target < counts[label]) {
      throw ConfigError("target " + std::to_string(target) + " for class '" + name +
                        "' is below its " + std::to_string(counts[label]) + " existing samples");
    }
    const std::size_t needed = target - counts[label];
    if (needed > 0 && originals[label].empty()) {
      throw ConfigError("class '" + name + "' has no original samples to augment");
    }
    std::map<std::size_t, ImageBuffer> decoded;
    for (std::size_t copy = 0; copy < needed; ++copy) {
      const std::size_t src_index = originals[label][copy % originals[label].size()];
      const Sample& src = manifest.samples[src_index];
      auto found = decoded.find(src_index);
      if (found == decoded.end()) found = decoded.emplace(src_index, load(src.path)).first;

      Sample s;
      s.label = label;
      s.provenance.origin = Origin::augmented;
      s.provenance.source = src.path;
      s.provenance.transforms = sample_transforms(spec, label, copy, &s.provenance.seed);
      const fs::path src_path(src.path);
      char suffix[32];
      std::snprintf(suffix, sizeof suffix, "_aug%04zu.png", copy);
      s.path = (src_path.parent_path() / (src_path.stem().string() + suffix)).generic_string();
      result.images[s.path] = replay(found->second, s.provenance.transforms);
      result.manifest.samples.push_back(std::move(s));
    }
  }
  return result;
}

DatasetManifest expand_directory(const DatasetManifest& manifest, const AugmentationSpec& spec,
                                 const fs::path& src_root, const fs::path& out_root) {
  ExpandedDataset expanded = expand_dataset(manifest, spec, [&](const std::string& path) {
    return read_image(src_root / path);
  });
  for (const Sample& s : expanded.manifest.samples) {
    const fs::path dest = out_root / s.path;
    fs::create_directories(dest.parent_path());
    if (s.provenance.origin == Origin::augmented) {
      write_png(expanded.images.at(s.path), dest);
    } else {
      fs::copy_file(src_root / s.path, dest, fs::copy_options::overwrite_existing);
    }
  }
  for (const std::string& name : expanded.manifest.class_names) {
    fs::create_directories(out_root / name);
  }
  write_manifest(expanded.manifest, out_root / kManifestFileName);
  return expanded.manifest;
}

}  // namespace pvfault
