#include "pvfault/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pvfault/error.hpp"
#include "pvfault/rng.hpp"

namespace pvfault {

namespace fs = std::filesystem;

namespace {

constexpr double kBackgroundFloor = 75.0;

std::uint8_t to_level(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
}

}  // namespace

SynthCell synth_cell(bool defective, std::size_t side, std::uint64_t seed, std::size_t index) {
  if (side < 16) throw ConfigError("synthetic images need a side of at least 16");
  Rng rng{seed, 0x5e7ce11ull, defective ? 0ull : 1ull, index};
  const double s = static_cast<double>(side);

  // Background: base level, broad shading, fine texture, busbars.
  const double base = rng.uniform(125.0, 185.0);
  const double shade_x = rng.uniform(-12.0, 12.0);
  const double shade_y = rng.uniform(-12.0, 12.0);
  const double wave = rng.uniform(2.0, 7.0);
  const double freq = rng.uniform(2.0, 5.0) * 2.0 * std::numbers::pi / s;
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const std::size_t bars = 2 + rng.below(2);
  const double bar_width = std::max(2.0, s / 40.0);
  const double bar_depth = rng.uniform(20.0, 35.0);

  std::vector<double> level(side * side);
  for (std::size_t y = 0; y < side; ++y) {
    const double v = static_cast<double>(y) / s - 0.5;
    for (std::size_t x = 0; x < side; ++x) {
      const double u = static_cast<double>(x) / s - 0.5;
      double p = base + shade_x * u + shade_y * v +
                 wave * std::sin(freq * static_cast<double>(x + y) + phase) +
                 rng.normal() * 4.0;
      for (std::size_t b = 1; b <= bars; ++b) {
        const double centre = s * static_cast<double>(b) / static_cast<double>(bars + 1);
        if (std::abs(static_cast<double>(y) - centre) < bar_width / 2.0) p -= bar_depth;
      }
      level[y * side + x] = p;
    }
  }

  SynthCell cell;
  cell.crack_mask.assign(side * side, 0);
  if (defective) {
    const std::size_t blobs = 1 + rng.below(3);
    for (std::size_t k = 0; k < blobs; ++k) {
      const double cx = rng.uniform(0.1, 0.9) * s;
      const double cy = rng.uniform(0.1, 0.9) * s;
      const double r = rng.uniform(0.03, 0.07) * s;
      const double depth = rng.uniform(30.0, 50.0);
      for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
          const double d = std::hypot(static_cast<double>(x) - cx, static_cast<double>(y) - cy);
          if (d < r) level[y * side + x] -= depth * (1.0 - d / r);
        }
      }
    }
  }
  for (double& p : level) p = std::max(p, kBackgroundFloor);

  if (defective) {
    const double crack_level = rng.uniform(15.0, 45.0);
    const std::size_t cracks = 1 + rng.below(2);
    for (std::size_t k = 0; k < cracks; ++k) {
      double x = rng.uniform(0.2, 0.8) * s;
      double y = rng.uniform(0.2, 0.8) * s;
      double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const std::size_t segments = 3 + rng.below(4);
      for (std::size_t seg = 0; seg < segments; ++seg) {
        angle += rng.uniform(-0.6, 0.6);
        const double length = rng.uniform(0.1, 0.2) * s;
        for (double t = 0.0; t <= length; t += 0.5) {
          const double px = x + t * std::cos(angle);
          const double py = y + t * std::sin(angle);
          const auto ix = static_cast<long>(std::lround(px));
          const auto iy = static_cast<long>(std::lround(py));
          for (long dx = 0; dx <= 1; ++dx) {
            const long qx = ix + dx;
            if (qx < 0 || iy < 0 || qx >= static_cast<long>(side) || iy >= static_cast<long>(side)) {
              continue;
            }
            const std::size_t at = static_cast<std::size_t>(iy) * side + static_cast<std::size_t>(qx);
            level[at] = crack_level;
            cell.crack_mask[at] = 1;
          }
        }
        x += length * std::cos(angle);
        y += length * std::sin(angle);
        x = std::clamp(x, 0.0, s - 1.0);
        y = std::clamp(y, 0.0, s - 1.0);
      }
    }
  }

  cell.image = ImageBuffer(side, side);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) cell.image.set_gray(x, y, to_level(level[y * side + x]));
  }
  return cell;
}

CrackContrast crack_contrast(const SynthCell& cell) {
  CrackContrast out;
  const ImageBuffer& img = cell.image;
  const long w = static_cast<long>(img.width);
  const long h = static_cast<long>(img.height);
  std::vector<int> window;
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      if (!cell.crack_mask[static_cast<std::size_t>(y * w + x)]) continue;
      ++out.crack_pixels;
      window.clear();
      for (long dy = -3; dy <= 3; ++dy) {
        for (long dx = -3; dx <= 3; ++dx) {
          const long qx = x + dx;
          const long qy = y + dy;
          if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
          if (cell.crack_mask[static_cast<std::size_t>(qy * w + qx)]) continue;
          window.push_back(img.at(static_cast<std::size_t>(qx), static_cast<std::size_t>(qy), 0));
        }
      }
      if (window.empty()) continue;
      std::sort(window.begin(), window.end());
      const int median = window[window.size() / 2];
      const int margin = median - img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), 0);
      out.min_margin = std::min(out.min_margin, margin);
    }
  }
  return out;
}

SynthDataset synth_dataset(const SynthOptions& options) {
  if (options.per_class == 0) throw ConfigError("synthetic dataset needs at least one image per class");
  SynthDataset out;
  out.manifest.class_names = {"defective", "normal"};
  for (std::size_t label = 0; label < 2; ++label) {
    for (std::size_t i = 0; i < options.per_class; ++i) {
      SynthCell cell = synth_cell(label == 0, options.side, options.seed, i);
      if (label == 0) {
        const CrackContrast c = crack_contrast(cell);
        if (c.crack_pixels == 0 || c.min_margin < kMinCrackContrast) {
          throw Error("synthetic crack contrast check failed for image " + std::to_string(i));
        }
      }
      char name[32];
      std::snprintf(name, sizeof name, "synth_%04zu.png", i);
      Sample sample;
      sample.path = out.manifest.class_names[label] + "/" + name;
      sample.label = label;
      sample.provenance.origin = Origin::synthetic;
      out.manifest.samples.push_back(std::move(sample));
      out.images.push_back(std::move(cell.image));
    }
  }
  return out;
}

DatasetManifest write_synth_dataset(const SynthOptions& options, const fs::path& out) {
  SynthDataset data = synth_dataset(options);
  for (const std::string& name : data.manifest.class_names) fs::create_directories(out / name);
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    write_png(data.images[i], out / data.manifest.samples[i].path);
  }
  write_manifest(data.manifest, out / kManifestFileName);
  return data.manifest;
}

}  // namespace pvfault
