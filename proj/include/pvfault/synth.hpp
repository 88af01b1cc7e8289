#pragma once

// Synthetic electroluminescence-like cell images for end-to-end testing:
// textured gray squares with horizontal busbar stripes. Defective cells add
// thin dark crack polylines and darker blob contaminations.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pvfault/image.hpp"
#include "pvfault/manifest.hpp"

namespace pvfault {

/// Cracks are drawn at least this many levels below the local background.
inline constexpr int kMinCrackContrast = 20;

struct SynthCell {
  ImageBuffer image;
  /// 1 where a crack pixel was drawn, row-major W*H.
  std::vector<std::uint8_t> crack_mask;
};

/// Pure function of its arguments.
SynthCell synth_cell(bool defective, std::size_t side, std::uint64_t seed, std::size_t index);

struct CrackContrast {
  std::size_t crack_pixels = 0;
  /// Smallest (median of the non-crack pixels in the 7x7 window) minus the
  /// crack pixel value, over all crack pixels; 255 when there are none.
  int min_margin = 255;
};

CrackContrast crack_contrast(const SynthCell& cell);

struct SynthOptions {
  std::size_t per_class = 16;
  std::size_t side = 128;
  std::uint64_t seed = 1;
};

/// In-memory fixture: manifest (classes "defective", "normal", origin
/// synthetic) plus the images keyed by manifest path.
struct SynthDataset {
  DatasetManifest manifest;
  std::vector<ImageBuffer> images;  // aligned with manifest.samples
};

/// Throws Error if any generated crack misses the contrast guarantee.
SynthDataset synth_dataset(const SynthOptions& options);

/// Writes <out>/<class>/synth_NNNN.png and <out>/manifest.jsonl.
DatasetManifest write_synth_dataset(const SynthOptions& options, const std::filesystem::path& out);

}  // namespace pvfault
