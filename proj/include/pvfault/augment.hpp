#pragma once

// Seeded image augmentation: flips, brightness, exposure, Gaussian blur and
// salt-and-pepper noise, plus dataset expansion to per-class targets.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pvfault/image.hpp"
#include "pvfault/manifest.hpp"

namespace pvfault {

inline constexpr double kMaxBrightness = 0.25;
inline constexpr double kMaxExposure = 0.15;
inline constexpr double kMaxBlurSigma = 3.5;
inline constexpr double kSaltPepperFraction = 0.018;

ImageBuffer flip_vertical(const ImageBuffer& image);
ImageBuffer flip_horizontal(const ImageBuffer& image);

/// Additive shift of delta*255 per channel, delta in [-0.25, 0.25].
/// Results are rounded half-to-even and clamped to [0, 255].
ImageBuffer adjust_brightness(const ImageBuffer& image, double delta);

/// Multiplicative gain 2^delta, delta in [-0.15, 0.15]; same rounding.
ImageBuffer adjust_exposure(const ImageBuffer& image, double delta);

/// Normalized 1-D Gaussian taps of radius ceil(3*sigma); {1} for sigma 0.
std::vector<double> gaussian_kernel(double sigma);

/// Separable blur with clamp-to-edge borders, sigma in [0, 3.5].
ImageBuffer gaussian_blur(const ImageBuffer& image, double sigma);

/// Number of pixels salt_pepper corrupts: fraction * W * H rounded
/// half-to-even, like the pixel transforms.
std::size_t salt_pepper_count(std::size_t width, std::size_t height, double fraction);

/// Sets exactly salt_pepper_count() distinct pixels, chosen by the seeded
/// generator, to 0 or 255 across all channels (fair coin per pixel).
ImageBuffer salt_pepper(const ImageBuffer& image, double fraction, std::uint64_t seed);

/// Applies one recorded transform.
ImageBuffer apply_transform(const ImageBuffer& image, const TransformRecord& transform);

/// Applies a recorded transform list in order.
ImageBuffer replay(const ImageBuffer& image, const std::vector<TransformRecord>& transforms);

struct TransformRange {
  TransformKind kind;
  double lo = 0.0;
  double hi = 0.0;
};

struct AugmentationSpec {
  std::uint64_t seed = 0;
  /// Candidate transforms in application order.
  std::vector<TransformRange> transforms;
  /// Probability that each candidate is applied to a generated copy.
  double include_probability = 0.5;
  /// Per-class totals (originals plus generated copies), keyed by class name.
  std::map<std::string, std::size_t> targets;

  /// Throws ConfigError when a range leaves its permitted bounds.
  void validate() const;
};

/// All six transforms over their full ranges, with the 361/177 targets.
AugmentationSpec default_augmentation_spec(std::uint64_t seed);

/// Transform parameters for generated copy `copy` of class `label`; a pure
/// function of (spec.seed, label, copy). At least one transform is drawn.
std::vector<TransformRecord> sample_transforms(const AugmentationSpec& spec, std::size_t label,
                                               std::size_t copy, std::uint64_t* stream_seed);

struct ExpandedDataset {
  DatasetManifest manifest;
  /// Generated images keyed by manifest path.
  std::map<std::string, ImageBuffer> images;
};

/// Keeps every original and adds generated copies until each class reaches
/// its target. Copy j of a class derives from the class's originals in
/// round-robin order. `load` decodes a manifest path.
ExpandedDataset expand_dataset(const DatasetManifest& manifest, const AugmentationSpec& spec,
                               const std::function<ImageBuffer(const std::string&)>& load);

/// Disk form: reads originals under `src_root`, writes originals (copied
/// byte for byte), generated PNGs and manifest.jsonl under `out_root`.
DatasetManifest expand_directory(const DatasetManifest& manifest, const AugmentationSpec& spec,
                                 const std::filesystem::path& src_root,
                                 const std::filesystem::path& out_root);

}  // namespace pvfault
