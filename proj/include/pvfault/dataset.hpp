#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pvfault/image.hpp"
#include "pvfault/manifest.hpp"
#include "pvfault/tensor.hpp"

namespace pvfault {

/// Default validation size.
inline constexpr std::size_t kDefaultValidCount = 48;

/// Scans root/<class>/*.{png,jpg,jpeg}. Classes are the sorted subdirectory
/// names, samples are sorted by path. Files with other extensions are
/// skipped and reported through `warn`. An empty class is an error.
DatasetManifest load_directory(const std::filesystem::path& root,
                               const std::function<void(const std::string&)>& warn = {});

/// root/manifest.jsonl when present, otherwise load_directory(root).
DatasetManifest load_dataset(const std::filesystem::path& root,
                             const std::function<void(const std::string&)>& warn = {});

/// Stratified random split. Each class contributes its proportional share of
/// `valid_count` (largest-remainder rounding), chosen by a seeded shuffle.
/// With `originals_only`, only original/synthetic samples are eligible for
/// validation. Every sample ends up in exactly one of train/valid.
DatasetManifest split_train_valid(const DatasetManifest& manifest, std::size_t valid_count,
                                  std::uint64_t seed, bool originals_only = false);

/// Moves augmented samples whose source is a validation sample back to
/// unassigned, so no view of a validation image is trained on. Returns the
/// number of samples excluded.
std::size_t exclude_validation_copies(DatasetManifest& manifest);

/// Sample indices of one epoch, shuffled by (seed, epoch) and cut into
/// batches of `batch_size`; the last batch may be smaller.
std::vector<std::vector<std::size_t>> epoch_batches(std::span<const std::size_t> indices,
                                                    std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch);

/// Decodes and resizes manifest images on first use and keeps them.
class ImageCache {
 public:
  ImageCache(const DatasetManifest& manifest, std::filesystem::path root, std::size_t side,
             Normalization normalization = Normalization::centered);

  std::size_t side() const { return side_; }
  Normalization normalization() const { return normalization_; }
  const DatasetManifest& manifest() const { return manifest_; }
  /// Decode errors name the offending path.
  const ImageBuffer& image(std::size_t sample);

 private:
  const DatasetManifest& manifest_;
  std::filesystem::path root_;
  std::size_t side_;
  Normalization normalization_;
  std::unordered_map<std::size_t, ImageBuffer> images_;
};

struct Batch {
  Tensor images;  // [B, 3, side, side], scaled per the cache's normalization
  std::vector<std::size_t> labels;
  std::vector<std::size_t> samples;  // manifest indices
};

Batch make_batch(ImageCache& cache, std::span<const std::size_t> samples);

/// All batches of one epoch of `split`.
std::vector<Batch> batches(ImageCache& cache, Split split, std::size_t batch_size,
                           std::uint64_t seed, std::size_t epoch);

}  // namespace pvfault
