#include "pvfault/dataset.hpp"

#include <algorithm>
#include <set>

#include "pvfault/rng.hpp"

namespace pvfault {

namespace fs = std::filesystem;

DatasetManifest load_directory(const fs::path& root,
                               const std::function<void(const std::string&)>& warn) {
  if (!fs::is_directory(root)) throw IoError("dataset root " + root.string() + " is not a directory");
  DatasetManifest manifest;
  for (const fs::directory_entry& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) manifest.class_names.push_back(entry.path().filename().string());
  }
  std::sort(manifest.class_names.begin(), manifest.class_names.end());
  if (manifest.class_names.empty()) {
    throw IoError("dataset root " + root.string() + " has no class subdirectories");
  }
  for (std::size_t label = 0; label < manifest.class_names.size(); ++label) {
    const std::string& name = manifest.class_names[label];
    std::vector<std::string> paths;
    for (const fs::directory_entry& entry : fs::directory_iterator(root / name)) {
      if (!entry.is_regular_file()) continue;
      if (!is_supported_image(entry.path())) {
        if (warn) warn("skipping " + (fs::path(name) / entry.path().filename()).string() +
                       ": unsupported extension");
        continue;
      }
      paths.push_back((fs::path(name) / entry.path().filename()).generic_string());
    }
    if (paths.empty()) throw IoError("class '" + name + "' has no images");
    std::sort(paths.begin(), paths.end());
    for (std::string& p : paths) {
      Sample s;
      s.path = std::move(p);
      s.label = label;
      manifest.samples.push_back(std::move(s));
    }
  }
  return manifest;
}

DatasetManifest load_dataset(const fs::path& root,
                             const std::function<void(const std::string&)>& warn) {
  const fs::path manifest = root / kManifestFileName;
  if (fs::exists(manifest)) return read_manifest(manifest);
  return load_directory(root, warn);
}

DatasetManifest split_train_valid(const DatasetManifest& manifest, std::size_t valid_count,
                                  std::uint64_t seed, bool originals_only) {
  const std::size_t total = manifest.samples.size();
  if (valid_count == 0 || valid_count >= total) {
    throw ConfigError("validation size " + std::to_string(valid_count) +
                      " must lie strictly between 0 and the sample count " +
                      std::to_string(total));
  }
  const std::size_t classes = manifest.class_names.size();
  std::vector<std::vector<std::size_t>> eligible(classes);
  std::size_t eligible_total = 0;
  for (std::size_t i = 0; i < total; ++i) {
    const Sample& s = manifest.samples[i];
    if (originals_only && s.provenance.origin == Origin::augmented) continue;
    eligible.at(s.label).push_back(i);
    ++eligible_total;
  }
  if (valid_count > eligible_total) {
    throw ConfigError("validation size " + std::to_string(valid_count) + " exceeds the " +
                      std::to_string(eligible_total) + " eligible samples");
  }

  // Largest-remainder apportionment of valid_count over classes.
  std::vector<std::size_t> quota(classes);
  std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder numerator, class)
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const std::size_t num = valid_count * eligible[c].size();
    quota[c] = num / eligible_total;
    remainders.emplace_back(num % eligible_total, c);
    assigned += quota[c];
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < valid_count; r = (r + 1) % classes) {
    const std::size_t c = remainders[r].second;
    if (quota[c] < eligible[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }

  DatasetManifest out = manifest;
  for (Sample& s : out.samples) s.split = Split::train;
  for (std::size_t c = 0; c < classes; ++c) {
    Rng rng{seed, 0x5b117ull, c};
    rng.shuffle(std::span<std::size_t>(eligible[c]));
    for (std::size_t k = 0; k < quota[c]; ++k) out.samples[eligible[c][k]].split = Split::valid;
  }
  return out;
}

std::size_t exclude_validation_copies(DatasetManifest& manifest) {
  std::set<std::string> valid;
  for (const Sample& s : manifest.samples) {
    if (s.split == Split::valid) valid.insert(s.path);
  }
  std::size_t excluded = 0;
  for (Sample& s : manifest.samples) {
    if (s.provenance.origin == Origin::augmented && s.split == Split::train &&
        valid.count(s.provenance.source)) {
      s.split = Split::unassigned;
      ++excluded;
    }
  }
  return excluded;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::span<const std::size_t> indices,
                                                    std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(indices.begin(), indices.end());
  Rng rng{seed, 0xba7c4ull, epoch};
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

ImageCache::ImageCache(const DatasetManifest& manifest, fs::path root, std::size_t side,
                       Normalization normalization)
    : manifest_(manifest), root_(std::move(root)), side_(side), normalization_(normalization) {
  if (side == 0) throw ConfigError("image side must be positive");
}

const ImageBuffer& ImageCache::image(std::size_t sample) {
  if (auto it = images_.find(sample); it != images_.end()) return it->second;
  const fs::path path = root_ / manifest_.samples.at(sample).path;
  ImageBuffer decoded;
  try {
    decoded = read_image(path);
  } catch (const Error& e) {
    throw IoError("cannot load sample " + path.string() + ": " + e.what());
  }
  return images_.emplace(sample, resize_bilinear(decoded, side_, side_)).first->second;
}

Batch make_batch(ImageCache& cache, std::span<const std::size_t> samples) {
  if (samples.empty()) throw ConfigError("cannot build an empty batch");
  Batch batch;
  const std::size_t side = cache.side();
  batch.images = Tensor({samples.size(), 3, side, side});
  for (std::size_t b = 0; b < samples.size(); ++b) {
    batch.images.set_slice(b, to_tensor(cache.image(samples[b]), cache.normalization()));
    batch.labels.push_back(cache.manifest().samples[samples[b]].label);
    batch.samples.push_back(samples[b]);
  }
  return batch;
}

std::vector<Batch> batches(ImageCache& cache, Split split, std::size_t batch_size,
                           std::uint64_t seed, std::size_t epoch) {
  const std::vector<std::size_t> members = cache.manifest().indices(split);
  if (members.empty()) {
    throw ConfigError("split '" + std::string(to_string(split)) + "' has no samples");
  }
  std::vector<Batch> out;
  for (const auto& idx : epoch_batches(members, batch_size, seed, epoch)) {
    out.push_back(make_batch(cache, idx));
  }
  return out;
}

}  // namespace pvfault
