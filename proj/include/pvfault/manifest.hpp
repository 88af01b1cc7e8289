#pragma once

// Line-delimited JSON manifest. The first line is a header record, every
// following line one sample:
//
//   {"record":"header","version":1,"classes":["defective","normal"]}
//   {"record":"sample","path":"defective/cell_01.png","class":"defective",
//    "label":0,"split":"train","origin":"augmented",
//    "source":"defective/cell_00.png","seed":1234,
//    "transforms":[{"kind":"brightness","value":0.12},
//                  {"kind":"salt_pepper","value":0.018,"seed":99}]}
//
// Paths are relative to the dataset root. "split" is one of
// "unassigned"/"train"/"valid"; "origin" one of
// "original"/"augmented"/"synthetic". "source", "seed" and "transforms" are
// present for augmented samples only.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pvfault {

enum class Split { unassigned, train, valid };
enum class Origin { original, augmented, synthetic };

std::string_view to_string(Split split);
std::string_view to_string(Origin origin);

enum class TransformKind {
  flip_vertical,
  flip_horizontal,
  brightness,
  exposure,
  gaussian_blur,
  salt_pepper,
};

std::string_view to_string(TransformKind kind);
TransformKind parse_transform_kind(std::string_view text);

/// One applied transform with its drawn parameter. For salt_pepper, `value`
/// is the pixel fraction and `seed` drives pixel selection.
struct TransformRecord {
  TransformKind kind = TransformKind::flip_vertical;
  double value = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const TransformRecord&) const = default;
};

struct Provenance {
  Origin origin = Origin::original;
  std::string source;
  std::uint64_t seed = 0;
  std::vector<TransformRecord> transforms;

  bool operator==(const Provenance&) const = default;
};

struct Sample {
  std::string path;
  std::size_t label = 0;
  Split split = Split::unassigned;
  Provenance provenance;

  bool operator==(const Sample&) const = default;
};

struct DatasetManifest {
  /// Sorted class names; the label is the index ("defective" = 0, "normal" = 1).
  std::vector<std::string> class_names;
  std::vector<Sample> samples;

  std::vector<std::size_t> class_counts() const;
  std::size_t count(Split split) const;
  /// Indices of samples in `split`, in manifest order.
  std::vector<std::size_t> indices(Split split) const;

  bool operator==(const DatasetManifest&) const = default;
};

inline constexpr std::string_view kManifestFileName = "manifest.jsonl";

std::string manifest_to_jsonl(const DatasetManifest& manifest);
DatasetManifest manifest_from_jsonl(std::string_view text);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

}  // namespace pvfault
