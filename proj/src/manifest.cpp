#include "pvfault/manifest.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "pvfault/error.hpp"

namespace pvfault {

using nlohmann::json;

namespace {

constexpr std::pair<TransformKind, std::string_view> kTransformNames[] = {
    {TransformKind::flip_vertical, "flip_vertical"},
    {TransformKind::flip_horizontal, "flip_horizontal"},
    {TransformKind::brightness, "brightness"},
    {TransformKind::exposure, "exposure"},
    {TransformKind::gaussian_blur, "gaussian_blur"},
    {TransformKind::salt_pepper, "salt_pepper"},
};

Split parse_split(std::string_view s) {
  if (s == "unassigned") return Split::unassigned;
  if (s == "train") return Split::train;
  if (s == "valid") return Split::valid;
  throw IoError("unknown split '" + std::string(s) + "'");
}

Origin parse_origin(std::string_view s) {
  if (s == "original") return Origin::original;
  if (s == "augmented") return Origin::augmented;
  if (s == "synthetic") return Origin::synthetic;
  throw IoError("unknown origin '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::unassigned: return "unassigned";
    case Split::train: return "train";
    case Split::valid: return "valid";
  }
  return "?";
}

std::string_view to_string(Origin origin) {
  switch (origin) {
    case Origin::original: return "original";
    case Origin::augmented: return "augmented";
    case Origin::synthetic: return "synthetic";
  }
  return "?";
}

std::string_view to_string(TransformKind kind) {
  for (const auto& [k, name] : kTransformNames) {
    if (k == kind) return name;
  }
  return "?";
}

TransformKind parse_transform_kind(std::string_view text) {
  for (const auto& [k, name] : kTransformNames) {
    if (name == text) return k;
  }
  throw ConfigError("unknown transform '" + std::string(text) + "'");
}

std::vector<std::size_t> DatasetManifest::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (const Sample& s : samples) {
    if (s.label < counts.size()) ++counts[s.label];
  }
  return counts;
}

std::size_t DatasetManifest::count(Split split) const {
  std::size_t n = 0;
  for (const Sample& s : samples) n += s.split == split;
  return n;
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) out.push_back(i);
  }
  return out;
}

std::string manifest_to_jsonl(const DatasetManifest& manifest) {
  std::string out;
  json header = {{"record", "header"}, {"version", 1}, {"classes", manifest.class_names}};
  out += header.dump() + "\n";
  for (const Sample& s : manifest.samples) {
    json rec = {{"record", "sample"},
                {"path", s.path},
                {"class", s.label < manifest.class_names.size() ? manifest.class_names[s.label]
                                                                : std::string()},
                {"label", s.label},
                {"split", to_string(s.split)},
                {"origin", to_string(s.provenance.origin)}};
    if (s.provenance.origin == Origin::augmented) {
      rec["source"] = s.provenance.source;
      rec["seed"] = s.provenance.seed;
      json transforms = json::array();
      for (const TransformRecord& t : s.provenance.transforms) {
        json tr = {{"kind", to_string(t.kind)}, {"value", t.value}};
        if (t.kind == TransformKind::salt_pepper) tr["seed"] = t.seed;
        transforms.push_back(std::move(tr));
      }
      rec["transforms"] = std::move(transforms);
    }
    out += rec.dump() + "\n";
  }
  return out;
}

DatasetManifest manifest_from_jsonl(std::string_view text) {
  DatasetManifest manifest;
  bool have_header = false;
  std::size_t line_no = 0;
  std::istringstream lines{std::string(text)};
  for (std::string line; std::getline(lines, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json rec = json::parse(line);
      const std::string kind = rec.at("record").get<std::string>();
      if (kind == "header") {
        manifest.class_names = rec.at("classes").get<std::vector<std::string>>();
        have_header = true;
        continue;
      }
      if (kind != "sample") throw IoError("unknown record type '" + kind + "'");
      if (!have_header) throw IoError("sample record before header");
      Sample s;
      s.path = rec.at("path").get<std::string>();
      s.label = rec.at("label").get<std::size_t>();
      if (s.label >= manifest.class_names.size()) {
        throw IoError("label " + std::to_string(s.label) + " outside the class list");
      }
      s.split = parse_split(rec.at("split").get<std::string>());
      s.provenance.origin = parse_origin(rec.at("origin").get<std::string>());
      if (rec.contains("source")) s.provenance.source = rec["source"].get<std::string>();
      if (rec.contains("seed")) s.provenance.seed = rec["seed"].get<std::uint64_t>();
      if (rec.contains("transforms")) {
        for (const json& t : rec["transforms"]) {
          TransformRecord tr;
          tr.kind = parse_transform_kind(t.at("kind").get<std::string>());
          tr.value = t.at("value").get<double>();
          if (t.contains("seed")) tr.seed = t["seed"].get<std::uint64_t>();
          s.provenance.transforms.push_back(tr);
        }
      }
      manifest.samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw IoError("manifest line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw IoError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw IoError("manifest has no header record");
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest_to_jsonl(manifest);
  if (!out) throw IoError("short write to manifest " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return manifest_from_jsonl(text);
}

}  // namespace pvfault
