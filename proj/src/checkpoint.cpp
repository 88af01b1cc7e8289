#include "pvfault/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace pvfault {

namespace {

constexpr char kMagic[8] = {'P', 'V', 'F', 'N', 'C', 'K', 'P', 'T'};
constexpr char kTrailer[8] = {'P', 'V', 'F', 'N', 'E', 'N', 'D', '\0'};
constexpr std::string_view kArchitectureMarker = "[architecture]\n";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  const char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw IoError("checkpoint " + path_.string() + " is truncated while reading " + what);
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint32_t u32(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4, what));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }

  std::uint64_t u64(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(8, what));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint make_checkpoint(const Network& network, std::map<std::string, std::string> metadata) {
  Checkpoint ckpt;
  ckpt.architecture = network.config();
  ckpt.metadata = std::move(metadata);
  ckpt.metadata["precision"] = "float32";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", network.batchnorm_settings().epsilon);
  ckpt.metadata["batchnorm_epsilon"] = buf;
  std::snprintf(buf, sizeof buf, "%.17g", network.batchnorm_settings().momentum);
  ckpt.metadata["batchnorm_momentum"] = buf;
  for (const Tensor* p : network.parameters()) ckpt.tensors.push_back(*p);
  for (const Tensor* b : network.buffers()) ckpt.tensors.push_back(*b);
  return ckpt;
}

Network restore_network(const Checkpoint& checkpoint) {
  BatchNormSettings bn;
  if (auto it = checkpoint.metadata.find("batchnorm_epsilon"); it != checkpoint.metadata.end()) {
    bn.epsilon = std::stod(it->second);
  }
  if (auto it = checkpoint.metadata.find("batchnorm_momentum"); it != checkpoint.metadata.end()) {
    bn.momentum = std::stod(it->second);
  }
  Network network(checkpoint.architecture, bn);
  std::vector<Tensor*> slots = network.parameters();
  for (Tensor* b : network.buffers()) slots.push_back(b);
  if (slots.size() != checkpoint.tensors.size()) {
    throw IoError("checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
                  " tensors, architecture needs " + std::to_string(slots.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]->shape() != checkpoint.tensors[i].shape()) {
      throw IoError("checkpoint tensor " + std::to_string(i) + " has shape " +
                    shape_string(checkpoint.tensors[i].shape()) + ", architecture needs " +
                    shape_string(slots[i]->shape()));
    }
    *slots[i] = checkpoint.tensors[i];
  }
  return network;
}

void checkpoint_save(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::string header;
  for (const auto& [key, value] : checkpoint.metadata) {
    if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw IoError("checkpoint metadata entry '" + key + "' contains a reserved character");
    }
    header += key + "=" + value + "\n";
  }
  header += kArchitectureMarker;
  header += format_architecture(checkpoint.architecture);

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put_u64(out, architecture_hash(checkpoint.architecture));
  put_u32(out, static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const Tensor& t : checkpoint.tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  out.append(kTrailer, sizeof kTrailer);

  const std::filesystem::path tmp = path.string() + ".partial";
  {
    std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot write checkpoint " + tmp.string());
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw IoError("short write to checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string());
}

Checkpoint checkpoint_load(const std::filesystem::path& path,
                           const std::optional<ArchitectureConfig>& expected) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

  Reader in(bytes, path);
  if (std::memcmp(in.take(sizeof kMagic, "magic"), kMagic, sizeof kMagic) != 0) {
    throw IoError(path.string() + " is not a checkpoint (bad magic)");
  }
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint " + path.string() + " has unsupported version " +
                  std::to_string(version));
  }
  const std::uint32_t header_len = in.u32("header length");
  const std::string header(in.take(header_len, "header"), header_len);

  Checkpoint ckpt;
  const std::size_t marker = header.find(kArchitectureMarker);
  if (marker == std::string::npos) {
    throw IoError("checkpoint " + path.string() + " header has no architecture section");
  }
  std::istringstream meta(header.substr(0, marker));
  for (std::string line; std::getline(meta, line);) {
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    ckpt.metadata[line.substr(0, eq)] = line.substr(eq + 1);
  }
  try {
    ckpt.architecture = parse_architecture(header.substr(marker + kArchitectureMarker.size()));
  } catch (const Error& e) {
    throw IoError("checkpoint " + path.string() + " has an invalid architecture: " + e.what());
  }

  const std::uint64_t stored_hash = in.u64("architecture hash");
  if (stored_hash != architecture_hash(ckpt.architecture)) {
    throw IoError("checkpoint " + path.string() + " architecture hash does not match its header");
  }
  if (expected && architecture_hash(*expected) != stored_hash) {
    throw ShapeError("checkpoint " + path.string() + " was built for '" +
                     ckpt.architecture.name + "' with input " +
                     shape_string(ckpt.architecture.input_shape()) + ", expected '" +
                     expected->name + "' with input " + shape_string(expected->input_shape()));
  }

  const std::uint32_t count = in.u32("tensor count");
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t rank = in.u32("tensor rank");
    if (rank == 0 || rank > 8) throw IoError("checkpoint tensor with invalid rank");
    Shape shape(rank);
    std::uint64_t elements = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      shape[a] = in.u32("tensor extent");
      elements *= shape[a];
      if (shape[a] == 0 || elements > bytes.size()) {
        throw IoError("checkpoint " + path.string() + " has a corrupt tensor shape");
      }
    }
    const char* raw = in.take(elements * 4, "tensor data");
    std::vector<float> data(elements);
    for (std::uint64_t k = 0; k < elements; ++k) {
      const auto* p = reinterpret_cast<const unsigned char*>(raw + 4 * k);
      const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                                 static_cast<std::uint32_t>(p[1]) << 8 |
                                 static_cast<std::uint32_t>(p[2]) << 16 |
                                 static_cast<std::uint32_t>(p[3]) << 24;
      data[k] = std::bit_cast<float>(bits);
    }
    ckpt.tensors.emplace_back(std::move(shape), std::move(data));
  }
  if (std::memcmp(in.take(sizeof kTrailer, "trailer"), kTrailer, sizeof kTrailer) != 0) {
    throw IoError("checkpoint " + path.string() + " has a corrupt trailer");
  }
  if (!in.at_end()) throw IoError("checkpoint " + path.string() + " has trailing bytes");
  // Validates tensor shapes against the architecture.
  restore_network(ckpt);
  return ckpt;
}

std::vector<std::string> checkpoint_classes(const Checkpoint& checkpoint) {
  std::vector<std::string> out;
  auto it = checkpoint.metadata.find("classes");
  if (it == checkpoint.metadata.end()) return out;
  std::istringstream list(it->second);
  for (std::string name; std::getline(list, name, ',');) out.push_back(name);
  return out;
}

}  // namespace pvfault
