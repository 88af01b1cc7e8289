#pragma once

// Checkpoint container:
//
//   magic        8 bytes  "PVFNCKPT"
//   version      u32      1
//   header_len   u32      length of the header text in bytes
//   header       UTF-8    "key=value" lines, then a line "[architecture]"
//                         followed by the architecture text form
//   arch_hash    u64      architecture_hash() of the embedded architecture
//   count        u32      number of tensors
//   per tensor:  u32 rank, u32 extents[rank], f32 data[product(extents)]
//   trailer      8 bytes  "PVFNEND\0"
//
// All integers and floats are little-endian. Tensors appear in declaration
// order: every learnable parameter, then the batchnorm running statistics.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pvfault/architecture.hpp"
#include "pvfault/network.hpp"

namespace pvfault {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ArchitectureConfig architecture;
  /// Free-form metadata: classes, seed, precision, normalization, ...
  std::map<std::string, std::string> metadata;
  std::vector<Tensor> tensors;
};

/// Snapshot of a network plus metadata. Adds "precision=float32",
/// batchnorm settings and the architecture hash to the metadata.
Checkpoint make_checkpoint(const Network& network, std::map<std::string, std::string> metadata);

/// Rebuilds the network; throws IoError if the tensor list does not fit.
Network restore_network(const Checkpoint& checkpoint);

void checkpoint_save(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Reads a checkpoint. When `expected` is given, refuses a checkpoint whose
/// architecture hash differs, naming both input shapes in the diagnostic.
/// Any truncation or corruption raises IoError; nothing partial is returned.
Checkpoint checkpoint_load(const std::filesystem::path& path,
                           const std::optional<ArchitectureConfig>& expected = std::nullopt);

/// Comma-separated class names stored under "classes".
std::vector<std::string> checkpoint_classes(const Checkpoint& checkpoint);

}  // namespace pvfault
