#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pvfault/architecture.hpp"
#include "pvfault/checkpoint.hpp"
#include "pvfault/dataset.hpp"
#include "pvfault/metrics.hpp"
#include "pvfault/network.hpp"

namespace pvfault {

enum class DecayMode { weight_decay, lr_decay };
enum class Variant { base, batchnorm, dropout25, batchnorm_dropout25 };

std::string_view to_string(DecayMode mode);
std::string_view to_string(Variant variant);
DecayMode parse_decay_mode(std::string_view text);
Variant parse_variant(std::string_view text);

/// Defaults: 50 epochs, batch 32, SGD with momentum 0.9, learning rate
/// 0.02, decay 0.01 applied as L2 weight decay.
struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double decay = 0.01;
  /// lr_decay scales the rate by 1 / (1 + decay * (epoch - 1)) instead.
  DecayMode decay_mode = DecayMode::weight_decay;
  std::uint64_t seed = 1;
  Variant variant = Variant::base;
  std::size_t input_side = 224;
  /// Pixel scaling; centered keeps the default learning rate stable.
  Normalization normalization = Normalization::centered;
  /// Write a checkpoint every N epochs; 0 writes only the final one.
  std::size_t checkpoint_every = 0;
  /// Epochs whose summary table goes into summary.txt.
  std::vector<std::size_t> milestones = {5, 15, 35, 50};
  /// Replaces the PV-faultNet build (variant toggles still apply).
  std::optional<ArchitectureConfig> architecture;

  void validate() const;
};

/// PV-faultNet at config.input_side (or the override) with the variant's
/// batchnorm/dropout layers inserted.
ArchitectureConfig architecture_for(const TrainConfig& config);

/// "key=value" lines echoing every field.
std::string format_train_config(const TrainConfig& config);

struct RunRecord {
  TrainConfig config;
  ArchitectureConfig architecture;
  std::vector<EpochReport> epochs;
  std::filesystem::path checkpoint;
  std::string environment;
};

struct TrainResult {
  RunRecord record;
  Network network;
};

struct TrainOptions {
  /// When set, receives config.txt, architecture.txt, manifest.jsonl,
  /// metrics.log, metrics.csv, summary.txt, checkpoints/ and final.ckpt.
  std::optional<std::filesystem::path> run_dir;
  std::function<void(const EpochReport&)> on_epoch;
};

/// Epoch loop: shuffled training pass with one optimizer step per batch,
/// then an inference-mode pass over the validation split. Deterministic for
/// a fixed seed. A non-finite loss raises DivergenceError after writing
/// last_good.ckpt (the parameters at the end of the previous epoch).
TrainResult train(const TrainConfig& config, const DatasetManifest& manifest,
                  const std::filesystem::path& data_root, const TrainOptions& options = {});

/// Inference-mode pass over `split`; only `valid` and `epoch` are filled.
/// An empty split yields an all-zero report.
EpochReport evaluate(const Network& network, ImageCache& cache, Split split,
                     std::size_t batch_size = 32);

/// Loads a checkpoint (refusing one whose architecture differs from
/// `expected` when given) and evaluates it.
EpochReport evaluate(const std::filesystem::path& checkpoint, const DatasetManifest& manifest,
                     const std::filesystem::path& data_root, Split split,
                     const std::optional<ArchitectureConfig>& expected = std::nullopt);

/// Normalization recorded in a checkpoint; unit when absent.
Normalization checkpoint_normalization(const Checkpoint& checkpoint);

/// Metadata recorded in every checkpoint of a run.
std::map<std::string, std::string> run_metadata(const TrainConfig& config,
                                                const DatasetManifest& manifest);

}  // namespace pvfault
