#include "pvfault/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pvfault/checkpoint.hpp"
#include "pvfault/optimizer.hpp"

namespace pvfault {

namespace fs = std::filesystem;

std::string_view to_string(DecayMode mode) {
  return mode == DecayMode::weight_decay ? "weight_decay" : "lr_decay";
}

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::base: return "base";
    case Variant::batchnorm: return "batchnorm";
    case Variant::dropout25: return "dropout25";
    case Variant::batchnorm_dropout25: return "batchnorm+dropout25";
  }
  return "?";
}

DecayMode parse_decay_mode(std::string_view text) {
  if (text == "weight_decay") return DecayMode::weight_decay;
  if (text == "lr_decay") return DecayMode::lr_decay;
  throw ConfigError("unknown decay mode '" + std::string(text) + "'");
}

Variant parse_variant(std::string_view text) {
  for (Variant v : {Variant::base, Variant::batchnorm, Variant::dropout25,
                    Variant::batchnorm_dropout25}) {
    if (to_string(v) == text) return v;
  }
  throw ConfigError("unknown variant '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(decay >= 0.0)) throw ConfigError("decay must be non-negative");
  if (!architecture && input_side < kMinInputSide) {
    throw ConfigError("input side " + std::to_string(input_side) + " is below the minimum " +
                      std::to_string(kMinInputSide));
  }
}

ArchitectureConfig architecture_for(const TrainConfig& config) {
  ArchitectureConfig arch = config.architecture ? *config.architecture
                                                : build_pvfaultnet(config.input_side);
  if (config.variant == Variant::batchnorm || config.variant == Variant::batchnorm_dropout25) {
    arch = with_batchnorm(arch);
  }
  if (config.variant == Variant::dropout25 || config.variant == Variant::batchnorm_dropout25) {
    arch = with_dropout(arch, 0.25);
  }
  return arch;
}

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string environment_note() {
  std::string note = "cpu single-thread";
#if defined(__VERSION__)
  note += ", compiler ";
  note += __VERSION__;
#endif
  return note;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void append_line(const fs::path& path, const std::string& line) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << line << "\n";
}

}  // namespace

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream out;
  out << "epochs=" << c.epochs << "\n"
      << "batch_size=" << c.batch_size << "\n"
      << "learning_rate=" << exact(c.learning_rate) << "\n"
      << "optimizer=sgd_momentum\n"
      << "momentum=" << exact(c.momentum) << "\n"
      << "decay=" << exact(c.decay) << "\n"
      << "decay_mode=" << to_string(c.decay_mode) << "\n"
      << "seed=" << c.seed << "\n"
      << "variant=" << to_string(c.variant) << "\n"
      << "input_side=" << c.input_side << "\n"
      << "normalization=" << to_string(c.normalization) << "\n"
      << "checkpoint_every=" << c.checkpoint_every << "\n"
      << "loss=softmax_cross_entropy\n"
      << "init=he_normal\n";
  out << "milestones=";
  for (std::size_t i = 0; i < c.milestones.size(); ++i) {
    out << (i ? "," : "") << c.milestones[i];
  }
  out << "\n";
  return out.str();
}

std::map<std::string, std::string> run_metadata(const TrainConfig& config,
                                                const DatasetManifest& manifest) {
  std::string classes;
  for (std::size_t i = 0; i < manifest.class_names.size(); ++i) {
    classes += (i ? "," : "") + manifest.class_names[i];
  }
  return {
      {"classes", classes},
      {"seed", std::to_string(config.seed)},
      {"decay", exact(config.decay)},
      {"decay_mode", std::string(to_string(config.decay_mode))},
      {"momentum", exact(config.momentum)},
      {"learning_rate", exact(config.learning_rate)},
      {"variant", std::string(to_string(config.variant))},
      {"normalization", std::string(to_string(config.normalization))},
      {"resize", "bilinear"},
      {"init", "he_normal"},
      {"loss", "softmax_cross_entropy"},
  };
}

Normalization checkpoint_normalization(const Checkpoint& checkpoint) {
  const auto it = checkpoint.metadata.find("normalization");
  return it == checkpoint.metadata.end() ? Normalization::unit : parse_normalization(it->second);
}

EpochReport evaluate(const Network& network, ImageCache& cache, Split split,
                     std::size_t batch_size) {
  EpochReport report;
  const std::vector<std::size_t> members = cache.manifest().indices(split);
  for (std::size_t start = 0; start < members.size(); start += batch_size) {
    const std::size_t end = std::min(members.size(), start + batch_size);
    const std::span<const std::size_t> chunk(members.data() + start, end - start);
    const Batch batch = make_batch(cache, chunk);
    const ForwardCache<float> fc = network.infer(batch.images);
    const Tensor& logits = fc.logits();
    const std::size_t classes = logits.dim(1);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const std::size_t predicted = argmax(logits.data().subspan(b * classes, classes));
      report.valid.update(batch.labels[b], predicted);
    }
  }
  return report;
}

EpochReport evaluate(const fs::path& checkpoint, const DatasetManifest& manifest,
                     const fs::path& data_root, Split split,
                     const std::optional<ArchitectureConfig>& expected) {
  const Checkpoint ckpt = checkpoint_load(checkpoint, expected);
  const std::vector<std::string> classes = checkpoint_classes(ckpt);
  if (!classes.empty() && classes != manifest.class_names) {
    throw ConfigError("checkpoint classes do not match the dataset's class folders");
  }
  const Network network = restore_network(ckpt);
  const Shape in = network.config().input_shape();
  if (in[1] != in[2]) throw ShapeError("evaluation expects a square network input");
  ImageCache cache(manifest, data_root, in[1], checkpoint_normalization(ckpt));
  return evaluate(network, cache, split);
}

TrainResult train(const TrainConfig& config, const DatasetManifest& manifest,
                  const fs::path& data_root, const TrainOptions& options) {
  config.validate();
  const std::vector<std::size_t> train_idx = manifest.indices(Split::train);
  if (train_idx.empty()) throw ConfigError("manifest has no training samples");
  if (manifest.indices(Split::valid).empty()) {
    throw ConfigError("manifest has no validation samples");
  }

  const ArchitectureConfig arch = architecture_for(config);
  Network network(arch);
  if (network.num_classes() != manifest.class_names.size()) {
    throw ConfigError("network has " + std::to_string(network.num_classes()) +
                      " outputs but the dataset has " +
                      std::to_string(manifest.class_names.size()) + " classes");
  }
  const Shape in = arch.input_shape();
  if (in[0] != 3 || in[1] != in[2]) {
    throw ConfigError("training expects a square 3-channel input, got " + shape_string(in));
  }
  network.initialize(config.seed);

  SgdMomentum optimizer(config.learning_rate, config.momentum,
                        config.decay_mode == DecayMode::weight_decay ? config.decay : 0.0);
  ImageCache cache(manifest, data_root, in[1], config.normalization);
  Rng dropout_rng{config.seed, 0xd209ull};
  const auto metadata = run_metadata(config, manifest);

  TrainResult result{RunRecord{config, arch, {}, {}, environment_note()}, network};
  const std::optional<fs::path>& dir = options.run_dir;
  if (dir) {
    fs::create_directories(*dir / "checkpoints");
    write_text(*dir / "config.txt", format_train_config(config));
    write_text(*dir / "architecture.txt", format_architecture(arch));
    write_manifest(manifest, *dir / kManifestFileName);
    write_text(*dir / "metrics.log", "");
    write_text(*dir / "metrics.csv", std::string(kCsvHeader) + "\n");
    write_text(*dir / "summary.txt", "");
    write_text(*dir / "environment.txt", result.record.environment + "\n");
  }

  std::vector<Tensor> last_good;
  for (const Tensor* p : network.parameters()) last_good.push_back(*p);
  std::vector<Tensor> last_good_buffers;
  for (const Tensor* b : network.buffers()) last_good_buffers.push_back(*b);

  // Saves the parameters from the end of the previous epoch and aborts.
  auto diverged = [&](std::size_t epoch) {
    if (dir) {
      Network snapshot(arch);
      auto params = snapshot.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) *params[i] = last_good[i];
      auto bufs = snapshot.buffers();
      for (std::size_t i = 0; i < bufs.size(); ++i) *bufs[i] = last_good_buffers[i];
      checkpoint_save(make_checkpoint(snapshot, metadata), *dir / "last_good.ckpt");
    }
    throw DivergenceError("loss became non-finite in epoch " + std::to_string(epoch) +
                          "; last good parameters are from epoch " + std::to_string(epoch - 1));
  };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (config.decay_mode == DecayMode::lr_decay) {
      optimizer.set_learning_rate(config.learning_rate /
                                  (1.0 + config.decay * static_cast<double>(epoch - 1)));
    }
    double loss_sum = 0.0;
    EpochReport report;
    report.epoch = epoch;
    for (const auto& idx : epoch_batches(train_idx, config.batch_size, config.seed, epoch)) {
      const Batch batch = make_batch(cache, idx);
      BatchGradients<float> grads;
      try {
        const ForwardCache<float> fc =
            network.forward(batch.images, Mode::training, &dropout_rng);
        grads = network.backward(fc, batch.labels);
        if (!std::isfinite(grads.loss)) throw DivergenceError("non-finite loss");
      } catch (const DivergenceError&) {
        diverged(epoch);
      }
      loss_sum += static_cast<double>(grads.loss) * static_cast<double>(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b) {
        report.train_correct += grads.predictions[b] == batch.labels[b];
      }
      report.train_total += idx.size();
      const auto params = network.parameters();
      optimizer.step(params, grads.grads);
    }
    report.train_loss = loss_sum / static_cast<double>(report.train_total);
    const EpochReport valid = evaluate(network, cache, Split::valid, config.batch_size);
    report.valid = valid.valid;
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    last_good.clear();
    for (const Tensor* p : network.parameters()) last_good.push_back(*p);
    last_good_buffers.clear();
    for (const Tensor* b : network.buffers()) last_good_buffers.push_back(*b);

    if (dir) {
      append_line(*dir / "metrics.log", serialize_report(report));
      append_line(*dir / "metrics.csv", csv_row(report));
      // Milestone epochs, plus the last epoch so every run has a summary.
      if (epoch == config.epochs ||
          std::find(config.milestones.begin(), config.milestones.end(), epoch) !=
              config.milestones.end()) {
        std::ofstream(*dir / "summary.txt", std::ios::app) << summary_table(report) << "\n";
      }
      if (config.checkpoint_every && epoch % config.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", epoch);
        checkpoint_save(make_checkpoint(network, metadata), *dir / "checkpoints" / name);
      }
    }
    result.record.epochs.push_back(report);
    if (options.on_epoch) options.on_epoch(report);
  }

  if (dir) {
    result.record.checkpoint = *dir / "final.ckpt";
    checkpoint_save(make_checkpoint(network, metadata), result.record.checkpoint);
  }
  result.network = std::move(network);
  return result;
}

}  // namespace pvfault
