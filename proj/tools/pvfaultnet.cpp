// pvfaultnet: dataset augmentation, training, evaluation, prediction,
// parameter audit and synthetic data generation.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pvfault/architecture.hpp"
#include "pvfault/augment.hpp"
#include "pvfault/checkpoint.hpp"
#include "pvfault/dataset.hpp"
#include "pvfault/error.hpp"
#include "pvfault/image.hpp"
#include "pvfault/kernels.hpp"
#include "pvfault/metrics.hpp"
#include "pvfault/synth.hpp"
#include "pvfault/trainer.hpp"

namespace fs = std::filesystem;
using namespace pvfault;

namespace {

constexpr int kExitError = 1;
constexpr int kExitDiverged = 3;

// Output is built in "<target>.partial" and renamed into place on success;
// the staging directory is removed otherwise.
class StagedDir {
 public:
  explicit StagedDir(fs::path target) : target_(std::move(target)) {
    if (fs::exists(target_)) throw IoError("output " + target_.string() + " already exists");
    staging_ = target_;
    staging_ += ".partial";
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  const fs::path& path() const { return staging_; }

  void commit() {
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

void write_echo(const CLI::App& cmd, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "# pvfaultnet " << cmd.get_name() << "\n[" << cmd.get_name() << "]\n"
      << cmd.config_to_str(true, false);
}

void echo_to_stderr(const CLI::App& cmd) {
  std::istringstream lines(cmd.config_to_str(true, false));
  for (std::string line; std::getline(lines, line);) std::cerr << "# " << line << "\n";
}

void warn(const std::string& message) { std::cerr << "warning: " << message << "\n"; }

DatasetManifest prepared_split(const DatasetManifest& manifest, std::size_t valid_count,
                               std::uint64_t seed, bool originals_only) {
  if (manifest.count(Split::train) > 0 && manifest.count(Split::valid) > 0) return manifest;
  DatasetManifest split = split_train_valid(manifest, valid_count, seed, originals_only);
  if (!originals_only) return split;
  if (const std::size_t n = exclude_validation_copies(split)) {
    warn(std::to_string(n) + " augmented copies of validation images left out of training");
  }
  return split;
}

// --- augment -------------------------------------------------------------

struct AugmentArgs {
  std::string root;
  std::string out;
  std::uint64_t seed = 1;
  std::vector<std::string> targets;
};

int run_augment(const CLI::App& cmd, const AugmentArgs& args) {
  const DatasetManifest before = load_dataset(args.root, warn);
  AugmentationSpec spec = default_augmentation_spec(args.seed);
  if (!args.targets.empty()) {
    spec.targets.clear();
    for (const std::string& t : args.targets) {
      const std::size_t eq = t.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw ConfigError("target '" + t + "' is not of the form class=count");
      }
      try {
        spec.targets[t.substr(0, eq)] = std::stoul(t.substr(eq + 1));
      } catch (const std::exception&) {
        throw ConfigError("target '" + t + "' has an invalid count");
      }
    }
  }
  StagedDir staged(args.out);
  const DatasetManifest after = expand_directory(before, spec, args.root, staged.path());
  write_echo(cmd, staged.path() / "augment_config.ini");
  staged.commit();

  const std::vector<std::size_t> n0 = before.class_counts();
  const std::vector<std::size_t> n1 = after.class_counts();
  std::printf("%-16s %10s %10s\n", "Class", "Original", "Augmented");
  std::size_t t0 = 0;
  std::size_t t1 = 0;
  for (std::size_t c = 0; c < after.class_names.size(); ++c) {
    std::printf("%-16s %10zu %10zu\n", after.class_names[c].c_str(), n0[c], n1[c]);
    t0 += n0[c];
    t1 += n1[c];
  }
  std::printf("%-16s %10zu %10zu\n", "Total", t0, t1);
  return 0;
}

// --- train ---------------------------------------------------------------

struct TrainArgs {
  std::string root;
  std::string out = "pvfault-run";
  std::string decay_mode = "weight_decay";
  std::string variant = "base";
  std::string normalization = "centered";
  std::string architecture;
  std::size_t valid_count = 48;
  bool valid_originals_only = false;
  bool dry_run = false;
  TrainConfig config;
};

TrainConfig resolve(const TrainArgs& args) {
  TrainConfig config = args.config;
  config.decay_mode = parse_decay_mode(args.decay_mode);
  config.variant = parse_variant(args.variant);
  config.normalization = parse_normalization(args.normalization);
  if (!args.architecture.empty()) {
    std::ifstream in(args.architecture);
    if (!in) throw IoError("cannot read architecture file " + args.architecture);
    std::stringstream text;
    text << in.rdbuf();
    config.architecture = parse_architecture(text.str());
  }
  config.validate();
  return config;
}

int run_train(const CLI::App& cmd, const TrainArgs& args) {
  const TrainConfig config = resolve(args);
  if (args.dry_run) {
    std::cout << format_train_config(config) << "valid_count=" << args.valid_count << "\n"
              << "valid_originals_only=" << (args.valid_originals_only ? "true" : "false") << "\n";
    return 0;
  }
  const DatasetManifest manifest =
      prepared_split(load_dataset(args.root, warn), args.valid_count, config.seed,
                     args.valid_originals_only);

  StagedDir staged(args.out);
  TrainOptions options;
  options.run_dir = staged.path();
  options.on_epoch = [&](const EpochReport& r) {
    std::printf("epoch %3zu/%zu  loss %.4f  train_acc %6.2f%%  valid_acc %6.2f%%  %.1fs\n",
                r.epoch, config.epochs, r.train_loss, 100.0 * r.train_accuracy().value,
                100.0 * r.valid_accuracy().value, r.seconds);
    std::fflush(stdout);
  };
  write_echo(cmd, staged.path() / "cli_config.ini");
  try {
    const TrainResult result = train(config, manifest, args.root, options);
    staged.commit();
    std::cout << summary_table(result.record.epochs.back());
    std::cout << "checkpoint: " << (fs::path(args.out) / "final.ckpt").string() << "\n";
  } catch (const DivergenceError&) {
    // Keep the run directory so last_good.ckpt survives.
    staged.commit();
    throw;
  }
  return 0;
}

// --- eval ----------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string root;
  std::string split = "all";
  std::size_t input_side = 0;
  std::string variant = "base";
};

int run_eval(const EvalArgs& args) {
  DatasetManifest manifest = load_dataset(args.root, warn);
  Split split = Split::valid;
  if (args.split == "all") {
    for (Sample& s : manifest.samples) s.split = Split::valid;
  } else if (args.split == "train") {
    split = Split::train;
  } else if (args.split != "valid") {
    throw ConfigError("unknown split '" + args.split + "'");
  }
  std::optional<ArchitectureConfig> expected;
  if (args.input_side) {
    TrainConfig c;
    c.input_side = args.input_side;
    c.variant = parse_variant(args.variant);
    expected = architecture_for(c);
  }
  const EpochReport report = evaluate(args.checkpoint, manifest, args.root, split, expected);
  std::cout << summary_table(report);
  return 0;
}

// --- predict -------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::vector<std::string> images;
};

int run_predict(const PredictArgs& args) {
  const Checkpoint ckpt = checkpoint_load(args.checkpoint);
  std::vector<std::string> classes = checkpoint_classes(ckpt);
  const Network network = restore_network(ckpt);
  if (classes.size() != network.num_classes()) {
    classes.clear();
    for (std::size_t c = 0; c < network.num_classes(); ++c) classes.push_back(std::to_string(c));
  }
  const Shape in = network.config().input_shape();
  const Normalization normalization = checkpoint_normalization(ckpt);
  for (const std::string& path : args.images) {
    const ImageBuffer image = resize_bilinear(read_image(path), in[2], in[1]);
    const std::vector<float> logits = network.logits(to_tensor(image, normalization));
    const std::vector<float> probs = softmax<float>(logits);
    const std::size_t best = argmax<float>(probs);
    std::printf("%s\t%s\t%.4f\n", path.c_str(), classes[best].c_str(), probs[best]);
  }
  return 0;
}

// --- audit-params --------------------------------------------------------

int run_audit(std::size_t side, const std::string& variant) {
  TrainConfig c;
  c.input_side = side;
  c.variant = parse_variant(variant);
  c.validate();
  const ArchitectureConfig arch = architecture_for(c);
  const ParameterAudit audit = count_parameters(arch);
  std::cout << format_audit(arch, audit) << "\n"
            << format_published_audit(audit_against_published(arch)) << "\n"
            << format_reference_comparison(audit.total);
  return 0;
}

// --- synth-data ----------------------------------------------------------

int run_synth(const CLI::App& cmd, const std::string& out, const SynthOptions& options) {
  StagedDir staged(out);
  const DatasetManifest manifest = write_synth_dataset(options, staged.path());
  write_echo(cmd, staged.path() / "synth_config.ini");
  staged.commit();
  const std::vector<std::size_t> counts = manifest.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    std::printf("%-16s %zu\n", manifest.class_names[c].c_str(), counts[c]);
  }
  return 0;
}

// CLI11 reads config files only at the top level; move "--config FILE"
// given after the subcommand name in front of it.
std::vector<std::string> hoist_config(int argc, char** argv) {
  std::vector<std::string> head, tail;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) {
      head.push_back(arg);
      head.push_back(argv[++i]);
    } else if (arg.rfind("--config=", 0) == 0) {
      head.push_back(arg);
    } else {
      tail.push_back(arg);
    }
  }
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PV-faultNet: compact CNN for solar cell defect classification"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  app.set_config("--config", "",
                 "INI/TOML file; options go under a [subcommand] section, command-line flags win");

  AugmentArgs aug;
  CLI::App* augment = app.add_subcommand("augment", "Expand a class-folder dataset to per-class targets");
  augment->add_option("--root", aug.root, "Dataset root with one folder per class")->required();
  augment->add_option("--out", aug.out, "Output directory (must not exist)")->required();
  augment->add_option("--seed", aug.seed, "Augmentation seed")->capture_default_str();
  augment->add_option("--target", aug.targets,
                      "Per-class total as class=count, repeatable (default defective=361 normal=177)");

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a network on a class-folder dataset");
  train_cmd->add_option("--root", tr.root, "Dataset root (class folders or manifest.jsonl)");
  train_cmd->add_option("--out", tr.out, "Run directory (must not exist)")->capture_default_str();
  train_cmd->add_option("--epochs", tr.config.epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--batch", tr.config.batch_size, "Batch size")->capture_default_str();
  train_cmd->add_option("--lr", tr.config.learning_rate, "SGD learning rate")->capture_default_str();
  train_cmd->add_option("--momentum", tr.config.momentum, "SGD momentum")->capture_default_str();
  train_cmd->add_option("--decay", tr.config.decay, "Decay rate")->capture_default_str();
  train_cmd->add_option("--decay-mode", tr.decay_mode,
                        "weight_decay (L2 on the gradient) or lr_decay (lr / (1 + decay*(epoch-1)))")
      ->check(CLI::IsMember({"weight_decay", "lr_decay"}))
      ->capture_default_str();
  train_cmd->add_option("--seed", tr.config.seed, "Seed for init, split, shuffling and dropout")
      ->capture_default_str();
  train_cmd->add_option("--input", tr.config.input_side, "Input side in pixels")
      ->capture_default_str();
  train_cmd->add_option("--variant", tr.variant, "Network variant")
      ->check(CLI::IsMember({"base", "batchnorm", "dropout25", "batchnorm+dropout25"}))
      ->capture_default_str();
  train_cmd->add_option("--normalize", tr.normalization,
                        "Pixel scaling: centered (v/255 - 0.5) or unit (v/255)")
      ->check(CLI::IsMember({"centered", "unit"}))
      ->capture_default_str();
  train_cmd->add_option("--valid-count", tr.valid_count,
                        "Validation images when the dataset has no split yet")
      ->capture_default_str();
  train_cmd->add_flag("--valid-originals-only", tr.valid_originals_only,
                      "Validate on original images only and keep augmented copies of them out "
                      "of training");
  train_cmd->add_option("--checkpoint-every", tr.config.checkpoint_every,
                        "Checkpoint cadence in epochs (0: final only)")
      ->capture_default_str();
  train_cmd->add_option("--milestones", tr.config.milestones,
                        "Epochs whose summary goes into summary.txt")
      ->capture_default_str();
  train_cmd->add_option("--architecture", tr.architecture, "Architecture text file to train instead");
  train_cmd->add_flag("--dry-run", tr.dry_run, "Print the resolved configuration and exit");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--root", ev.root, "Dataset root")->required();
  eval_cmd->add_option("--split", ev.split, "Samples to evaluate")
      ->check(CLI::IsMember({"all", "train", "valid"}))
      ->capture_default_str();
  eval_cmd->add_option("--input", ev.input_side,
                       "Expected input side; refuses checkpoints built for another");
  eval_cmd->add_option("--variant", ev.variant, "Expected variant, used with --input")
      ->check(CLI::IsMember({"base", "batchnorm", "dropout25", "batchnorm+dropout25"}))
      ->capture_default_str();

  PredictArgs pr;
  CLI::App* predict_cmd = app.add_subcommand("predict", "Classify images with a checkpoint");
  predict_cmd->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
  predict_cmd->add_option("images", pr.images, "PNG or JPEG files")->required();

  std::size_t audit_side = 224;
  std::string audit_variant = "base";
  CLI::App* audit_cmd = app.add_subcommand("audit-params", "Per-layer shape and parameter audit");
  audit_cmd->add_option("--input", audit_side, "Input side in pixels")->capture_default_str();
  audit_cmd->add_option("--variant", audit_variant, "Network variant")
      ->check(CLI::IsMember({"base", "batchnorm", "dropout25", "batchnorm+dropout25"}))
      ->capture_default_str();

  std::string synth_out;
  SynthOptions synth;
  CLI::App* synth_cmd = app.add_subcommand("synth-data", "Generate a synthetic two-class image set");
  synth_cmd->add_option("--out", synth_out, "Output directory (must not exist)")->required();
  synth_cmd->add_option("--per-class", synth.per_class, "Images per class")->capture_default_str();
  synth_cmd->add_option("--side", synth.side, "Image side in pixels")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();

  try {
    std::vector<std::string> args = hoist_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (augment->parsed()) return run_augment(*augment, aug);
    if (train_cmd->parsed()) {
      if (tr.root.empty() && !tr.dry_run) throw ConfigError("--root is required");
      return run_train(*train_cmd, tr);
    }
    if (eval_cmd->parsed()) {
      echo_to_stderr(*eval_cmd);
      return run_eval(ev);
    }
    if (predict_cmd->parsed()) {
      echo_to_stderr(*predict_cmd);
      return run_predict(pr);
    }
    if (audit_cmd->parsed()) {
      echo_to_stderr(*audit_cmd);
      return run_audit(audit_side, audit_variant);
    }
    if (synth_cmd->parsed()) return run_synth(*synth_cmd, synth_out, synth);
  } catch (const DivergenceError& e) {
    std::cerr << "pvfaultnet: training diverged: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "pvfaultnet: error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
