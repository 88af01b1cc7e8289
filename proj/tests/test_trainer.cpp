#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "pvfault/checkpoint.hpp"
#include "pvfault/error.hpp"
#include "pvfault/synth.hpp"
#include "pvfault/trainer.hpp"

using namespace pvfault;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Fixture {
  testing::TempDir dir{"trainer_data"};
  DatasetManifest manifest;
  Fixture() {
    SynthOptions o;
    o.per_class = 10;
    o.side = 32;
    o.seed = 2;
    manifest = split_train_valid(write_synth_dataset(o, dir.path()), 6, 1);
  }
};

TrainConfig small_config() {
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 4;
  c.input_side = 16;
  c.milestones = {2};
  return c;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("defaults") {
  const TrainConfig c;
  CHECK(c.epochs == 50);
  CHECK(c.batch_size == 32);
  CHECK(c.learning_rate == 0.02);
  CHECK(c.momentum == 0.9);
  CHECK(c.decay == 0.01);
  CHECK(c.decay_mode == DecayMode::weight_decay);
  CHECK(c.input_side == 224);
  CHECK(c.variant == Variant::base);
}

TEST_CASE("invalid configurations are rejected") {
  TrainConfig c = small_config();
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.input_side = 8;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_variant("dropout50"), ConfigError);
  CHECK(parse_variant("batchnorm+dropout25") == Variant::batchnorm_dropout25);
}

TEST_CASE("identical seeds give identical losses and checkpoints") {
  Fixture f;
  testing::TempDir runs("trainer_runs");
  TrainOptions a, b;
  a.run_dir = runs / "a";
  b.run_dir = runs / "b";
  const TrainResult ra = train(small_config(), f.manifest, f.dir.path(), a);
  const TrainResult rb = train(small_config(), f.manifest, f.dir.path(), b);
  REQUIRE(ra.record.epochs.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(ra.record.epochs[e].train_loss == rb.record.epochs[e].train_loss);
    CHECK(ra.record.epochs[e].valid == rb.record.epochs[e].valid);
  }
  CHECK(read_bytes(runs / "a/final.ckpt") == read_bytes(runs / "b/final.ckpt"));

  TrainConfig other = small_config();
  other.seed = 2;
  const TrainResult rc = train(other, f.manifest, f.dir.path());
  CHECK(rc.record.epochs[0].train_loss != ra.record.epochs[0].train_loss);
}

TEST_CASE("run directory contents") {
  Fixture f;
  testing::TempDir runs("trainer_rundir");
  TrainConfig c = small_config();
  c.checkpoint_every = 2;
  c.variant = Variant::batchnorm_dropout25;
  std::vector<std::size_t> seen;
  TrainOptions o;
  o.run_dir = runs / "r";
  o.on_epoch = [&](const EpochReport& r) { seen.push_back(r.epoch); };
  const TrainResult r = train(c, f.manifest, f.dir.path(), o);
  CHECK(seen == std::vector<std::size_t>{1, 2, 3});
  for (const char* name : {"config.txt", "architecture.txt", "manifest.jsonl", "metrics.log",
                           "metrics.csv", "summary.txt", "environment.txt", "final.ckpt",
                           "checkpoints/epoch_0002.ckpt"})
    CHECK_MESSAGE(fs::exists(runs / "r" / name), name);
  CHECK_FALSE(fs::exists(runs / "r/checkpoints/epoch_0001.ckpt"));

  // Milestone 2 and the final epoch 3.
  const std::string summary = read_bytes(runs / "r/summary.txt");
  CHECK(summary.find("Epoch 2:") != std::string::npos);
  CHECK(summary.find("Epoch 3:") != std::string::npos);
  CHECK(summary.find("Epoch 1:") == std::string::npos);

  std::ifstream log(runs / "r/metrics.log");
  std::vector<EpochReport> parsed;
  for (std::string line; std::getline(log, line);) parsed.push_back(parse_report(line));
  REQUIRE(parsed.size() == 3);
  CHECK(parsed[2].train_loss == r.record.epochs[2].train_loss);
  CHECK(parsed[2].valid == r.record.epochs[2].valid);
  CHECK(parsed[2].train_total == f.manifest.count(Split::train));

  const Checkpoint ckpt = checkpoint_load(runs / "r/final.ckpt", architecture_for(c));
  CHECK(ckpt.metadata.at("variant") == "batchnorm+dropout25");
  CHECK(ckpt.metadata.at("decay_mode") == "weight_decay");
  CHECK(ckpt.metadata.at("normalization") == "centered");
  CHECK(ckpt.metadata.at("classes") == "defective,normal");

  // Reloaded network evaluates exactly like the in-memory one.
  const EpochReport from_disk = evaluate(runs / "r/final.ckpt", f.manifest, f.dir.path(), Split::valid);
  CHECK(from_disk.valid == r.record.epochs.back().valid);
}

TEST_CASE("learning-rate decay mode trains differently and is recorded") {
  Fixture f;
  TrainConfig c = small_config();
  c.decay_mode = DecayMode::lr_decay;
  c.decay = 0.5;
  const TrainResult lr = train(c, f.manifest, f.dir.path());
  CHECK(format_train_config(c).find("decay_mode=lr_decay") != std::string::npos);
  // Epoch 1 runs at the undecayed rate with no weight penalty.
  c.decay_mode = DecayMode::weight_decay;
  c.decay = 0.0;
  const TrainResult plain = train(c, f.manifest, f.dir.path());
  CHECK(lr.record.epochs[0].train_loss == plain.record.epochs[0].train_loss);
  CHECK(lr.record.epochs[2].train_loss != plain.record.epochs[2].train_loss);
}

TEST_CASE("empty evaluation split yields a flagged zero report") {
  Fixture f;
  Network net(build_pvfaultnet(16));
  net.initialize(1);
  DatasetManifest m = f.manifest;
  for (Sample& s : m.samples) s.split = Split::train;
  ImageCache cache(m, f.dir.path(), 16);
  const EpochReport r = evaluate(net, cache, Split::valid);
  CHECK(r.valid.total() == 0);
  CHECK_FALSE(r.valid_accuracy().defined);
  CHECK_THROWS_AS(train(small_config(), m, f.dir.path()), ConfigError);
}

TEST_CASE("divergence aborts and keeps the last good checkpoint") {
  Fixture f;
  testing::TempDir runs("trainer_nan");
  TrainConfig c = small_config();
  c.learning_rate = 1e12;
  c.momentum = 0.0;
  TrainOptions o;
  o.run_dir = runs / "r";
  CHECK_THROWS_AS(train(c, f.manifest, f.dir.path(), o), DivergenceError);
  REQUIRE(fs::exists(runs / "r/last_good.ckpt"));
  const Network restored = restore_network(checkpoint_load(runs / "r/last_good.ckpt"));
  for (const Tensor* p : restored.parameters())
    for (float v : p->data()) CHECK(std::isfinite(v));
}

TEST_CASE("mismatched checkpoint is refused with both shapes") {
  Fixture f;
  testing::TempDir runs("trainer_mismatch");
  TrainConfig c = small_config();
  c.epochs = 1;
  TrainOptions o;
  o.run_dir = runs / "r";
  train(c, f.manifest, f.dir.path(), o);
  TrainConfig other = c;
  other.input_side = 32;
  CHECK_THROWS_AS(evaluate(runs / "r/final.ckpt", f.manifest, f.dir.path(), Split::valid,
                           architecture_for(other)),
                  ShapeError);
}

}  // TEST_SUITE
