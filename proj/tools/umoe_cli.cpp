// Copyright 2026 The UMoE Fusion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// umoe: generate synthetic proposal datasets, compute validation statistics,
// train and evaluate uncertainty-encoded fusion.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 invalid configuration,
// 3 I/O failure or missing split, 4 non-finite loss, 5 checkpoint mismatch.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "umoe/experiment.hpp"
#include "umoe/io.hpp"

namespace {

using umoe::experiment::ExperimentConfig;

enum Exit { kOk = 0, kFailure = 1, kBadConfig = 2, kIo = 3, kNanLoss = 4, kCheckpoint = 5 };

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<std::string>> profiles;
  std::optional<std::vector<std::string>> train_profiles;
  std::optional<std::string> out;
  std::optional<std::string> data;
  std::optional<std::string> stats;
  std::optional<std::string> checkpoint;
  std::optional<std::string> split;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> frames;
  std::optional<std::size_t> train_frames;
  std::optional<std::size_t> test_frames;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> runs;
  std::optional<double> nms;
  std::optional<std::string> aggregation;
  bool baseline = false;
  bool no_dr = false;
  bool no_reg = false;
  bool no_moe = false;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file; flags override its values");
  cmd->add_option("--seed", f.seed, "Seed for every random stream");
  cmd->add_option("--profile", f.profiles, "Degradation profile(s)")->delimiter(',');
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--data", f.data, "Dataset root (<data>/<profile>/<split>.jsonl)");
  cmd->add_option("--threads", f.threads, "Worker threads");
}

void add_fusion(CLI::App* cmd, Flags& f) {
  cmd->add_flag("--baseline", f.baseline, "Uncertainty-regardless fusion baseline");
  cmd->add_flag("--no-dr", f.no_dr, "Drop the deviation-ratio channel");
  cmd->add_flag("--no-reg", f.no_reg, "Drop the regression-uncertainty channel");
  cmd->add_flag("--no-moe", f.no_moe, "Feed uncertainty channels straight to the fusion head");
  cmd->add_option("--epochs", f.epochs, "Training epochs");
  cmd->add_option("--nms", f.nms, "NMS IoU threshold");
  cmd->add_option("--aggregation", f.aggregation, "Pair pooling: max, mean or sum");
}

ExperimentConfig build_config(const Flags& f) {
  ExperimentConfig cfg;
  if (!f.config.empty()) {
    nlohmann::json j;
    try {
      j = umoe::io::read_json(f.config);
    } catch (const umoe::io::IoError& e) {
      if (e.kind() == umoe::io::IoError::Kind::kParse) throw umoe::experiment::ConfigError(e.what());
      throw;
    }
    cfg = ExperimentConfig::from_json(j);
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.profiles) cfg.profiles = *f.profiles;
  if (f.train_profiles) cfg.train_profiles = *f.train_profiles;
  if (f.out) cfg.out_dir = *f.out;
  if (f.data) cfg.data_dir = *f.data;
  if (f.stats) cfg.stats_path = *f.stats;
  if (f.checkpoint) cfg.checkpoint_path = *f.checkpoint;
  if (f.split) cfg.split = *f.split;
  if (f.threads) cfg.threads = *f.threads;
  if (f.frames) cfg.n_frames = *f.frames;
  if (f.train_frames) cfg.train_frames = *f.train_frames;
  if (f.test_frames) cfg.test_frames = *f.test_frames;
  if (f.runs) cfg.runs = *f.runs;
  if (f.epochs) cfg.fusion.epochs = *f.epochs;
  if (f.nms) cfg.fusion.nms_threshold = *f.nms;
  if (f.aggregation) {
    try {
      cfg.fusion.aggregation = umoe::fusion::aggregation_from_string(*f.aggregation);
    } catch (const umoe::fusion::FusionError& e) {
      throw umoe::experiment::ConfigError(e.what());
    }
  }
  if (f.baseline) cfg.fusion.baseline = true;
  if (f.no_dr) cfg.fusion.use_dr = false;
  if (f.no_reg) cfg.fusion.use_reg = false;
  if (f.no_moe) cfg.fusion.use_moe = false;
  cfg.fusion.seed = cfg.seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty-encoded camera-LiDAR proposal fusion"};
  app.require_subcommand(1);
  Flags f;

  auto* gen = app.add_subcommand("gen", "Generate train/val/test JSONL splits per profile");
  add_common(gen, f);
  gen->add_option("--frames", f.frames, "Frames per profile");

  auto* stats = app.add_subcommand("stats", "Validation statistics and population table");
  add_common(stats, f);

  auto* train = app.add_subcommand("train", "Train fusion on the profiles' train splits");
  add_common(train, f);
  add_fusion(train, f);
  train->add_option("--stats", f.stats, "stats.json (default <out>/stats.json)");
  train->add_option("--checkpoint", f.checkpoint, "Checkpoint output path");

  auto* ev = app.add_subcommand("eval", "AP of a checkpoint on the profiles' splits");
  add_common(ev, f);
  add_fusion(ev, f);
  ev->add_option("--stats", f.stats, "stats.json (default <out>/stats.json)");
  ev->add_option("--checkpoint", f.checkpoint, "Checkpoint to evaluate");
  ev->add_option("--split", f.split, "train, val or test");

  CLI::App* multi[2] = {app.add_subcommand("compare", "Fusion vs baseline over seeds, paired t-test"),
                        app.add_subcommand("ablate", "Channel and MoE ablations over seeds")};
  for (auto* cmd : multi) {
    add_common(cmd, f);
    add_fusion(cmd, f);
    cmd->add_option("--train-profile", f.train_profiles, "Profiles pooled for training")->delimiter(',');
    cmd->add_option("--train-frames", f.train_frames, "Mixed training frames per seed");
    cmd->add_option("--test-frames", f.test_frames, "Held-out frames per profile");
    cmd->add_option("--runs", f.runs, "Number of seeds");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadConfig;
  }

  try {
    const ExperimentConfig cfg = build_config(f);
    cfg.validate();
    if (gen->parsed()) umoe::experiment::cmd_gen(cfg, std::cout, std::cerr);
    if (stats->parsed()) umoe::experiment::cmd_stats(cfg, std::cout, std::cerr);
    if (train->parsed()) umoe::experiment::cmd_train(cfg, std::cout, std::cerr);
    if (ev->parsed()) umoe::experiment::cmd_eval(cfg, std::cout, std::cerr);
    if (multi[0]->parsed()) umoe::experiment::cmd_compare(cfg, std::cout, std::cerr);
    if (multi[1]->parsed()) umoe::experiment::cmd_ablate(cfg, std::cout, std::cerr);
  } catch (const umoe::experiment::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kBadConfig;
  } catch (const umoe::experiment::MissingInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const umoe::io::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const umoe::fusion::FusionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case umoe::fusion::FusionError::Kind::kNonFiniteLoss: return kNanLoss;
      case umoe::fusion::FusionError::Kind::kBadCheckpoint: return kCheckpoint;
      case umoe::fusion::FusionError::Kind::kBadConfig: return kBadConfig;
      default: return kFailure;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
