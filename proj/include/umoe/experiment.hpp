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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "umoe/eval.hpp"
#include "umoe/frame.hpp"
#include "umoe/fusion.hpp"
#include "umoe/simgen.hpp"
#include "umoe/uncertainty.hpp"

namespace umoe::experiment {

/// Invalid configuration (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A dataset split or artifact the command depends on is missing (exit code 3).
class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  /// Profiles a command generates, scores or evaluates.
  std::vector<std::string> profiles{"clear"};
  /// Profiles pooled into the mixed training set.
  std::vector<std::string> train_profiles{"clear", "blind", "fog"};
  /// Frames per profile written by `gen`.
  std::size_t n_frames = 500;
  /// In-memory experiments: total mixed training frames and held-out test frames per profile.
  std::size_t train_frames = 500;
  std::size_t test_frames = 300;
  std::size_t runs = 10;
  std::string split = "test";
  std::size_t threads = 1;

  fusion::FusionConfig fusion;
  simgen::SimConfig sim;
  uncertainty::ScoringConfig scoring;

  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "out";
  std::filesystem::path stats_path;       // default <out>/stats.json
  std::filesystem::path checkpoint_path;  // default <out>/<method>/checkpoint.json

  std::filesystem::path resolved_stats() const;
  std::filesystem::path resolved_checkpoint() const;

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are rejected. Throws ConfigError.
  static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Frame-id block reserved for a profile so that pooled datasets keep ids unique.
std::uint64_t profile_frame_offset(const std::string& profile, bool held_out);

/// Mixed training set, clear validation split, held-out test sets, and
/// validation statistics for one seed.
struct ExperimentData {
  std::vector<Frame> train;
  std::vector<Frame> val;
  std::map<std::string, std::vector<Frame>> test;
  uncertainty::ValidationStats stats;
};

ExperimentData build_experiment_data(const ExperimentConfig& cfg, std::uint64_t seed,
                                     const std::vector<std::string>& test_profiles);

struct MethodResult {
  std::string method;
  std::map<std::string, eval::ApResult> test_ap;
  fusion::TrainResult training;
};

MethodResult run_method(const ExperimentData& data, const fusion::FusionConfig& fusion_cfg,
                        const uncertainty::ScoringConfig& scoring, std::size_t threads);

// Commands. Each writes its artifacts below cfg.out_dir (gen: below
// cfg.data_dir), prints artifact paths on `out` and diagnostics on `err`.
void cmd_gen(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);
void cmd_stats(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);
void cmd_train(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);
void cmd_eval(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);
void cmd_compare(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);
void cmd_ablate(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err);

/// "profile,modality,outcome,count,mean_u_cls,mean_dr_cls,mean_u_reg,mean_u_reg_raw".
std::string population_csv(const std::map<std::string, simgen::PopulationTable>& tables);

double mean(const std::vector<double>& v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(const std::vector<double>& v);

}  // namespace umoe::experiment
