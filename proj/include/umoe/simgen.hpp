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

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "umoe/frame.hpp"
#include "umoe/uncertainty.hpp"

namespace umoe::simgen {

class SimError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// How a scenario perturbs one virtual detector. Rates are absolute; the
/// remaining fields are multipliers (1 = unchanged) or additive logit shifts.
struct ModalityDegradation {
  double miss_rate = 0.0;
  double fp_rate_per_frame = 0.0;
  double tp_noise_scale = 1.0;
  double sample_spread_scale = 1.0;
  double confidence_bias = 0.0;
  double fp_confidence_boost = 0.0;
  /// Extra background/other-class ambiguity of false positives (logit shift).
  double fp_ambiguity = 0.0;
  /// Probability of firing on each clutter object in the scene.
  double clutter_response = 0.0;
};

struct DegradationProfile {
  std::string name;
  ModalityDegradation lidar;
  ModalityDegradation camera;

  const ModalityDegradation& of(Modality m) const { return m == Modality::kLidar ? lidar : camera; }
  /// Throws SimError on out-of-range values.
  void validate() const;
};

/// clear, blind, adversarial, fog, snow. The parameter values are surrogates
/// tuned for proposal-level statistics, not derived from image-space attacks.
std::vector<DegradationProfile> default_profiles();
std::vector<std::string> profile_names();
/// Throws SimError naming the valid profiles.
DegradationProfile profile_by_name(std::string_view name);

struct SimConfig {
  std::size_t num_samples = 10;
  std::size_t num_classes = 3;  // car, other, background
  std::size_t min_objects = 1;
  std::size_t max_objects = 8;
  double min_range = 5.0;
  double max_range = 70.0;
  double max_lateral = 30.0;
  double min_separation = 5.0;
  /// Mean number of car-sized clutter objects per frame (Poisson).
  double clutter_rate = 2.0;
  /// Fraction of the horizontal half field of view objects are placed in.
  double fov_fill = 0.8;
  /// Range at which detector noise has doubled (noise grows linearly with range).
  double noise_range = 40.0;

  double focal = 720.0;
  double image_width = 1242.0;
  double image_height = 375.0;
  double principal_u = 621.0;
  double principal_v = 187.0;
  std::array<double, 3> camera_offset{0.0, -0.08, 0.27};
  double ground_z = -1.73;

  std::uint64_t frame_id_offset = 0;
};

Frame generate_frame(std::uint64_t seed, const DegradationProfile& profile, std::uint64_t frame_id,
                     const SimConfig& cfg = {});

/// Deterministic under (seed, profile, n_frames, cfg); each frame draws from
/// its own (seed, frame_id, stream) generators, so output does not depend on
/// `threads`. Scenes depend only on (seed, frame_id): two profiles generated
/// with one seed share ground truth.
std::vector<Frame> generate_dataset(std::uint64_t seed, const DegradationProfile& profile,
                                    std::size_t n_frames, const SimConfig& cfg = {},
                                    std::size_t threads = 1);

struct Split {
  std::vector<Frame> train;
  std::vector<Frame> val;
  std::vector<Frame> test;
};

/// 70/15/15 split by frame index after a seeded shuffle.
Split split_dataset(std::vector<Frame> frames, std::uint64_t seed);

struct PopulationCell {
  std::size_t count = 0;
  double mean_u_cls = 0.0;
  double mean_dr_cls = 0.0;
  double mean_u_reg = 0.0;
  double mean_u_reg_raw = 0.0;
};

struct PopulationTable {
  /// Indexed [modality][tp = 0, fp = 1]; absent when no proposal fell in the cell.
  std::array<std::array<std::optional<PopulationCell>, 2>, 2> cells;

  const std::optional<PopulationCell>& at(Modality m, bool true_positive) const {
    return cells[m == Modality::kLidar ? 0 : 1][true_positive ? 0 : 1];
  }
};

/// TP/FP means of the uncertainty scores, split with the validation-stats matcher.
PopulationTable population_stats(std::span<const Frame> frames,
                                 const uncertainty::ValidationStats& stats,
                                 const uncertainty::ScoringConfig& scoring = {},
                                 const uncertainty::TpThresholds& thresholds = {});

}  // namespace umoe::simgen
