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
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "umoe/frame.hpp"
#include "umoe/geometry.hpp"
#include "umoe/proposal.hpp"

namespace umoe::uncertainty {

class UncertaintyError : public std::runtime_error {
 public:
  enum class Kind { kMissingStats, kEmptyPopulation, kBadFormat };

  UncertaintyError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// True-positive statistics of one modality on the clear validation split.
struct ModalityStats {
  double mu_u = 0.0;
  double sigma_u = 0.0;
  double mu_s = 1.0;
  double sigma_s = 0.0;
  double mu_reg = 0.0;
  double sigma_reg = 1.0;
  std::size_t tp_count = 0;
  /// Set when no true positive was found and defaults were substituted.
  bool fallback = false;

  static ModalityStats defaults(std::size_t num_classes);
};

struct ValidationStats {
  static constexpr int kVersion = 1;

  std::optional<ModalityStats> lidar;
  std::optional<ModalityStats> camera;

  /// Throws UncertaintyError(kMissingStats) if the modality is absent.
  const ModalityStats& at(Modality m) const;
  std::optional<ModalityStats>& slot(Modality m) { return m == Modality::kLidar ? lidar : camera; }

  std::string to_json() const;
  static ValidationStats from_json(const std::string& text);
};

enum class DataVarianceMode { kDeterministic, kSampled };

struct ScoringConfig {
  DataVarianceMode data_variance_mode = DataVarianceMode::kDeterministic;
  std::size_t data_variance_samples = 1000;
  std::uint64_t seed = 0;
};

/// A proposal extended with its uncertainty scores; one UMoE input row.
struct ScoredProposal {
  Modality modality = Modality::kLidar;
  std::variant<geometry::Box3D, geometry::Box2D> mean_box;
  double s = 0.0;
  double u_cls = 0.0;
  double dr_cls = 1.0;
  double u_reg = 0.0;
  /// Regression uncertainty before standardization (diagonal-normalized for camera).
  double u_reg_raw = 0.0;
  std::size_t source_index = 0;

  const geometry::Box3D& box3d() const { return std::get<geometry::Box3D>(mean_box); }
  const geometry::Box2D& box2d() const { return std::get<geometry::Box2D>(mean_box); }
};

std::vector<double> mc_mean_probs(const McProposal& p);

/// Element-wise mean of the sample boxes; yaw (LiDAR index 6) uses the circular mean.
std::vector<double> mc_mean_box(const McProposal& p);

/// Shannon entropy with 0 ln 0 = 0.
double entropy_score(std::span<const double> mean_probs);

/// Probability of the predicted foreground class: max over all but the last
/// (background) entry.
double foreground_confidence(std::span<const double> mean_probs);

double deviation_ratio(double u_cls, double s, const ModalityStats& stats);
double deviation_ratio(double u_cls, double s, Modality m, const ValidationStats& stats);

/// Trace of the biased sample covariance of the box parameter vectors.
double total_variance(std::span<const std::vector<double>> boxes);

double data_variance_term(const McProposal& p, DataVarianceMode mode, std::size_t num_samples,
                          std::uint64_t rng_seed);

/// Total variance of the MC samples plus the data-variance term, divided by
/// the mean-box diagonal for camera proposals. Not standardized.
double raw_regression_score(const McProposal& p, const ScoringConfig& cfg,
                            std::uint64_t proposal_salt = 0);

double standardize(double raw, const ModalityStats& stats);

double regression_score(const McProposal& p, const ValidationStats& stats,
                        const ScoringConfig& cfg, std::uint64_t proposal_salt = 0);

/// Scores without standardization or deviation ratio (dr = 1, u_reg = raw).
ScoredProposal score_unstandardized(const McProposal& p, std::size_t index,
                                    const ScoringConfig& cfg);

ScoredProposal score_proposal(const McProposal& p, std::size_t index, const ValidationStats& stats,
                              const ScoringConfig& cfg);

std::vector<ScoredProposal> score_proposals(std::span<const McProposal> proposals,
                                            const ValidationStats& stats,
                                            const ScoringConfig& cfg);

struct TpThresholds {
  double lidar_iou = 0.7;
  double camera_iou = 0.5;
};

/// Greedy one-to-one matching by descending confidence. LiDAR boxes match GT
/// by iou_3d, camera boxes match projected GT by iou_2d. Returns one flag per proposal.
std::vector<bool> true_positive_mask(std::span<const ScoredProposal> proposals,
                                     const Frame& frame, Modality modality,
                                     const TpThresholds& thresholds = {});

/// Mean and standard deviation of u_cls, s and raw u_reg over validation true
/// positives. Modalities without any TP get ModalityStats::defaults and fallback = true.
ValidationStats compute_validation_stats(std::span<const Frame> frames, const ScoringConfig& cfg = {},
                                         const TpThresholds& thresholds = {});

}  // namespace umoe::uncertainty
