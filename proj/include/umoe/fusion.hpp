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
#include <vector>

#include <json.hpp>

#include "umoe/eval.hpp"
#include "umoe/frame.hpp"
#include "umoe/nn.hpp"
#include "umoe/pairing.hpp"
#include "umoe/uncertainty.hpp"

namespace umoe::fusion {

class FusionError : public std::runtime_error {
 public:
  enum class Kind { kEmptyDataset, kNonFiniteLoss, kBadCheckpoint, kBadConfig, kShapeMismatch };

  FusionError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Pair-to-proposal pooling used for score substitution and the fused logit.
enum class Aggregation { kMax, kMean, kSum };

std::string_view to_string(Aggregation a);
Aggregation aggregation_from_string(std::string_view name);

struct FusionConfig {
  /// Uncertainty-regardless fusion: original scores straight into a 4-channel head.
  bool baseline = false;
  bool use_dr = true;
  bool use_reg = true;
  bool use_moe = true;
  /// Defaults to 0.7 (uncertainty-encoded) or 0.5 (baseline) when unset.
  std::optional<double> nms_threshold;
  double distance_norm = 80.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double target_iou = 0.7;
  pairing::PairingConfig pairing;
  Aggregation aggregation = Aggregation::kMax;
  std::size_t epochs = 20;
  nn::OneCycleConfig schedule;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;

  double effective_nms() const { return nms_threshold.value_or(baseline ? 0.5 : 0.7); }
  /// 4 for the baseline and MoE variants, 8 when uncertainty channels bypass the experts.
  std::size_t head_input_channels() const { return (!baseline && !use_moe) ? 8 : 4; }
  /// "baseline", "umoe", or "umoe" with "-no-dr/-no-reg/-no-moe" suffixes.
  std::string method_name() const;
  /// Throws FusionError(kBadConfig).
  void validate() const;

  nlohmann::json to_json() const;
  static FusionConfig from_json(const nlohmann::json& j);
};

/// Two expert stacks (3 -> 9 -> 18 -> 18) and two gates (36 -> 1).
struct UmoeNetwork {
  nn::ResBlock expert_lidar[3];
  nn::ResBlock expert_camera[3];
  nn::ResBlock gate_lidar;
  nn::ResBlock gate_camera;

  UmoeNetwork();
  void init_uniform(std::mt19937_64& rng);
  void collect(std::vector<nn::Parameter*>& out);
};

/// Residual stack c_in -> 18 -> 36 -> 36 -> 1 producing one logit per pair.
struct ClocsHead {
  std::vector<nn::ResBlock> blocks;

  ClocsHead() = default;
  explicit ClocsHead(std::size_t in_channels);
  std::size_t in_channels() const { return blocks.empty() ? 0 : blocks.front().in_channels(); }
  void init_uniform(std::mt19937_64& rng);
  void collect(std::vector<nn::Parameter*>& out);
};

/// Everything the networks consume for one frame, computed once up front.
struct PreparedFrame {
  std::uint64_t frame_id = 0;
  std::vector<uncertainty::ScoredProposal> lidar;
  std::vector<uncertainty::ScoredProposal> camera;
  pairing::ProposalPairSet pairs;
  /// Per-LiDAR-proposal labels; empty when the frame has no ground truth attached.
  std::vector<double> targets;
};

PreparedFrame prepare_frame(const Frame& frame, const uncertainty::ValidationStats& stats,
                            const FusionConfig& cfg, const uncertainty::ScoringConfig& scoring = {});

std::vector<PreparedFrame> prepare_frames(std::span<const Frame> frames,
                                          const uncertainty::ValidationStats& stats,
                                          const FusionConfig& cfg,
                                          const uncertainty::ScoringConfig& scoring = {},
                                          std::size_t threads = 1);

/// 1 for proposals matched greedily (descending IoU, one-to-one) to a GT with
/// iou_3d >= threshold, 0 otherwise.
std::vector<double> assign_targets(std::span<const geometry::Box3D> proposals,
                                   std::span<const geometry::Box3D> gt, double threshold = 0.7);

struct GateScores {
  nn::Graph::Var lidar;   // K x 1
  nn::Graph::Var camera;  // K x 1
};

/// Experts, channel concatenation and gates; both outputs pass through a sigmoid.
GateScores umoe_forward(nn::Graph& g, UmoeNetwork& net, nn::Graph::Var t_lidar, nn::Graph::Var t_camera);

struct SubstitutedScores {
  std::vector<double> lidar;
  std::vector<double> camera;
};

/// Per-proposal scores pooled from per-pair gate outputs. Proposals without
/// a contributing pair keep their original s.
SubstitutedScores substitute_scores(const pairing::ProposalPairSet& pairs, std::span<const double> s_lidar,
                                    std::span<const double> s_camera,
                                    std::span<const uncertainty::ScoredProposal> lidar,
                                    std::span<const uncertainty::ScoredProposal> camera,
                                    Aggregation aggregation = Aggregation::kMax);

/// Per-LiDAR-proposal fused scores from per-pair logits.
std::vector<double> pool_fused_scores(const pairing::ProposalPairSet& pairs, std::span<const double> pair_logits,
                                      Aggregation aggregation = Aggregation::kMax);

class FusionModel {
 public:
  static constexpr int kCheckpointVersion = 1;

  explicit FusionModel(FusionConfig cfg = {});

  const FusionConfig& config() const { return cfg_; }
  UmoeNetwork& umoe() { return umoe_; }
  ClocsHead& head() { return head_; }
  std::vector<nn::Parameter*> parameters();

  /// Per-LiDAR-proposal fused logits (num_lidar x 1).
  nn::Graph::Var forward(nn::Graph& g, const PreparedFrame& frame);
  /// Focal loss of the fused logits against frame.targets.
  nn::Graph::Var loss(nn::Graph& g, const PreparedFrame& frame);

  std::vector<double> fused_scores(const PreparedFrame& frame);

  nlohmann::json to_json() const;
  /// Throws FusionError(kBadCheckpoint) on a version, shape or layout mismatch.
  static FusionModel from_json(const nlohmann::json& j);

 private:
  FusionConfig cfg_;
  UmoeNetwork umoe_;
  ClocsHead head_;
};

/// Fused scores, then NMS over the LiDAR mean boxes.
std::vector<Detection> infer(FusionModel& model, const PreparedFrame& frame);
/// infer() for a model trained with `baseline` set; throws kBadConfig otherwise.
std::vector<Detection> baseline_infer(FusionModel& model, const PreparedFrame& frame);

/// All frames' detections concatenated in frame order; the result does not
/// depend on `threads`.
std::vector<Detection> infer_all(const FusionModel& model, std::span<const PreparedFrame> frames,
                                 std::size_t threads = 1);

struct TrainLogRow {
  std::size_t epoch = 0;
  double loss = 0.0;
  eval::ApResult val_ap;
  double lr = 0.0;
};

struct TrainResult {
  FusionModel model;
  std::vector<TrainLogRow> log;
  std::size_t best_epoch = 0;
  std::size_t steps = 0;
};

/// Joint end-to-end training. Frames without LiDAR proposals do not produce a
/// step. Returns the snapshot with the best validation moderate AP. Throws
/// FusionError(kEmptyDataset) or FusionError(kNonFiniteLoss).
TrainResult train(std::span<const PreparedFrame> train_frames, std::span<const PreparedFrame> val_prepared,
                  std::span<const Frame> val_frames, const FusionConfig& cfg, std::size_t threads = 1);

std::string train_log_csv(std::span<const TrainLogRow> log);

}  // namespace umoe::fusion
