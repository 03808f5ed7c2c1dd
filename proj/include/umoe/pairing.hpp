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
#include <span>
#include <vector>

#include "umoe/geometry.hpp"
#include "umoe/nn.hpp"
#include "umoe/uncertainty.hpp"

namespace umoe::pairing {

/// Camera index carried by a LiDAR proposal that has no overlapping camera box.
inline constexpr std::int64_t kNullCamera = -1;

enum class PairingMode {
  kSparse,       ///< only pairs with positive image IoU, plus null pairs
  kFullProduct,  ///< every (LiDAR, camera) combination
};

struct PairingConfig {
  PairingMode mode = PairingMode::kSparse;
};

struct ProposalPair {
  std::size_t lidar_index = 0;
  std::int64_t camera_index = kNullCamera;
  double image_iou = 0.0;
  double distance_m = 0.0;

  bool is_null() const { return camera_index == kNullCamera; }
};

/// Channel layout of one row: [s, dr_cls, u_reg].
using ChannelRow = std::array<double, 3>;

struct ProposalPairSet {
  std::uint64_t frame_id = 0;
  std::size_t num_lidar = 0;
  std::size_t num_camera = 0;
  std::vector<ProposalPair> pairs;
  std::vector<ChannelRow> lidar_channels;
  std::vector<ChannelRow> camera_channels;

  std::size_t size() const { return pairs.size(); }
};

ProposalPairSet build_pairs(std::span<const uncertainty::ScoredProposal> lidar,
                            std::span<const uncertainty::ScoredProposal> camera,
                            const geometry::Calibration& calib, const PairingConfig& cfg = {},
                            std::uint64_t frame_id = 0);

struct ChannelAblation {
  bool use_dr = true;
  bool use_reg = true;
};

struct UmoeInputs {
  nn::Tensor lidar;   // 1 x K x 3
  nn::Tensor camera;  // 1 x K x 3
};

/// Builds the two 1 x K x 3 tensors; disabled channels are zero.
UmoeInputs tensor_channels(const ProposalPairSet& pairs, const ChannelAblation& ablation = {});

}  // namespace umoe::pairing
