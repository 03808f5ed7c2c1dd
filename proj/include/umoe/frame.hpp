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

#include <cstdint>
#include <string>
#include <vector>

#include "umoe/geometry.hpp"
#include "umoe/proposal.hpp"

namespace umoe {

/// Ground truth, calibration and both detectors' raw proposals for one scene.
struct Frame {
  std::uint64_t frame_id = 0;
  std::vector<geometry::Box3D> gt_boxes;
  geometry::Calibration calib;
  std::vector<McProposal> lidar_proposals;
  std::vector<McProposal> camera_proposals;
  std::string profile_tag = "clear";

  const std::vector<McProposal>& proposals(Modality m) const {
    return m == Modality::kLidar ? lidar_proposals : camera_proposals;
  }
};

}  // namespace umoe

namespace umoe {

/// A fused 3D detection. Lists of detections are kept in descending score order.
struct Detection {
  geometry::Box3D box;
  double score = 0.0;
  std::uint64_t frame_id = 0;
};

}  // namespace umoe
