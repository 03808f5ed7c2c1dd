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

#include "umoe/pairing.hpp"

#include <cmath>
#include <optional>

namespace umoe::pairing {

namespace {

ChannelRow channels_of(const uncertainty::ScoredProposal& p) { return {p.s, p.dr_cls, p.u_reg}; }

}  // namespace

ProposalPairSet build_pairs(std::span<const uncertainty::ScoredProposal> lidar,
                            std::span<const uncertainty::ScoredProposal> camera,
                            const geometry::Calibration& calib, const PairingConfig& cfg,
                            std::uint64_t frame_id) {
  ProposalPairSet out;
  out.frame_id = frame_id;
  out.num_lidar = lidar.size();
  out.num_camera = camera.size();

  for (std::size_t i = 0; i < lidar.size(); ++i) {
    const auto& box = lidar[i].box3d();
    const double distance = std::hypot(box.cx, box.cy);
    const std::optional<geometry::Box2D> projected = geometry::try_project_box3d(box, calib);

    bool paired = false;
    for (std::size_t j = 0; j < camera.size(); ++j) {
      const double iou = projected ? geometry::iou_2d(*projected, camera[j].box2d()) : 0.0;
      if (cfg.mode == PairingMode::kSparse && !(iou > 0.0)) continue;
      out.pairs.push_back({i, static_cast<std::int64_t>(j), iou, distance});
      out.lidar_channels.push_back(channels_of(lidar[i]));
      out.camera_channels.push_back(channels_of(camera[j]));
      paired = true;
    }
    if (!paired) {
      out.pairs.push_back({i, kNullCamera, 0.0, distance});
      out.lidar_channels.push_back(channels_of(lidar[i]));
      out.camera_channels.push_back({0.0, 0.0, 0.0});
    }
  }
  return out;
}

UmoeInputs tensor_channels(const ProposalPairSet& pairs, const ChannelAblation& ablation) {
  const std::size_t k = pairs.size();
  UmoeInputs out{nn::Tensor::matrix(k, 3), nn::Tensor::matrix(k, 3)};
  const auto fill = [&](nn::Tensor& t, const std::vector<ChannelRow>& rows) {
    for (std::size_t r = 0; r < k; ++r) {
      t.at(r, 0) = rows[r][0];
      t.at(r, 1) = ablation.use_dr ? rows[r][1] : 0.0;
      t.at(r, 2) = ablation.use_reg ? rows[r][2] : 0.0;
    }
  };
  fill(out.lidar, pairs.lidar_channels);
  fill(out.camera, pairs.camera_channels);
  return out;
}

}  // namespace umoe::pairing
