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

// Hand-built fusion inputs with a prescribed pair count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "umoe/fusion.hpp"

namespace fixture {

using umoe::fusion::PreparedFrame;
using umoe::uncertainty::ScoredProposal;

inline ScoredProposal scored_lidar(double x, double y, double s, double dr, double u_reg) {
  ScoredProposal p;
  p.modality = umoe::Modality::kLidar;
  p.mean_box = umoe::geometry::Box3D(x, y, -1.0, 4.0, 1.8, 1.5, 0.0);
  p.s = s;
  p.dr_cls = dr;
  p.u_reg = u_reg;
  return p;
}

inline ScoredProposal scored_camera(double s, double dr, double u_reg) {
  ScoredProposal p;
  p.modality = umoe::Modality::kCamera;
  p.mean_box = umoe::geometry::Box2D(100, 100, 200, 180);
  p.s = s;
  p.dr_cls = dr;
  p.u_reg = u_reg;
  return p;
}

/// Frame with exactly k pairs. LiDAR proposal 0 is null-paired whenever
/// there is more than one LiDAR proposal; the rest spread over the cameras.
inline PreparedFrame random_frame(std::uint64_t seed, std::size_t k) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.02, 0.98);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::size_t n_lidar = 1, n_camera = 0;
  if (k > 1) {
    n_camera = std::min<std::size_t>(6, k);
    n_lidar = 1 + (k - 1 + n_camera - 1) / n_camera;
  }

  PreparedFrame f;
  f.frame_id = seed;
  for (std::size_t i = 0; i < n_lidar; ++i) {
    f.lidar.push_back(scored_lidar(10.0 + 8.0 * static_cast<double>(i), normal(rng), unit(rng), unit(rng), normal(rng)));
  }
  for (std::size_t j = 0; j < n_camera; ++j) f.camera.push_back(scored_camera(unit(rng), unit(rng), normal(rng)));

  std::vector<std::size_t> per_lidar(n_lidar, 0);
  per_lidar[0] = 1;
  std::size_t remaining = k - 1;
  for (std::size_t i = 1; remaining > 0; i = i % (n_lidar - 1) + 1) {
    if (per_lidar[i] < n_camera) {
      ++per_lidar[i];
      --remaining;
    }
  }

  auto& ps = f.pairs;
  ps.frame_id = f.frame_id;
  ps.num_lidar = n_lidar;
  ps.num_camera = n_camera;
  const auto row = [](const ScoredProposal& p) { return umoe::pairing::ChannelRow{p.s, p.dr_cls, p.u_reg}; };
  for (std::size_t i = 0; i < n_lidar; ++i) {
    const double dist = std::hypot(f.lidar[i].box3d().cx, f.lidar[i].box3d().cy);
    if (i == 0) {
      ps.pairs.push_back({0, umoe::pairing::kNullCamera, 0.0, dist});
      ps.lidar_channels.push_back(row(f.lidar[0]));
      ps.camera_channels.push_back({0.0, 0.0, 0.0});
      continue;
    }
    std::vector<std::size_t> cams(n_camera);
    for (std::size_t j = 0; j < n_camera; ++j) cams[j] = j;
    std::shuffle(cams.begin(), cams.end(), rng);
    cams.resize(per_lidar[i]);
    std::sort(cams.begin(), cams.end());
    for (std::size_t j : cams) {
      ps.pairs.push_back({i, static_cast<std::int64_t>(j), unit(rng), dist});
      ps.lidar_channels.push_back(row(f.lidar[i]));
      ps.camera_channels.push_back(row(f.camera[j]));
    }
  }
  for (std::size_t i = 0; i < n_lidar; ++i) f.targets.push_back(static_cast<double>(rng() % 2));
  f.targets[n_lidar - 1] = 1.0;
  return f;
}

}  // namespace fixture
