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
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "umoe/geometry.hpp"

namespace umoe {

enum class Modality { kLidar, kCamera };

std::string_view to_string(Modality m);
Modality modality_from_string(std::string_view name);

/// Box parameter count: 7 for LiDAR (cx, cy, cz, l, w, h, yaw), 4 for camera (x1, y1, x2, y2).
constexpr std::size_t box_size(Modality m) { return m == Modality::kLidar ? 7 : 4; }

/// One stochastic forward pass of a detector head.
struct McSample {
  std::vector<double> box;
  /// Class probabilities; the last entry is background.
  std::vector<double> class_probs;
};

/// A detector proposal carrying N dropout samples and the per-coordinate
/// variances predicted by the direct-modeling head.
struct McProposal {
  Modality modality = Modality::kLidar;
  std::vector<McSample> samples;
  std::vector<double> data_var;

  std::size_t num_samples() const { return samples.size(); }
  std::size_t num_classes() const { return samples.empty() ? 0 : samples.front().class_probs.size(); }

  /// Throws std::invalid_argument when the proposal violates its invariants.
  void validate() const;
};

}  // namespace umoe
