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
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "umoe/frame.hpp"
#include "umoe/geometry.hpp"

namespace umoe::eval {

class EvalError : public std::runtime_error {
 public:
  enum class Kind { kNoGroundTruth, kBadInput };

  EvalError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

enum class Difficulty { kEasy = 0, kModerate = 1, kHard = 2, kIgnored = 3 };

std::string_view to_string(Difficulty d);

/// Minimum projected box height in pixels for each bin.
struct DifficultyThresholds {
  double easy = 40.0;
  double moderate = 25.0;
  double hard = 20.0;

  double min_height(Difficulty d) const;
};

Difficulty difficulty_from_height(double height_px, const DifficultyThresholds& t = {});

/// Height-only binning on the clipped image projection; unprojectable boxes are ignored.
Difficulty difficulty_bin(const geometry::Box3D& gt, const geometry::Calibration& calib,
                          const DifficultyThresholds& t = {});

struct ApBin {
  /// Absent when the bin holds no ground truth.
  std::optional<double> ap;
  std::size_t num_gt = 0;
  std::size_t num_tp = 0;
  std::size_t num_fp = 0;
};

struct ApResult {
  std::array<ApBin, 3> bins;

  const ApBin& operator[](Difficulty d) const { return bins.at(static_cast<std::size_t>(d)); }
  std::optional<double> easy() const { return bins[0].ap; }
  std::optional<double> moderate() const { return bins[1].ap; }
  std::optional<double> hard() const { return bins[2].ap; }

  /// Throws EvalError(kNoGroundTruth) when the bin is empty.
  double require(Difficulty d) const;
};

inline constexpr int kRecallPositions = 40;

/// 40-point interpolated AP (percent) from a precision/recall curve.
double interpolated_ap(std::span<const double> recall, std::span<const double> precision);

/// AP3D with score-descending greedy matching per frame. Bins are cumulative:
/// ground truth harder than the evaluated bin is ignored, as are unmatched
/// detections whose projected height falls below the bin's minimum.
ApResult ap_3d(std::span<const Detection> detections, std::span<const Frame> frames,
               double iou_threshold = 0.7, const DifficultyThresholds& t = {});

struct SignificanceResult {
  double p_value = 1.0;
  double t_statistic = 0.0;
  double mean_difference = 0.0;
  bool degenerate = false;
};

/// Two-sided paired t-test on a - b. When every difference is equal the test
/// is degenerate: p = 1 for a zero difference, p = 0 otherwise.
SignificanceResult paired_significance(std::span<const double> runs_a, std::span<const double> runs_b);

/// "dataset,profile,method,easy,moderate,hard"; absent bins are empty cells.
std::string ap_csv_header();
std::string ap_csv_row(std::string_view dataset, std::string_view profile, std::string_view method,
                       const ApResult& result);

}  // namespace umoe::eval
