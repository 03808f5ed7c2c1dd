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

#include "umoe/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_map>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

namespace umoe::eval {

std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kModerate: return "moderate";
    case Difficulty::kHard: return "hard";
    case Difficulty::kIgnored: return "ignored";
  }
  return "ignored";
}

double DifficultyThresholds::min_height(Difficulty d) const {
  switch (d) {
    case Difficulty::kEasy: return easy;
    case Difficulty::kModerate: return moderate;
    case Difficulty::kHard: return hard;
    case Difficulty::kIgnored: break;
  }
  return 0.0;
}

Difficulty difficulty_from_height(double h, const DifficultyThresholds& t) {
  if (h >= t.easy) return Difficulty::kEasy;
  if (h >= t.moderate) return Difficulty::kModerate;
  if (h >= t.hard) return Difficulty::kHard;
  return Difficulty::kIgnored;
}

Difficulty difficulty_bin(const geometry::Box3D& gt, const geometry::Calibration& calib,
                          const DifficultyThresholds& t) {
  const auto projected = geometry::try_project_box3d(gt, calib);
  if (!projected) return Difficulty::kIgnored;
  return difficulty_from_height(projected->height(), t);
}

double ApResult::require(Difficulty d) const {
  const auto& bin = (*this)[d];
  if (!bin.ap) {
    throw EvalError(EvalError::Kind::kNoGroundTruth,
                    "no ground truth in bin " + std::string(to_string(d)));
  }
  return *bin.ap;
}

double interpolated_ap(std::span<const double> recall, std::span<const double> precision) {
  double acc = 0.0;
  for (int i = 1; i <= kRecallPositions; ++i) {
    const double r = static_cast<double>(i) / kRecallPositions;
    double best = 0.0;
    for (std::size_t k = 0; k < recall.size(); ++k) {
      // Small slack so that r = 1 is reached by a full recall computed as n/n.
      if (recall[k] >= r - 1e-12) best = std::max(best, precision[k]);
    }
    acc += best;
  }
  return 100.0 * acc / kRecallPositions;
}

namespace {

struct ScoredOutcome {
  double score;
  bool tp;
};

}  // namespace

ApResult ap_3d(std::span<const Detection> detections, std::span<const Frame> frames,
               double iou_threshold, const DifficultyThresholds& t) {
  std::unordered_map<std::uint64_t, std::size_t> frame_index;
  for (std::size_t f = 0; f < frames.size(); ++f) frame_index.emplace(frames[f].frame_id, f);

  std::vector<std::vector<std::size_t>> per_frame(frames.size());
  for (std::size_t d = 0; d < detections.size(); ++d) {
    const auto it = frame_index.find(detections[d].frame_id);
    if (it == frame_index.end()) {
      throw EvalError(EvalError::Kind::kBadInput,
                      "detection references unknown frame " + std::to_string(detections[d].frame_id));
    }
    per_frame[it->second].push_back(d);
  }
  for (auto& list : per_frame) {
    std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
      return detections[a].score > detections[b].score;
    });
  }

  std::vector<std::vector<Difficulty>> gt_difficulty(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (const auto& gt : frames[f].gt_boxes) gt_difficulty[f].push_back(difficulty_bin(gt, frames[f].calib, t));
  }

  ApResult result;
  for (Difficulty bin : {Difficulty::kEasy, Difficulty::kModerate, Difficulty::kHard}) {
    const auto level = static_cast<int>(bin);
    const double min_height = t.min_height(bin);
    std::size_t num_gt = 0;
    std::vector<ScoredOutcome> outcomes;

    for (std::size_t f = 0; f < frames.size(); ++f) {
      const auto& frame = frames[f];
      const std::size_t n_gt = frame.gt_boxes.size();
      std::vector<bool> valid(n_gt);
      for (std::size_t g = 0; g < n_gt; ++g) {
        valid[g] = static_cast<int>(gt_difficulty[f][g]) <= level;
        if (valid[g]) ++num_gt;
      }
      std::vector<bool> used(n_gt, false);
      for (std::size_t d : per_frame[f]) {
        const auto& det = detections[d];
        double best_valid = -1.0;
        std::size_t best_valid_g = 0;
        double best_ignored = -1.0;
        std::size_t best_ignored_g = 0;
        for (std::size_t g = 0; g < n_gt; ++g) {
          if (used[g]) continue;
          const double iou = geometry::iou_3d(det.box, frame.gt_boxes[g]);
          if (iou < iou_threshold) continue;
          if (valid[g] && iou > best_valid) {
            best_valid = iou;
            best_valid_g = g;
          } else if (!valid[g] && iou > best_ignored) {
            best_ignored = iou;
            best_ignored_g = g;
          }
        }
        if (best_valid >= 0.0) {
          used[best_valid_g] = true;
          outcomes.push_back({det.score, true});
        } else if (best_ignored >= 0.0) {
          used[best_ignored_g] = true;
        } else {
          const auto projected = geometry::try_project_box3d(det.box, frame.calib);
          const double height = projected ? projected->height() : 0.0;
          if (height >= min_height) outcomes.push_back({det.score, false});
        }
      }
    }

    ApBin& out = result.bins[static_cast<std::size_t>(level)];
    out.num_gt = num_gt;
    for (const auto& o : outcomes) (o.tp ? out.num_tp : out.num_fp)++;
    if (num_gt == 0) continue;

    std::stable_sort(outcomes.begin(), outcomes.end(),
                     [](const ScoredOutcome& a, const ScoredOutcome& b) { return a.score > b.score; });
    std::vector<double> recall;
    std::vector<double> precision;
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      (outcomes[i].tp ? tp : fp)++;
      // Operating points exist only between distinct scores.
      if (i + 1 < outcomes.size() && outcomes[i + 1].score == outcomes[i].score) continue;
      recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
      precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    }
    out.ap = interpolated_ap(recall, precision);
  }
  return result;
}

SignificanceResult paired_significance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw EvalError(EvalError::Kind::kBadInput, "paired test needs equal-length samples, n >= 2");
  }
  const std::size_t n = a.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = a[i] - b[i];
  const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / static_cast<double>(n);

  SignificanceResult out;
  out.mean_difference = mean;
  const bool all_equal =
      std::all_of(diff.begin(), diff.end(), [&](double d) { return d == diff.front(); });
  if (all_equal) {
    out.degenerate = true;
    out.p_value = diff.front() == 0.0 ? 1.0 : 0.0;
    out.t_statistic = diff.front() == 0.0 ? 0.0 : std::copysign(INFINITY, diff.front());
    return out;
  }
  double ss = 0.0;
  for (double d : diff) ss += (d - mean) * (d - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  out.t_statistic = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t_statistic)));
  return out;
}

std::string ap_csv_header() { return "dataset,profile,method,easy,moderate,hard"; }

std::string ap_csv_row(std::string_view dataset, std::string_view profile, std::string_view method,
                       const ApResult& result) {
  std::string row;
  row.append(dataset).append(",").append(profile).append(",").append(method);
  for (const auto& bin : result.bins) {
    row += ",";
    if (bin.ap) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", *bin.ap);
      row += buf;
    }
  }
  return row;
}

}  // namespace umoe::eval
