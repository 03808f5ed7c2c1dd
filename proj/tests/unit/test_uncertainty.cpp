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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "umoe/uncertainty.hpp"

namespace {

using namespace umoe;
using namespace umoe::uncertainty;

McProposal camera_proposal(std::vector<std::vector<double>> boxes, std::vector<std::vector<double>> probs,
                           std::vector<double> data_var = {0, 0, 0, 0}) {
  McProposal p;
  p.modality = Modality::kCamera;
  for (std::size_t i = 0; i < boxes.size(); ++i) p.samples.push_back({boxes[i], probs[i]});
  p.data_var = std::move(data_var);
  p.validate();
  return p;
}

McProposal lidar_proposal(std::vector<std::vector<double>> boxes, std::vector<double> data_var) {
  McProposal p;
  p.modality = Modality::kLidar;
  for (auto& b : boxes) p.samples.push_back({b, {0.8, 0.1, 0.1}});
  p.data_var = std::move(data_var);
  p.validate();
  return p;
}

ModalityStats example_stats() {
  ModalityStats s;
  s.mu_u = 0.3;
  s.sigma_u = 0.1;
  s.mu_s = 0.8;
  s.sigma_s = 0.1;
  return s;
}

TEST(McMeanProbs, Examples) {
  const std::vector<double> box{0, 0, 1, 1};
  auto p = camera_proposal({box, box}, {{1, 0}, {0, 1}});
  EXPECT_EQ(mc_mean_probs(p), (std::vector<double>{0.5, 0.5}));
  p = camera_proposal({box}, {{0.3, 0.7}});
  EXPECT_EQ(mc_mean_probs(p), (std::vector<double>{0.3, 0.7}));
  p = camera_proposal({box, box, box}, {{0.9, 0.1}, {0.6, 0.4}, {0.3, 0.7}});
  const auto m = mc_mean_probs(p);
  EXPECT_NEAR(m[0], 0.6, 1e-12);
  EXPECT_NEAR(m[1], 0.4, 1e-12);
}

TEST(McMeanBox, CameraAndCircularYaw) {
  const auto p = camera_proposal({{0, 0, 2, 2}, {2, 2, 4, 4}}, {{1, 0}, {1, 0}});
  EXPECT_EQ(mc_mean_box(p), (std::vector<double>{1, 1, 3, 3}));
  const auto l = lidar_proposal({{1, 2, 3, 4, 2, 1.5, 3.1}, {1, 2, 3, 4, 2, 1.5, -3.1}}, std::vector<double>(7, 0));
  const auto m = mc_mean_box(l);
  EXPECT_NEAR(std::abs(m[6]), std::numbers::pi, 1e-9);
}

TEST(Entropy, Examples) {
  const std::vector<double> half{0.5, 0.5}, one{1, 0}, skew{0.9, 0.1};
  EXPECT_NEAR(entropy_score(half), std::log(2.0), 1e-9);
  EXPECT_NEAR(entropy_score(one), 0.0, 1e-9);
  EXPECT_NEAR(entropy_score(skew), 0.325083, 1e-6);
  EXPECT_NEAR(entropy_score(skew), -(0.9 * std::log(0.9) + 0.1 * std::log(0.1)), 1e-12);
  const std::vector<double> uniform3{1.0 / 3, 1.0 / 3, 1.0 / 3}, tilted{0.4, 0.3, 0.3};
  EXPECT_GT(entropy_score(uniform3), entropy_score(tilted));
}

TEST(DeviationRatio, Examples) {
  const auto st = example_stats();
  EXPECT_NEAR(deviation_ratio(0.25, 0.95, st), 1.0, 1e-9);
  EXPECT_NEAR(deviation_ratio(0.5, 0.95, st), 0.75, 1e-9);
  EXPECT_NEAR(deviation_ratio(0.6, 0.6, st), 0.436364, 1e-6);
  EXPECT_NEAR(deviation_ratio(0.6, 0.6, st), (0.3 / 0.5) * (0.8 / 1.1), 1e-12);
}

TEST(DeviationRatio, SecondHingeActiveJustAboveMean) {
  // s between mu_s and mu_s + sigma_s is still penalized.
  const auto st = example_stats();
  EXPECT_LT(deviation_ratio(0.1, 0.85, st), 1.0);
}

TEST(DeviationRatio, Monotone) {
  const auto st = example_stats();
  double prev = 2.0;
  for (double u = 0.0; u < 1.2; u += 0.05) {
    const double d = deviation_ratio(u, 0.7, st);
    EXPECT_LE(d, prev);
    EXPECT_GT(d, 0.0);
    prev = d;
  }
  prev = 0.0;
  for (double s = 0.0; s <= 1.0; s += 0.05) {
    const double d = deviation_ratio(0.45, s, st);
    EXPECT_GE(d, prev);
    prev = d;
  }
}

TEST(DeviationRatio, MissingModality) {
  ValidationStats stats;
  stats.lidar = example_stats();
  EXPECT_NO_THROW(deviation_ratio(0.1, 0.9, Modality::kLidar, stats));
  try {
    deviation_ratio(0.1, 0.9, Modality::kCamera, stats);
    FAIL();
  } catch (const UncertaintyError& e) {
    EXPECT_EQ(e.kind(), UncertaintyError::Kind::kMissingStats);
  }
}

TEST(TotalVariance, Examples) {
  const std::vector<std::vector<double>> same{{1, 2}, {1, 2}};
  EXPECT_NEAR(total_variance(same), 0.0, 1e-9);
  const std::vector<std::vector<double>> one{{0}, {2}};
  EXPECT_NEAR(total_variance(one), 1.0, 1e-9);
  const std::vector<std::vector<double>> two{{0, 0}, {2, 2}};
  EXPECT_NEAR(total_variance(two), 2.0, 1e-9);
  const std::vector<std::vector<double>> single{{5, 5}};
  EXPECT_NEAR(total_variance(single), 0.0, 1e-12);
}

TEST(TotalVariance, ReorderAndTranslationInvariant) {
  std::vector<std::vector<double>> s{{0.1, 3}, {1.7, -2}, {0.4, 0.5}, {2.2, 1}};
  const double base = total_variance(s);
  std::swap(s[0], s[3]);
  EXPECT_NEAR(total_variance(s), base, 1e-12);
  for (auto& b : s) {
    b[0] += 100;
    b[1] -= 7;
  }
  EXPECT_NEAR(total_variance(s), base, 1e-9);
}

TEST(DataVariance, DeterministicAndSampled) {
  const std::vector<double> box{0, 0, 1, 1};
  const auto zero = camera_proposal({box}, {{1, 0}});
  EXPECT_EQ(data_variance_term(zero, DataVarianceMode::kDeterministic, 0, 1), 0.0);
  EXPECT_EQ(data_variance_term(zero, DataVarianceMode::kSampled, 1000, 1), 0.0);
  const auto var = camera_proposal({box}, {{1, 0}}, {1, 2, 3, 4});
  EXPECT_NEAR(data_variance_term(var, DataVarianceMode::kDeterministic, 0, 1), 10.0, 1e-9);
  const auto unit = camera_proposal({box}, {{1, 0}}, {1, 1, 1, 1});
  const double sampled = data_variance_term(unit, DataVarianceMode::kSampled, 100000, 42);
  EXPECT_NEAR(sampled, 4.0, 0.05 * 4.0);
  EXPECT_EQ(sampled, data_variance_term(unit, DataVarianceMode::kSampled, 100000, 42));
}

TEST(RegressionScore, CameraDiagonalNormalization) {
  // Two shifted copies of (0,0,3,4): per-coordinate variance 2.5, trace 10.
  const double d = std::sqrt(2.5);
  const auto p = camera_proposal({{d, d, 3 + d, 4 + d}, {-d, -d, 3 - d, 4 - d}}, {{1, 0}, {1, 0}});
  ValidationStats stats;
  ModalityStats st;
  st.mu_reg = 0.0;
  st.sigma_reg = 1.0;
  stats.camera = st;
  EXPECT_NEAR(regression_score(p, stats, {}), 2.0, 1e-9);
}

TEST(RegressionScore, LidarCentred) {
  // Total variance 3 (three coordinates at +-1) plus data term 1.
  const auto p = lidar_proposal({{1, 1, 1, 4, 2, 1.5, 0}, {-1, -1, -1, 4, 2, 1.5, 0}}, {1, 0, 0, 0, 0, 0, 0});
  ValidationStats stats;
  ModalityStats st;
  st.mu_reg = 4.0;
  st.sigma_reg = 2.0;
  stats.lidar = st;
  EXPECT_NEAR(regression_score(p, stats, {}), 0.0, 1e-9);
}

TEST(RegressionScore, SingleSampleZero) {
  const auto p = lidar_proposal({{5, 1, 0, 4, 2, 1.5, 0.3}}, std::vector<double>(7, 0));
  ValidationStats stats;
  stats.lidar = ModalityStats{};
  EXPECT_NEAR(regression_score(p, stats, {}), 0.0, 1e-12);
}

TEST(RegressionScore, SigmaFloor) {
  ModalityStats st;
  st.mu_reg = 1.0;
  st.sigma_reg = 0.0;
  EXPECT_NEAR(standardize(1.0 + 1e-9, st), 1.0, 1e-6);
}

TEST(RegressionScore, CameraScalesLinearlyWithBoxScale) {
  const std::vector<std::vector<double>> boxes{{10, 20, 50, 60}, {12, 19, 49, 63}, {9, 22, 52, 58}};
  const auto p = camera_proposal(boxes, {{1, 0}, {1, 0}, {1, 0}});
  const double base = raw_regression_score(p, {});
  const double k = 3.0;
  std::vector<std::vector<double>> scaled = boxes;
  for (auto& b : scaled) {
    for (double& v : b) v *= k;
  }
  const auto q = camera_proposal(scaled, {{1, 0}, {1, 0}, {1, 0}});
  EXPECT_NEAR(raw_regression_score(q, {}), k * base, 1e-9);
  EXPECT_NEAR(total_variance(scaled), k * k * total_variance(boxes), 1e-9);
}

TEST(ValidationStatsTest, TwoTruePositives) {
  // Camera proposals matching their projected GT exactly.
  Frame f;
  f.calib = geometry::Calibration::pinhole(720, 621, 187, 1242, 375);
  f.gt_boxes = {geometry::Box3D(20, 0, -1, 4, 1.8, 1.5, 0), geometry::Box3D(30, 8, -1, 4, 1.8, 1.5, 0)};
  // Entropies 0.2 and 0.4 via two-class probabilities solved numerically.
  const auto p_for_entropy = [](double h) {
    double lo = 0.5, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      const double e = -(mid * std::log(mid) + (1 - mid) * std::log(1 - mid));
      (e > h ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  const double pa = p_for_entropy(0.2);
  const double pb = p_for_entropy(0.4);
  for (std::size_t g = 0; g < 2; ++g) {
    const auto b = geometry::project_box3d(f.gt_boxes[g], f.calib);
    const double p = g == 0 ? pa : pb;
    f.camera_proposals.push_back(camera_proposal({{b.x1, b.y1, b.x2, b.y2}}, {{p, 1 - p}}));
  }
  const std::vector<Frame> frames{f};
  const auto stats = compute_validation_stats(frames);
  ASSERT_TRUE(stats.camera);
  EXPECT_NEAR(stats.camera->mu_u, 0.3, 1e-9);
  EXPECT_NEAR(stats.camera->sigma_u, 0.1, 1e-9);
  EXPECT_EQ(stats.camera->tp_count, 2u);
  EXPECT_FALSE(stats.camera->fallback);
  // No LiDAR proposals: documented fallback.
  ASSERT_TRUE(stats.lidar);
  EXPECT_TRUE(stats.lidar->fallback);
}

TEST(ValidationStatsTest, PerfectDetections) {
  Frame f;
  f.calib = geometry::Calibration::pinhole(720, 621, 187, 1242, 375);
  f.gt_boxes = {geometry::Box3D(20, 0, -1, 4, 1.8, 1.5, 0.1), geometry::Box3D(35, -6, -1, 4.2, 1.7, 1.6, -0.4)};
  for (const auto& gt : f.gt_boxes) {
    const auto a = gt.to_array();
    McProposal p;
    p.modality = Modality::kLidar;
    p.samples.push_back({std::vector<double>(a.begin(), a.end()), {1.0, 0.0, 0.0}});
    p.data_var.assign(7, 0.0);
    f.lidar_proposals.push_back(p);
  }
  const std::vector<Frame> frames{f};
  const auto stats = compute_validation_stats(frames);
  ASSERT_TRUE(stats.lidar);
  EXPECT_EQ(stats.lidar->tp_count, 2u);
  EXPECT_NEAR(stats.lidar->mu_u, 0.0, 1e-12);
  EXPECT_NEAR(stats.lidar->sigma_u, 0.0, 1e-12);
  EXPECT_NEAR(stats.lidar->mu_s, 1.0, 1e-12);
  EXPECT_NEAR(stats.lidar->sigma_s, 0.0, 1e-12);
}

TEST(ValidationStatsTest, EmptySetFallsBack) {
  const auto stats = compute_validation_stats(std::vector<Frame>{});
  ASSERT_TRUE(stats.lidar && stats.camera);
  EXPECT_TRUE(stats.lidar->fallback);
  EXPECT_NEAR(stats.camera->mu_u, std::log(2.0) / 2, 1e-12);
  EXPECT_NEAR(stats.camera->sigma_u, std::log(2.0) / 4, 1e-12);
  EXPECT_EQ(stats.camera->mu_s, 0.5);
  EXPECT_EQ(stats.camera->sigma_s, 0.25);
  EXPECT_EQ(stats.camera->mu_reg, 0.0);
  EXPECT_EQ(stats.camera->sigma_reg, 1.0);
}

TEST(ValidationStatsTest, JsonRoundTripAndVersion) {
  ValidationStats stats;
  stats.lidar = ModalityStats{0.31, 0.12, 0.77, 0.09, 1.5, 0.25, 42, false};
  stats.camera = ModalityStats::defaults(3);
  const auto back = ValidationStats::from_json(stats.to_json());
  ASSERT_TRUE(back.lidar && back.camera);
  EXPECT_EQ(back.lidar->mu_u, 0.31);
  EXPECT_EQ(back.lidar->tp_count, 42u);
  EXPECT_TRUE(back.camera->fallback);
  EXPECT_THROW(ValidationStats::from_json("{\"version\": 99}"), UncertaintyError);
  EXPECT_THROW(ValidationStats::from_json("not json"), UncertaintyError);
}

}  // namespace
