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

#include "umoe/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

namespace umoe::simgen {

namespace {

using geometry::Box2D;
using geometry::Box3D;
using Rng = std::mt19937_64;

enum Stream : std::uint32_t { kScene = 1, kLidar = 2, kCamera = 3, kSplit = 4 };

Rng make_rng(std::uint64_t seed, std::uint64_t frame_id, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(frame_id), static_cast<std::uint32_t>(frame_id >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

double normal(Rng& rng, double mean, double sd) {
  if (sd <= 0.0) return mean;
  return std::normal_distribution<double>(mean, sd)(rng);
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

double lognormal(Rng& rng, double log_mean, double log_sd) {
  return std::lognormal_distribution<double>(log_mean, log_sd)(rng);
}

bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::bernoulli_distribution(p)(rng);
}

std::size_t poisson(Rng& rng, double rate) {
  if (rate <= 0.0) return 0;
  return static_cast<std::size_t>(std::poisson_distribution<int>(rate)(rng));
}

// Per-coordinate noise templates (LiDAR: cx cy cz l w h yaw).
constexpr std::array<double, 7> kLidarBoxNoise{0.07, 0.07, 0.04, 0.05, 0.03, 0.03, 0.025};
constexpr std::array<double, 7> kLidarSampleSpread{0.10, 0.10, 0.05, 0.08, 0.05, 0.05, 0.04};

constexpr double kQualityLogSd = 0.35;
constexpr double kFpQualityLogMean = 0.85;  // ~2.3x the dispersion of a typical true positive
constexpr double kFpQualityLogSd = 0.30;
constexpr double kDataVarLogSd = 0.25;
constexpr double kClassSpread = 0.35;

struct ClassModel {
  double car_logit;
  double other_logit;
  double spread;
};

std::vector<double> sample_class_probs(Rng& rng, const ClassModel& m) {
  const double a = normal(rng, m.car_logit, m.spread);
  const double b = normal(rng, m.other_logit, m.spread);
  const double hi = std::max({a, b, 0.0});
  const double ea = std::exp(a - hi);
  const double eb = std::exp(b - hi);
  const double ec = std::exp(-hi);
  const double z = ea + eb + ec;
  return {ea / z, eb / z, ec / z};
}

std::vector<double> pad_probs(std::vector<double> probs, std::size_t num_classes) {
  // Classes beyond "other" share none of the mass; fewer classes fold into background.
  if (num_classes == probs.size()) return probs;
  std::vector<double> out(num_classes, 0.0);
  if (num_classes == 2) {
    out[0] = probs[0];
    out[1] = probs[1] + probs[2];
  } else {
    out[0] = probs[0];
    out[1] = probs[1];
    out[num_classes - 1] = probs[2];
  }
  return out;
}

McProposal make_lidar_proposal(Rng& rng, const Box3D& center, double quality, double range_factor,
                               const ModalityDegradation& deg, const ClassModel& cls,
                               const SimConfig& cfg) {
  McProposal p;
  p.modality = Modality::kLidar;
  std::array<double, 7> spread{};
  for (std::size_t i = 0; i < 7; ++i) {
    spread[i] = kLidarSampleSpread[i] * deg.sample_spread_scale * quality * range_factor;
  }
  const auto base = center.to_array();
  for (std::size_t n = 0; n < cfg.num_samples; ++n) {
    McSample s;
    s.box.resize(7);
    for (std::size_t i = 0; i < 7; ++i) s.box[i] = normal(rng, base[i], spread[i]);
    for (std::size_t i = 3; i < 6; ++i) s.box[i] = std::max(s.box[i], 0.3);
    s.box[6] = geometry::normalize_yaw(s.box[6]);
    s.class_probs = pad_probs(sample_class_probs(rng, cls), cfg.num_classes);
    p.samples.push_back(std::move(s));
  }
  p.data_var.resize(7);
  for (std::size_t i = 0; i < 7; ++i) p.data_var[i] = spread[i] * spread[i] * lognormal(rng, 0.0, kDataVarLogSd);
  return p;
}

McProposal make_camera_proposal(Rng& rng, const std::array<double, 4>& cwh, double quality,
                                const ModalityDegradation& deg, const ClassModel& cls,
                                const SimConfig& cfg) {
  McProposal p;
  p.modality = Modality::kCamera;
  const double size = std::hypot(cwh[2], cwh[3]);
  const double sd = deg.sample_spread_scale * quality * (1.0 + 0.03 * size);
  for (std::size_t n = 0; n < cfg.num_samples; ++n) {
    const double cu = normal(rng, cwh[0], sd);
    const double cv = normal(rng, cwh[1], sd);
    const double w = std::max(normal(rng, cwh[2], sd), 2.0);
    const double h = std::max(normal(rng, cwh[3], sd), 2.0);
    McSample s;
    s.box = {cu - 0.5 * w, cv - 0.5 * h, cu + 0.5 * w, cv + 0.5 * h};
    s.class_probs = pad_probs(sample_class_probs(rng, cls), cfg.num_classes);
    p.samples.push_back(std::move(s));
  }
  p.data_var.resize(4);
  for (double& v : p.data_var) v = sd * sd * lognormal(rng, 0.0, kDataVarLogSd);
  return p;
}

double half_fov(const SimConfig& cfg) { return std::atan(cfg.principal_u / cfg.focal); }

Box3D random_car(Rng& rng, const SimConfig& cfg, double x, double y) {
  const double l = normal(rng, 3.9, 0.2);
  const double w = normal(rng, 1.6, 0.08);
  const double h = normal(rng, 1.5, 0.08);
  const double yaw = uniform(rng, -std::numbers::pi, std::numbers::pi);
  return {x, y, cfg.ground_z + 0.5 * h, l, w, h, yaw};
}

std::array<double, 2> random_position(Rng& rng, const SimConfig& cfg) {
  const double x = uniform(rng, cfg.min_range, cfg.max_range);
  const double lateral = std::min(cfg.max_lateral, x * std::tan(cfg.fov_fill * half_fov(cfg)));
  return {x, uniform(rng, -lateral, lateral)};
}

std::vector<Box3D> generate_scene(Rng& rng, const SimConfig& cfg) {
  const auto n = std::uniform_int_distribution<std::size_t>(cfg.min_objects, cfg.max_objects)(rng);
  std::vector<Box3D> boxes;
  for (int attempt = 0; attempt < 400 && boxes.size() < n; ++attempt) {
    const auto [x, y] = random_position(rng, cfg);
    const bool crowded = std::any_of(boxes.begin(), boxes.end(), [&](const Box3D& b) {
      return std::hypot(b.cx - x, b.cy - y) < cfg.min_separation;
    });
    if (crowded) continue;
    boxes.push_back(random_car(rng, cfg, x, y));
  }
  return boxes;
}

// Car-sized non-car structures that either detector may fire on.
std::vector<Box3D> generate_clutter(Rng& rng, const SimConfig& cfg, std::span<const Box3D> gt) {
  const std::size_t n = poisson(rng, cfg.clutter_rate);
  std::vector<Box3D> out;
  for (int attempt = 0; attempt < 200 && out.size() < n; ++attempt) {
    const auto [x, y] = random_position(rng, cfg);
    const auto near = [&](const Box3D& b) { return std::hypot(b.cx - x, b.cy - y) < cfg.min_separation; };
    if (std::any_of(gt.begin(), gt.end(), near) || std::any_of(out.begin(), out.end(), near)) continue;
    out.push_back(random_car(rng, cfg, x, y));
  }
  return out;
}

double range_factor(double range, const SimConfig& cfg) { return 1.0 + range / cfg.noise_range; }

ClassModel lidar_fp_class(Rng& rng, double q, const ModalityDegradation& deg) {
  return {0.6 + deg.fp_confidence_boost + deg.confidence_bias + normal(rng, 0.0, 0.8), -0.5 + deg.fp_ambiguity,
          kClassSpread * deg.sample_spread_scale * q};
}

ClassModel camera_fp_class(Rng& rng, double q, const ModalityDegradation& deg) {
  return {0.3 + deg.fp_confidence_boost + deg.confidence_bias + normal(rng, 0.0, 0.8), -1.2 + deg.fp_ambiguity,
          kClassSpread * deg.sample_spread_scale * q};
}

std::vector<McProposal> run_lidar_detector(Rng& rng, std::span<const Box3D> gt, std::span<const Box3D> clutter,
                                           const ModalityDegradation& deg, const SimConfig& cfg) {
  std::vector<McProposal> out;
  for (const auto& box : gt) {
    if (bernoulli(rng, deg.miss_rate)) continue;
    const double range = std::hypot(box.cx, box.cy);
    const double rf = range_factor(range, cfg);
    const double q = lognormal(rng, 0.0, kQualityLogSd);
    // Localization error is drawn independently of the dispersion factor q.
    const double q_loc = lognormal(rng, 0.0, kQualityLogSd);
    auto params = box.to_array();
    for (std::size_t i = 0; i < 7; ++i) {
      params[i] += normal(rng, 0.0, kLidarBoxNoise[i] * deg.tp_noise_scale * q_loc * rf);
    }
    for (std::size_t i = 3; i < 6; ++i) params[i] = std::max(params[i], 0.5);
    const Box3D center = Box3D::from_span(params);
    const ClassModel cls{1.8 - 0.6 * range / cfg.noise_range - 1.0 * std::log(q) + deg.confidence_bias +
                             normal(rng, 0.0, 0.7),
                         -2.5, kClassSpread * deg.sample_spread_scale * q};
    out.push_back(make_lidar_proposal(rng, center, q, rf, deg, cls, cfg));
  }
  const std::size_t n_fp = poisson(rng, deg.fp_rate_per_frame);
  for (std::size_t k = 0; k < n_fp; ++k) {
    const auto [x, y] = random_position(rng, cfg);
    const Box3D center = random_car(rng, cfg, x, y);
    const double rf = range_factor(std::hypot(x, y), cfg);
    const double q = lognormal(rng, kFpQualityLogMean, kFpQualityLogSd);
    out.push_back(make_lidar_proposal(rng, center, q, rf, deg, lidar_fp_class(rng, q, deg), cfg));
  }
  for (const auto& box : clutter) {
    if (!bernoulli(rng, deg.clutter_response)) continue;
    const double rf = range_factor(std::hypot(box.cx, box.cy), cfg);
    const double q = lognormal(rng, kFpQualityLogMean, kFpQualityLogSd);
    auto params = box.to_array();
    for (std::size_t i = 0; i < 7; ++i) params[i] += normal(rng, 0.0, kLidarBoxNoise[i] * deg.tp_noise_scale * q * rf);
    for (std::size_t i = 3; i < 6; ++i) params[i] = std::max(params[i], 0.5);
    out.push_back(make_lidar_proposal(rng, Box3D::from_span(params), q, rf, deg, lidar_fp_class(rng, q, deg), cfg));
  }
  return out;
}

std::array<double, 4> noisy_cwh(Rng& rng, const Box2D& b, double noise) {
  return {0.5 * (b.x1 + b.x2) + normal(rng, 0.0, noise), 0.5 * (b.y1 + b.y2) + normal(rng, 0.0, noise),
          std::max(b.width() + normal(rng, 0.0, noise), 4.0), std::max(b.height() + normal(rng, 0.0, noise), 4.0)};
}

std::vector<McProposal> run_camera_detector(Rng& rng, std::span<const Box3D> gt, std::span<const Box3D> clutter,
                                            const geometry::Calibration& calib,
                                            const ModalityDegradation& deg, const SimConfig& cfg) {
  std::vector<McProposal> out;
  for (const auto& box : gt) {
    const auto projected = geometry::try_project_box3d(box, calib);
    if (!projected) continue;
    if (bernoulli(rng, deg.miss_rate)) continue;
    const double range = std::hypot(box.cx, box.cy);
    const double q = lognormal(rng, 0.0, kQualityLogSd);
    const double size = geometry::diagonal(*projected);
    const double noise = deg.tp_noise_scale * q * (0.5 + 0.03 * size);
    const auto cwh = noisy_cwh(rng, *projected, noise);
    const ClassModel cls{2.4 - 0.5 * range / cfg.noise_range - 1.0 * std::log(q) + deg.confidence_bias +
                             normal(rng, 0.0, 0.6),
                         -2.5, kClassSpread * deg.sample_spread_scale * q};
    out.push_back(make_camera_proposal(rng, cwh, q, deg, cls, cfg));
  }
  const std::size_t n_fp = poisson(rng, deg.fp_rate_per_frame);
  for (std::size_t k = 0; k < n_fp; ++k) {
    const double h = uniform(rng, 20.0, 120.0);
    const double w = h * uniform(rng, 1.2, 2.2);
    const std::array<double, 4> cwh{uniform(rng, 0.5 * w, cfg.image_width - 0.5 * w),
                                    uniform(rng, 0.5 * h, cfg.image_height - 0.5 * h), w, h};
    const double q = lognormal(rng, kFpQualityLogMean, kFpQualityLogSd);
    out.push_back(make_camera_proposal(rng, cwh, q, deg, camera_fp_class(rng, q, deg), cfg));
  }
  for (const auto& box : clutter) {
    const auto projected = geometry::try_project_box3d(box, calib);
    if (!projected) continue;
    if (!bernoulli(rng, deg.clutter_response)) continue;
    const double q = lognormal(rng, kFpQualityLogMean, kFpQualityLogSd);
    const double noise = deg.tp_noise_scale * q * (0.5 + 0.03 * geometry::diagonal(*projected));
    const auto cwh = noisy_cwh(rng, *projected, noise);
    out.push_back(make_camera_proposal(rng, cwh, q, deg, camera_fp_class(rng, q, deg), cfg));
  }
  return out;
}

void validate_modality(const ModalityDegradation& d, const std::string& where) {
  const auto bad = [&](const char* what) { throw SimError("profile " + where + ": " + what); };
  if (!(d.miss_rate >= 0.0 && d.miss_rate <= 1.0)) bad("miss_rate outside [0,1]");
  if (!(d.fp_rate_per_frame >= 0.0)) bad("fp_rate_per_frame < 0");
  if (!(d.tp_noise_scale >= 0.0)) bad("tp_noise_scale < 0");
  if (!(d.sample_spread_scale >= 0.0)) bad("sample_spread_scale < 0");
  if (!(d.clutter_response >= 0.0 && d.clutter_response <= 1.0)) bad("clutter_response outside [0,1]");
  if (!std::isfinite(d.confidence_bias) || !std::isfinite(d.fp_confidence_boost) ||
      !std::isfinite(d.fp_ambiguity)) {
    bad("non-finite logit shift");
  }
}

}  // namespace

void DegradationProfile::validate() const {
  if (name.empty()) throw SimError("profile needs a name");
  validate_modality(lidar, name + ".lidar");
  validate_modality(camera, name + ".camera");
}

std::vector<DegradationProfile> default_profiles() {
  const ModalityDegradation clear_lidar{0.03, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.35};
  const ModalityDegradation clear_camera{0.03, 0.6, 1.0, 1.0, 0.0, 0.0, 0.0, 0.08};
  return {
      {"clear", clear_lidar, clear_camera},
      {"blind", clear_lidar, {0.50, 2.5, 2.0, 2.5, -1.0, 1.5, 0.8, 0.6}},
      {"adversarial", clear_lidar, {0.15, 5.0, 1.4, 1.7, -0.3, 2.5, 0.3, 0.5}},
      {"fog", {0.15, 3.0, 1.5, 1.6, -0.3, 1.2, 0.8, 0.5}, {0.45, 1.5, 2.0, 2.5, -1.0, 0.8, 0.8, 0.5}},
      {"snow", {0.08, 2.0, 1.2, 1.25, -0.1, 0.6, 0.4, 0.45}, {0.15, 1.0, 1.3, 1.4, -0.3, 0.5, 0.4, 0.25}},
  };
}

std::vector<std::string> profile_names() {
  std::vector<std::string> names;
  for (const auto& p : default_profiles()) names.push_back(p.name);
  return names;
}

DegradationProfile profile_by_name(std::string_view name) {
  for (auto& p : default_profiles()) {
    if (p.name == name) return p;
  }
  std::string valid;
  for (const auto& n : profile_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw SimError("unknown profile '" + std::string(name) + "' (valid: " + valid + ")");
}

Frame generate_frame(std::uint64_t seed, const DegradationProfile& profile, std::uint64_t frame_id,
                     const SimConfig& cfg) {
  Frame frame;
  frame.frame_id = frame_id;
  frame.profile_tag = profile.name;
  frame.calib = geometry::Calibration::pinhole(cfg.focal, cfg.principal_u, cfg.principal_v,
                                               cfg.image_width, cfg.image_height, cfg.camera_offset);
  Rng scene_rng = make_rng(seed, frame_id, kScene);
  frame.gt_boxes = generate_scene(scene_rng, cfg);
  const auto clutter = generate_clutter(scene_rng, cfg, frame.gt_boxes);
  Rng lidar_rng = make_rng(seed, frame_id, kLidar);
  frame.lidar_proposals = run_lidar_detector(lidar_rng, frame.gt_boxes, clutter, profile.lidar, cfg);
  Rng camera_rng = make_rng(seed, frame_id, kCamera);
  frame.camera_proposals =
      run_camera_detector(camera_rng, frame.gt_boxes, clutter, frame.calib, profile.camera, cfg);
  return frame;
}

std::vector<Frame> generate_dataset(std::uint64_t seed, const DegradationProfile& profile,
                                    std::size_t n_frames, const SimConfig& cfg, std::size_t threads) {
  profile.validate();
  if (n_frames == 0) throw SimError("n_frames must be >= 1");
  if (cfg.num_samples == 0 || cfg.num_classes < 2) throw SimError("need N >= 1 samples and C >= 2 classes");
  std::vector<Frame> frames(n_frames);
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, n_frames);
  const auto work = [&](std::size_t w) {
    for (std::size_t i = w; i < n_frames; i += workers) {
      frames[i] = generate_frame(seed, profile, cfg.frame_id_offset + i, cfg);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  return frames;
}

Split split_dataset(std::vector<Frame> frames, std::uint64_t seed) {
  std::vector<std::size_t> order(frames.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0, kSplit);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n = frames.size();
  const std::size_t n_train = n * 70 / 100;
  const std::size_t n_val = n * 15 / 100;
  Split out;
  for (std::size_t i = 0; i < n; ++i) {
    Frame& f = frames[order[i]];
    if (i < n_train) {
      out.train.push_back(std::move(f));
    } else if (i < n_train + n_val) {
      out.val.push_back(std::move(f));
    } else {
      out.test.push_back(std::move(f));
    }
  }
  return out;
}

PopulationTable population_stats(std::span<const Frame> frames,
                                 const uncertainty::ValidationStats& stats,
                                 const uncertainty::ScoringConfig& scoring,
                                 const uncertainty::TpThresholds& thresholds) {
  std::array<std::array<PopulationCell, 2>, 2> acc{};
  for (const auto& frame : frames) {
    for (Modality m : {Modality::kLidar, Modality::kCamera}) {
      const auto& raw = frame.proposals(m);
      if (raw.empty()) continue;
      const auto scored = uncertainty::score_proposals(raw, stats, scoring);
      const auto tp = uncertainty::true_positive_mask(scored, frame, m, thresholds);
      for (std::size_t i = 0; i < scored.size(); ++i) {
        auto& cell = acc[m == Modality::kLidar ? 0 : 1][tp[i] ? 0 : 1];
        ++cell.count;
        cell.mean_u_cls += scored[i].u_cls;
        cell.mean_dr_cls += scored[i].dr_cls;
        cell.mean_u_reg += scored[i].u_reg;
        cell.mean_u_reg_raw += scored[i].u_reg_raw;
      }
    }
  }
  PopulationTable table;
  for (std::size_t m = 0; m < 2; ++m) {
    for (std::size_t k = 0; k < 2; ++k) {
      PopulationCell cell = acc[m][k];
      if (cell.count == 0) continue;
      const double n = static_cast<double>(cell.count);
      cell.mean_u_cls /= n;
      cell.mean_dr_cls /= n;
      cell.mean_u_reg /= n;
      cell.mean_u_reg_raw /= n;
      table.cells[m][k] = cell;
    }
  }
  return table;
}

}  // namespace umoe::simgen
