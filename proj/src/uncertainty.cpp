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

#include "umoe/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

namespace umoe {

std::string_view to_string(Modality m) { return m == Modality::kLidar ? "lidar" : "camera"; }

Modality modality_from_string(std::string_view name) {
  if (name == "lidar") return Modality::kLidar;
  if (name == "camera") return Modality::kCamera;
  throw std::invalid_argument("unknown modality '" + std::string(name) + "'");
}

void McProposal::validate() const {
  if (samples.empty()) throw std::invalid_argument("McProposal needs at least one sample");
  const std::size_t b = box_size(modality);
  const std::size_t c = samples.front().class_probs.size();
  if (c < 2) throw std::invalid_argument("McProposal needs at least two classes");
  if (data_var.size() != b) throw std::invalid_argument("data_var size does not match box size");
  for (double v : data_var) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("data_var must be >= 0");
  }
  for (const auto& sample : samples) {
    if (sample.box.size() != b) throw std::invalid_argument("sample box size mismatch");
    if (sample.class_probs.size() != c) throw std::invalid_argument("class count mismatch");
    double sum = 0.0;
    for (double p : sample.class_probs) {
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("class probability out of [0,1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("class probabilities must sum to 1");
    for (double v : sample.box) {
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite box parameter");
    }
  }
}

}  // namespace umoe

namespace umoe::uncertainty {

namespace {

using json = nlohmann::json;

constexpr std::size_t kYawIndex = 6;

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double population_std(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

json stats_to_json(const ModalityStats& s) {
  return json{{"mu_u", s.mu_u},         {"sigma_u", s.sigma_u},     {"mu_s", s.mu_s},
              {"sigma_s", s.sigma_s},   {"mu_reg", s.mu_reg},       {"sigma_reg", s.sigma_reg},
              {"tp_count", s.tp_count}, {"fallback", s.fallback}};
}

ModalityStats stats_from_json(const json& j) {
  ModalityStats s;
  s.mu_u = j.at("mu_u").get<double>();
  s.sigma_u = j.at("sigma_u").get<double>();
  s.mu_s = j.at("mu_s").get<double>();
  s.sigma_s = j.at("sigma_s").get<double>();
  s.mu_reg = j.at("mu_reg").get<double>();
  s.sigma_reg = j.at("sigma_reg").get<double>();
  s.tp_count = j.value("tp_count", std::size_t{0});
  s.fallback = j.value("fallback", false);
  return s;
}

// Sample boxes with yaw unwrapped around the circular mean so the covariance
// does not see the +-pi seam.
std::vector<std::vector<double>> unwrapped_boxes(const McProposal& p, double mean_yaw) {
  std::vector<std::vector<double>> boxes;
  boxes.reserve(p.samples.size());
  for (const auto& s : p.samples) {
    boxes.push_back(s.box);
    if (p.modality == Modality::kLidar) {
      boxes.back()[kYawIndex] = mean_yaw + geometry::normalize_yaw(s.box[kYawIndex] - mean_yaw);
    }
  }
  return boxes;
}

}  // namespace

ModalityStats ModalityStats::defaults(std::size_t num_classes) {
  const double max_entropy = std::log(static_cast<double>(std::max<std::size_t>(num_classes, 2)));
  ModalityStats s;
  s.mu_u = max_entropy / 2.0;
  s.sigma_u = max_entropy / 4.0;
  s.mu_s = 0.5;
  s.sigma_s = 0.25;
  s.mu_reg = 0.0;
  s.sigma_reg = 1.0;
  s.fallback = true;
  return s;
}

const ModalityStats& ValidationStats::at(Modality m) const {
  const auto& slot = m == Modality::kLidar ? lidar : camera;
  if (!slot) {
    throw UncertaintyError(UncertaintyError::Kind::kMissingStats,
                           "validation stats missing for modality " + std::string(to_string(m)));
  }
  return *slot;
}

std::string ValidationStats::to_json() const {
  json j;
  j["format"] = "umoe-validation-stats";
  j["version"] = kVersion;
  if (lidar) j["lidar"] = stats_to_json(*lidar);
  if (camera) j["camera"] = stats_to_json(*camera);
  return j.dump(2);
}

ValidationStats ValidationStats::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.value("version", 0) != kVersion) {
      throw UncertaintyError(UncertaintyError::Kind::kBadFormat, "unsupported stats version");
    }
    ValidationStats out;
    if (j.contains("lidar")) out.lidar = stats_from_json(j.at("lidar"));
    if (j.contains("camera")) out.camera = stats_from_json(j.at("camera"));
    return out;
  } catch (const json::exception& e) {
    throw UncertaintyError(UncertaintyError::Kind::kBadFormat, std::string("stats.json: ") + e.what());
  }
}

std::vector<double> mc_mean_probs(const McProposal& p) {
  std::vector<double> mean(p.num_classes(), 0.0);
  for (const auto& s : p.samples) {
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += s.class_probs[c];
  }
  const double n = static_cast<double>(p.samples.size());
  for (double& v : mean) v /= n;
  return mean;
}

std::vector<double> mc_mean_box(const McProposal& p) {
  const std::size_t b = box_size(p.modality);
  std::vector<double> mean(b, 0.0);
  double sin_sum = 0.0;
  double cos_sum = 0.0;
  for (const auto& s : p.samples) {
    for (std::size_t i = 0; i < b; ++i) mean[i] += s.box[i];
    if (p.modality == Modality::kLidar) {
      sin_sum += std::sin(s.box[kYawIndex]);
      cos_sum += std::cos(s.box[kYawIndex]);
    }
  }
  const double n = static_cast<double>(p.samples.size());
  for (double& v : mean) v /= n;
  if (p.modality == Modality::kLidar) {
    mean[kYawIndex] = geometry::normalize_yaw(std::atan2(sin_sum, cos_sum));
  }
  return mean;
}

double entropy_score(std::span<const double> mean_probs) {
  double h = 0.0;
  for (double s : mean_probs) {
    if (s > 0.0) h -= s * std::log(s);
  }
  return std::max(h, 0.0);
}

double foreground_confidence(std::span<const double> mean_probs) {
  if (mean_probs.size() < 2) return mean_probs.empty() ? 0.0 : mean_probs.front();
  return *std::max_element(mean_probs.begin(), mean_probs.end() - 1);
}

double deviation_ratio(double u_cls, double s, const ModalityStats& st) {
  const double factor_u = st.mu_u / (st.mu_u + std::max(0.0, u_cls - st.mu_u - st.sigma_u));
  const double factor_s = st.mu_s / (st.mu_s + std::max(0.0, -(s - st.mu_s - st.sigma_s)));
  // mu_u = 0 (a perfectly confident validation set) makes factor_u 0/0 on the
  // inactive hinge; the hinge is inactive there, so the factor is 1.
  const double fu = std::isfinite(factor_u) ? factor_u : 1.0;
  const double fs = std::isfinite(factor_s) ? factor_s : 1.0;
  return fu * fs;
}

double deviation_ratio(double u_cls, double s, Modality m, const ValidationStats& stats) {
  return deviation_ratio(u_cls, s, stats.at(m));
}

double total_variance(std::span<const std::vector<double>> boxes) {
  if (boxes.empty()) return 0.0;
  const std::size_t b = boxes.front().size();
  const double n = static_cast<double>(boxes.size());
  double trace = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    double mean = 0.0;
    for (const auto& box : boxes) mean += box[i];
    mean /= n;
    double acc = 0.0;
    for (const auto& box : boxes) acc += (box[i] - mean) * (box[i] - mean);
    trace += acc / n;
  }
  return trace;
}

double data_variance_term(const McProposal& p, DataVarianceMode mode, std::size_t num_samples,
                          std::uint64_t rng_seed) {
  if (mode == DataVarianceMode::kDeterministic || num_samples == 0) {
    return std::accumulate(p.data_var.begin(), p.data_var.end(), 0.0);
  }
  std::seed_seq seq{static_cast<std::uint32_t>(rng_seed), static_cast<std::uint32_t>(rng_seed >> 32)};
  std::mt19937_64 rng(seq);
  const auto center = mc_mean_box(p);
  const double n = static_cast<double>(num_samples);
  double trace = 0.0;
  for (std::size_t i = 0; i < p.data_var.size(); ++i) {
    if (p.data_var[i] == 0.0) continue;
    std::normal_distribution<double> dist(center[i], std::sqrt(p.data_var[i]));
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t k = 0; k < num_samples; ++k) {
      const double x = dist(rng) - center[i];
      sum += x;
      sum_sq += x * x;
    }
    const double m = sum / n;
    trace += sum_sq / n - m * m;
  }
  return trace;
}

double raw_regression_score(const McProposal& p, const ScoringConfig& cfg,
                            std::uint64_t proposal_salt) {
  const auto mean = mc_mean_box(p);
  const double mean_yaw = p.modality == Modality::kLidar ? mean[kYawIndex] : 0.0;
  const auto boxes = unwrapped_boxes(p, mean_yaw);
  double u = total_variance(boxes) +
             data_variance_term(p, cfg.data_variance_mode, cfg.data_variance_samples,
                                cfg.seed * 0x9E3779B97F4A7C15ULL + proposal_salt);
  if (p.modality == Modality::kCamera) {
    u /= geometry::diagonal(geometry::box2d_from_span(mean));
  }
  return u;
}

double standardize(double raw, const ModalityStats& stats) {
  return (raw - stats.mu_reg) / std::max(stats.sigma_reg, 1e-9);
}

double regression_score(const McProposal& p, const ValidationStats& stats,
                        const ScoringConfig& cfg, std::uint64_t proposal_salt) {
  const auto& st = stats.at(p.modality);
  return standardize(raw_regression_score(p, cfg, proposal_salt), st);
}

ScoredProposal score_unstandardized(const McProposal& p, std::size_t index,
                                    const ScoringConfig& cfg) {
  ScoredProposal out;
  out.modality = p.modality;
  const auto mean = mc_mean_box(p);
  if (p.modality == Modality::kLidar) {
    out.mean_box = geometry::Box3D::from_span(mean);
  } else {
    out.mean_box = geometry::box2d_from_span(mean);
  }
  const auto probs = mc_mean_probs(p);
  out.s = foreground_confidence(probs);
  out.u_cls = entropy_score(probs);
  out.u_reg_raw = raw_regression_score(p, cfg, index);
  out.u_reg = out.u_reg_raw;
  out.dr_cls = 1.0;
  out.source_index = index;
  return out;
}

ScoredProposal score_proposal(const McProposal& p, std::size_t index, const ValidationStats& stats,
                              const ScoringConfig& cfg) {
  const auto& st = stats.at(p.modality);
  ScoredProposal out = score_unstandardized(p, index, cfg);
  out.dr_cls = deviation_ratio(out.u_cls, out.s, st);
  out.u_reg = standardize(out.u_reg_raw, st);
  return out;
}

std::vector<ScoredProposal> score_proposals(std::span<const McProposal> proposals,
                                            const ValidationStats& stats,
                                            const ScoringConfig& cfg) {
  std::vector<ScoredProposal> out;
  out.reserve(proposals.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    out.push_back(score_proposal(proposals[i], i, stats, cfg));
  }
  return out;
}

std::vector<bool> true_positive_mask(std::span<const ScoredProposal> proposals,
                                     const Frame& frame, Modality modality,
                                     const TpThresholds& thresholds) {
  std::vector<std::size_t> order(proposals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return proposals[a].s > proposals[b].s; });

  std::vector<std::optional<geometry::Box2D>> gt_2d;
  if (modality == Modality::kCamera) {
    for (const auto& gt : frame.gt_boxes) gt_2d.push_back(geometry::try_project_box3d(gt, frame.calib));
  }

  std::vector<bool> gt_used(frame.gt_boxes.size(), false);
  std::vector<bool> tp(proposals.size(), false);
  for (std::size_t idx : order) {
    double best = -1.0;
    std::size_t best_gt = 0;
    for (std::size_t g = 0; g < frame.gt_boxes.size(); ++g) {
      if (gt_used[g]) continue;
      double iou = 0.0;
      if (modality == Modality::kLidar) {
        iou = geometry::iou_3d(proposals[idx].box3d(), frame.gt_boxes[g]);
      } else if (gt_2d[g]) {
        iou = geometry::iou_2d(proposals[idx].box2d(), *gt_2d[g]);
      }
      if (iou > best) {
        best = iou;
        best_gt = g;
      }
    }
    const double thr = modality == Modality::kLidar ? thresholds.lidar_iou : thresholds.camera_iou;
    if (best >= thr) {
      gt_used[best_gt] = true;
      tp[idx] = true;
    }
  }
  return tp;
}

ValidationStats compute_validation_stats(std::span<const Frame> frames, const ScoringConfig& cfg,
                                         const TpThresholds& thresholds) {
  ValidationStats out;
  for (Modality m : {Modality::kLidar, Modality::kCamera}) {
    std::vector<double> u_cls;
    std::vector<double> s;
    std::vector<double> u_reg;
    std::size_t num_classes = 0;
    for (const auto& frame : frames) {
      const auto& raw = frame.proposals(m);
      std::vector<ScoredProposal> scored;
      scored.reserve(raw.size());
      for (std::size_t i = 0; i < raw.size(); ++i) {
        scored.push_back(score_unstandardized(raw[i], i, cfg));
        num_classes = std::max(num_classes, raw[i].num_classes());
      }
      const auto tp = true_positive_mask(scored, frame, m, thresholds);
      for (std::size_t i = 0; i < scored.size(); ++i) {
        if (!tp[i]) continue;
        u_cls.push_back(scored[i].u_cls);
        s.push_back(scored[i].s);
        u_reg.push_back(scored[i].u_reg_raw);
      }
    }
    if (u_cls.empty()) {
      out.slot(m) = ModalityStats::defaults(num_classes == 0 ? 2 : num_classes);
      continue;
    }
    ModalityStats st;
    st.mu_u = mean_of(u_cls);
    st.sigma_u = population_std(u_cls);
    st.mu_s = mean_of(s);
    st.sigma_s = population_std(s);
    st.mu_reg = mean_of(u_reg);
    st.sigma_reg = population_std(u_reg);
    st.tp_count = u_cls.size();
    st.fallback = false;
    out.slot(m) = st;
  }
  return out;
}

}  // namespace umoe::uncertainty
