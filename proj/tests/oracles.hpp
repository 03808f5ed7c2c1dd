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

// Independent reference implementations used by the unit and acceptance
// tests. They share no code paths with the library beyond plain data types.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <vector>

#include "umoe/eval.hpp"
#include "umoe/frame.hpp"
#include "umoe/fusion.hpp"
#include "umoe/geometry.hpp"
#include "umoe/nn.hpp"

namespace oracle {

using umoe::geometry::Box2D;
using umoe::geometry::Box3D;
using umoe::geometry::Calibration;

// ---------------------------------------------------------------------------
// Geometry

inline bool inside(const Box3D& b, double x, double y, double z) {
  const double dx = x - b.cx;
  const double dy = y - b.cy;
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double u = c * dx + s * dy;
  const double v = -s * dx + c * dy;
  return std::abs(u) <= 0.5 * b.length && std::abs(v) <= 0.5 * b.width && std::abs(z - b.cz) <= 0.5 * b.height;
}

/// Monte-Carlo 3D IoU: uniform points in the joint bounding cuboid.
inline double mc_iou_3d(const Box3D& a, const Box3D& b, std::size_t n, std::uint64_t seed) {
  const auto bounds = [](const Box3D& box) {
    const double r = 0.5 * std::hypot(box.length, box.width);
    return std::array<double, 6>{box.cx - r, box.cx + r, box.cy - r, box.cy + r, box.cz - 0.5 * box.height,
                                 box.cz + 0.5 * box.height};
  };
  const auto ba = bounds(a);
  const auto bb = bounds(b);
  const double x0 = std::min(ba[0], bb[0]), x1 = std::max(ba[1], bb[1]);
  const double y0 = std::min(ba[2], bb[2]), y1 = std::max(ba[3], bb[3]);
  const double z0 = std::min(ba[4], bb[4]), z1 = std::max(ba[5], bb[5]);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1), uz(z0, z1);
  std::size_t in_a = 0, in_b = 0, in_both = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ux(rng), y = uy(rng), z = uz(rng);
    const bool pa = inside(a, x, y, z);
    const bool pb = inside(b, x, y, z);
    in_a += pa;
    in_b += pb;
    in_both += pa && pb;
  }
  const double uni = static_cast<double>(in_a + in_b - in_both);
  return uni == 0.0 ? 0.0 : static_cast<double>(in_both) / uni;
}

/// Hull of the 8 corners pushed through P; nullopt when any depth <= 0.
inline std::optional<std::array<double, 4>> projected_hull(const Box3D& b, const Calibration& calib) {
  std::array<double, 4> hull{INFINITY, INFINITY, -INFINITY, -INFINITY};
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  for (int i = 0; i < 8; ++i) {
    const double u = (i & 1 ? 0.5 : -0.5) * b.length;
    const double v = (i & 2 ? 0.5 : -0.5) * b.width;
    const double w = (i & 4 ? 0.5 : -0.5) * b.height;
    const double X = b.cx + c * u - s * v;
    const double Y = b.cy + s * u + c * v;
    const double Z = b.cz + w;
    const auto& P = calib.P;
    const double px = P[0] * X + P[1] * Y + P[2] * Z + P[3];
    const double py = P[4] * X + P[5] * Y + P[6] * Z + P[7];
    const double pz = P[8] * X + P[9] * Y + P[10] * Z + P[11];
    if (pz <= 0.0) return std::nullopt;
    hull[0] = std::min(hull[0], px / pz);
    hull[1] = std::min(hull[1], py / pz);
    hull[2] = std::max(hull[2], px / pz);
    hull[3] = std::max(hull[3], py / pz);
  }
  return hull;
}

// ---------------------------------------------------------------------------
// AP: recompute matching from scratch at every score threshold.

struct SweepPoint {
  double recall;
  double precision;
};

inline std::optional<double> ap_sweep(std::span<const umoe::Detection> dets, std::span<const umoe::Frame> frames,
                                      umoe::eval::Difficulty bin, double iou_thr = 0.7,
                                      const umoe::eval::DifficultyThresholds& t = {}) {
  const double min_h = t.min_height(bin);
  const auto level = static_cast<int>(bin);
  std::unordered_map<std::uint64_t, std::size_t> index;
  for (std::size_t f = 0; f < frames.size(); ++f) index[frames[f].frame_id] = f;

  const auto height = [](const Box3D& b, const Calibration& calib) -> double {
    const auto h = projected_hull(b, calib);
    if (!h) return 0.0;
    const double y1 = std::max((*h)[1], 0.0);
    const double y2 = std::min((*h)[3], calib.image_height);
    const double x1 = std::max((*h)[0], 0.0);
    const double x2 = std::min((*h)[2], calib.image_width);
    if (!(y2 > y1) || !(x2 > x1)) return 0.0;
    return y2 - y1;
  };
  const auto gt_level = [&](double h) {
    if (h >= t.easy) return 0;
    if (h >= t.moderate) return 1;
    if (h >= t.hard) return 2;
    return 3;
  };

  std::size_t num_gt = 0;
  std::vector<std::vector<bool>> valid(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (const auto& g : frames[f].gt_boxes) {
      const bool v = gt_level(height(g, frames[f].calib)) <= level;
      valid[f].push_back(v);
      num_gt += v;
    }
  }
  if (num_gt == 0) return std::nullopt;

  std::vector<double> thresholds;
  for (const auto& d : dets) thresholds.push_back(d.score);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::vector<SweepPoint> curve;
  for (double tau : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t f = 0; f < frames.size(); ++f) {
      std::vector<std::size_t> kept;
      for (std::size_t d = 0; d < dets.size(); ++d) {
        if (dets[d].score >= tau && index.at(dets[d].frame_id) == f) kept.push_back(d);
      }
      std::stable_sort(kept.begin(), kept.end(),
                       [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
      const auto& gts = frames[f].gt_boxes;
      std::vector<bool> used(gts.size(), false);
      for (std::size_t d : kept) {
        int best_v = -1, best_i = -1;
        double iou_v = -1.0, iou_i = -1.0;
        for (std::size_t g = 0; g < gts.size(); ++g) {
          if (used[g]) continue;
          const double iou = umoe::geometry::iou_3d(dets[d].box, gts[g]);
          if (iou < iou_thr) continue;
          if (valid[f][g] && iou > iou_v) {
            iou_v = iou;
            best_v = static_cast<int>(g);
          } else if (!valid[f][g] && iou > iou_i) {
            iou_i = iou;
            best_i = static_cast<int>(g);
          }
        }
        if (best_v >= 0) {
          used[best_v] = true;
          ++tp;
        } else if (best_i >= 0) {
          used[best_i] = true;
        } else if (height(dets[d].box, frames[f].calib) >= min_h) {
          ++fp;
        }
      }
    }
    if (tp + fp > 0) {
      curve.push_back({static_cast<double>(tp) / static_cast<double>(num_gt),
                       static_cast<double>(tp) / static_cast<double>(tp + fp)});
    }
  }
  double acc = 0.0;
  for (int i = 1; i <= 40; ++i) {
    const double r = i / 40.0;
    double best = 0.0;
    for (const auto& p : curve) {
      if (p.recall >= r - 1e-12) best = std::max(best, p.precision);
    }
    acc += best;
  }
  return 100.0 * acc / 40.0;
}

// ---------------------------------------------------------------------------
// Statistics

/// Two-sided Student-t p-value via composite Simpson integration of the pdf.
inline double t_two_sided_p(double t, double df, int intervals = 200000) {
  const double log_norm = std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) - 0.5 * std::log(df * std::numbers::pi);
  const auto pdf = [&](double x) { return std::exp(log_norm - 0.5 * (df + 1.0) * std::log1p(x * x / df)); };
  const double a = 0.0;
  const double b = std::abs(t);
  const double h = (b - a) / intervals;
  double acc = pdf(a) + pdf(b);
  for (int i = 1; i < intervals; ++i) acc += pdf(a + i * h) * (i % 2 ? 4.0 : 2.0);
  const double central = acc * h / 3.0;  // P(0 <= X <= |t|)
  return 1.0 - 2.0 * central;
}

// ---------------------------------------------------------------------------
// Networks

using Matrix = std::vector<std::vector<double>>;  // rows x channels

inline Matrix affine(const Matrix& x, const umoe::nn::Linear& layer) {
  const std::size_t out = layer.out_channels();
  const std::size_t in = layer.in_channels();
  Matrix y(x.size(), std::vector<double>(out, 0.0));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = layer.bias.value[o];
      for (std::size_t i = 0; i < in; ++i) acc += layer.weight.value[o * in + i] * x[r][i];
      y[r][o] = acc;
    }
  }
  return y;
}

inline Matrix relu(Matrix x) {
  for (auto& row : x) {
    for (double& v : row) v = std::max(v, 0.0);
  }
  return x;
}

inline Matrix resblock(const Matrix& x, const umoe::nn::ResBlock& b) {
  Matrix h = affine(relu(affine(x, b.conv1)), b.conv2);
  const Matrix sc = b.has_proj ? affine(x, b.proj) : x;
  for (std::size_t r = 0; r < h.size(); ++r) {
    for (std::size_t c = 0; c < h[r].size(); ++c) h[r][c] += sc[r][c];
  }
  return b.output_relu ? relu(h) : h;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double bce(double z, double t) {
  const double p = sigmoid(z);
  return -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
}

/// Flattened forward pass of the UMoE experts and gates.
inline std::pair<std::vector<double>, std::vector<double>> umoe_forward(const umoe::fusion::UmoeNetwork& net,
                                                                        const Matrix& tl, const Matrix& ti) {
  Matrix fl = tl;
  for (const auto& b : net.expert_lidar) fl = resblock(fl, b);
  Matrix fi = ti;
  for (const auto& b : net.expert_camera) fi = resblock(fi, b);
  Matrix joint(fl.size());
  for (std::size_t r = 0; r < fl.size(); ++r) {
    joint[r] = fl[r];
    joint[r].insert(joint[r].end(), fi[r].begin(), fi[r].end());
  }
  const Matrix gl = resblock(joint, net.gate_lidar);
  const Matrix gi = resblock(joint, net.gate_camera);
  std::vector<double> sl, si;
  for (std::size_t r = 0; r < joint.size(); ++r) {
    sl.push_back(sigmoid(gl[r][0]));
    si.push_back(sigmoid(gi[r][0]));
  }
  return {sl, si};
}

// ---------------------------------------------------------------------------
// Finite differences

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Entries whose +-h evaluations crossed a ReLU or max-pool kink.
  std::size_t skipped = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Loss value plus the branch signature of the graph that produced it.
struct Probe {
  double loss = 0.0;
  std::uint64_t branches = 0;
};

/// Central differences of `probe().loss` w.r.t. every entry of every
/// parameter, compared with the analytic gradient already stored in the
/// parameters. Relative error is |a - n| / max(|a|, |n|, floor), where floor
/// is the smallest derivative central differences resolve to four digits in
/// double precision: 1e4 * eps * max(1, |loss|) / h. Entries whose shifted
/// evaluations change the branch signature are not differentiable at this step
/// size and are counted as skipped.
inline GradCheck check_gradients(std::span<umoe::nn::Parameter* const> params, const std::function<Probe()>& probe,
                                 double h = 1e-4) {
  GradCheck out;
  const Probe base = probe();
  const double floor =
      1e4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(base.loss)) / h;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& values = params[p]->value.storage();
    const auto& analytic = params[p]->value.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + h;
      const Probe up = probe();
      values[i] = orig - h;
      const Probe down = probe();
      values[i] = orig;
      if (up.branches != base.branches || down.branches != base.branches) {
        ++out.skipped;
        continue;
      }
      const double numeric = (up.loss - down.loss) / (2.0 * h);
      const double a = analytic[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst_param = p;
        out.worst_index = i;
        out.worst_analytic = a;
        out.worst_numeric = numeric;
      }
    }
  }
  return out;
}

}  // namespace oracle
