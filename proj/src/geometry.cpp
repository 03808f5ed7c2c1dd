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

#include "umoe/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace umoe::geometry {

namespace {

using std::numbers::pi;

bool all_finite(std::initializer_list<double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double cross(const std::array<double, 2>& o, const std::array<double, 2>& a,
             const std::array<double, 2>& b) {
  return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

std::array<double, 2> segment_line_intersection(const std::array<double, 2>& p,
                                                const std::array<double, 2>& q,
                                                const std::array<double, 2>& a,
                                                const std::array<double, 2>& b) {
  // Intersection of segment pq with the infinite line through ab.
  const double cp = cross(a, b, p);
  const double cq = cross(a, b, q);
  const double t = cp / (cp - cq);
  return {p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])};
}

}  // namespace

double normalize_yaw(double yaw) {
  double r = std::fmod(yaw, 2.0 * pi);
  if (r <= -pi) r += 2.0 * pi;
  if (r > pi) r -= 2.0 * pi;
  return r;
}

Box2D::Box2D(double x1_, double y1_, double x2_, double y2_) : x1(x1_), y1(y1_), x2(x2_), y2(y2_) {
  if (!all_finite({x1, y1, x2, y2}) || !(x1 < x2) || !(y1 < y2)) {
    throw GeometryError(GeometryError::Kind::kInvalidBox, "Box2D requires x1 < x2, y1 < y2, finite");
  }
}

Box3D::Box3D(double cx_, double cy_, double cz_, double length_, double width_, double height_,
             double yaw_)
    : cx(cx_), cy(cy_), cz(cz_), length(length_), width(width_), height(height_) {
  if (!all_finite({cx, cy, cz, length, width, height, yaw_}) || length <= 0.0 || width <= 0.0 ||
      height <= 0.0) {
    throw GeometryError(GeometryError::Kind::kInvalidBox,
                        "Box3D requires positive finite dimensions and finite pose");
  }
  yaw = normalize_yaw(yaw_);
}

Box3D Box3D::from_span(std::span<const double> v) {
  if (v.size() != 7) {
    throw GeometryError(GeometryError::Kind::kInvalidBox, "Box3D needs 7 parameters");
  }
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
}

Box2D box2d_from_span(std::span<const double> v) {
  if (v.size() != 4) {
    throw GeometryError(GeometryError::Kind::kInvalidBox, "Box2D needs 4 parameters");
  }
  return {v[0], v[1], v[2], v[3]};
}

std::array<std::array<double, 2>, 4> Box3D::footprint() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  const std::array<std::array<double, 2>, 4> local{{{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}}};
  std::array<std::array<double, 2>, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {cx + c * local[i][0] - s * local[i][1], cy + s * local[i][0] + c * local[i][1]};
  }
  return out;
}

std::array<std::array<double, 3>, 8> Box3D::corners() const {
  const auto fp = footprint();
  std::array<std::array<double, 3>, 8> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {fp[i][0], fp[i][1], cz - 0.5 * height};
    out[i + 4] = {fp[i][0], fp[i][1], cz + 0.5 * height};
  }
  return out;
}

Calibration::Calibration(const std::array<double, 12>& P_, double w, double h)
    : P(P_), image_width(w), image_height(h) {
  const bool row3_zero = P[8] == 0.0 && P[9] == 0.0 && P[10] == 0.0 && P[11] == 0.0;
  const bool finite = std::all_of(P.begin(), P.end(), [](double v) { return std::isfinite(v); });
  if (row3_zero || !finite || !(w > 0.0) || !(h > 0.0)) {
    throw GeometryError(GeometryError::Kind::kInvalidCalibration,
                        "calibration needs a nonzero third row and positive image size");
  }
}

Calibration Calibration::pinhole(double focal, double cu, double cv, double image_width,
                                 double image_height, std::array<double, 3> t) {
  // K * [R | t] with R mapping (x, y, z)_lidar to (-y, -z, x)_camera.
  const std::array<double, 12> P{cu,  -focal, 0.0,    focal * t[0] + cu * t[2],
                                 cv,  0.0,    -focal, focal * t[1] + cv * t[2],
                                 1.0, 0.0,    0.0,    t[2]};
  return {P, image_width, image_height};
}

std::optional<std::array<double, 2>> project_point(const std::array<double, 3>& p,
                                                   const Calibration& calib) {
  const auto& P = calib.P;
  const double u = P[0] * p[0] + P[1] * p[1] + P[2] * p[2] + P[3];
  const double v = P[4] * p[0] + P[5] * p[1] + P[6] * p[2] + P[7];
  const double w = P[8] * p[0] + P[9] * p[1] + P[10] * p[2] + P[11];
  if (!(w > 0.0)) return std::nullopt;
  return std::array<double, 2>{u / w, v / w};
}

Box2D project_box3d_unclipped(const Box3D& box, const Calibration& calib) {
  double x1 = std::numeric_limits<double>::infinity();
  double y1 = x1;
  double x2 = -x1;
  double y2 = -x1;
  for (const auto& corner : box.corners()) {
    const auto px = project_point(corner, calib);
    if (!px) {
      throw GeometryError(GeometryError::Kind::kBehindCamera, "box corner behind camera");
    }
    x1 = std::min(x1, (*px)[0]);
    y1 = std::min(y1, (*px)[1]);
    x2 = std::max(x2, (*px)[0]);
    y2 = std::max(y2, (*px)[1]);
  }
  return {x1, y1, x2, y2};
}

Box2D project_box3d(const Box3D& box, const Calibration& calib) {
  const Box2D hull = project_box3d_unclipped(box, calib);
  const double x1 = std::clamp(hull.x1, 0.0, calib.image_width);
  const double x2 = std::clamp(hull.x2, 0.0, calib.image_width);
  const double y1 = std::clamp(hull.y1, 0.0, calib.image_height);
  const double y2 = std::clamp(hull.y2, 0.0, calib.image_height);
  if (!(x1 < x2) || !(y1 < y2)) {
    throw GeometryError(GeometryError::Kind::kOutsideImage, "projected box outside image");
  }
  return {x1, y1, x2, y2};
}

std::optional<Box2D> try_project_box3d(const Box3D& box, const Calibration& calib) {
  try {
    return project_box3d(box, calib);
  } catch (const GeometryError&) {
    return std::nullopt;
  }
}

double iou_2d(const Box2D& a, const Box2D& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

double diagonal(const Box2D& b) { return std::hypot(b.width(), b.height()); }

double polygon_area(const Polygon& poly) {
  if (poly.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % poly.size()];
    acc += p[0] * q[1] - q[0] * p[1];
  }
  return 0.5 * std::abs(acc);
}

Polygon clip_convex(const Polygon& subject, const Polygon& clip) {
  Polygon output = subject;
  for (std::size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const auto& a = clip[e];
    const auto& b = clip[(e + 1) % clip.size()];
    Polygon input;
    input.swap(output);
    for (std::size_t i = 0; i < input.size(); ++i) {
      const auto& cur = input[i];
      const auto& prev = input[(i + input.size() - 1) % input.size()];
      const bool cur_in = cross(a, b, cur) >= 0.0;
      const bool prev_in = cross(a, b, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) output.push_back(segment_line_intersection(prev, cur, a, b));
        output.push_back(cur);
      } else if (prev_in) {
        output.push_back(segment_line_intersection(prev, cur, a, b));
      }
    }
  }
  return output;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto fa = a.footprint();
  const auto fb = b.footprint();
  const Polygon pa(fa.begin(), fa.end());
  const Polygon pb(fb.begin(), fb.end());
  return polygon_area(clip_convex(pa, pb));
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double z_overlap = std::min(a.cz + 0.5 * a.height, b.cz + 0.5 * b.height) -
                           std::max(a.cz - 0.5 * a.height, b.cz - 0.5 * b.height);
  if (z_overlap <= 0.0) return 0.0;
  const double inter = bev_intersection_area(a, b) * z_overlap;
  if (inter <= 0.0) return 0.0;
  const double uni = a.volume() + b.volume() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::vector<std::size_t> nms(std::span<const ScoredBox> boxes, double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou_3d(boxes[idx].box, boxes[k].box) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

}  // namespace umoe::geometry
