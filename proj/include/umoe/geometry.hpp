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
#include <vector>

namespace umoe::geometry {

class GeometryError : public std::runtime_error {
 public:
  enum class Kind { kInvalidBox, kInvalidCalibration, kBehindCamera, kOutsideImage };

  GeometryError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Wraps an angle into (-pi, pi].
double normalize_yaw(double yaw);

/// Axis-aligned image box, corners in pixels.
struct Box2D {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  Box2D() = default;
  /// Throws GeometryError(kInvalidBox) unless x1 < x2, y1 < y2 and all finite.
  Box2D(double x1, double y1, double x2, double y2);

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  std::array<double, 4> to_array() const { return {x1, y1, x2, y2}; }

  bool operator==(const Box2D&) const = default;
};

/// Upright 3D box in the LiDAR frame (x forward, y left, z up). Yaw rotates
/// about +z and is normalized at construction.
struct Box3D {
  double cx = 0.0;
  double cy = 0.0;
  double cz = 0.0;
  double length = 1.0;
  double width = 1.0;
  double height = 1.0;
  double yaw = 0.0;

  Box3D() = default;
  Box3D(double cx, double cy, double cz, double length, double width, double height, double yaw);

  double volume() const { return length * width * height; }
  std::array<double, 7> to_array() const { return {cx, cy, cz, length, width, height, yaw}; }
  static Box3D from_span(std::span<const double> v);

  /// Footprint corners, counter-clockwise.
  std::array<std::array<double, 2>, 4> footprint() const;
  std::array<std::array<double, 3>, 8> corners() const;

  bool operator==(const Box3D&) const = default;
};

Box2D box2d_from_span(std::span<const double> v);

/// 3x4 projection from homogeneous LiDAR points to homogeneous pixels.
struct Calibration {
  std::array<double, 12> P{};
  double image_width = 0.0;
  double image_height = 0.0;

  Calibration() = default;
  Calibration(const std::array<double, 12>& P, double image_width, double image_height);

  /// Pinhole camera looking along LiDAR +x, camera axes (right, down, forward)
  /// = (-y, -z, x), optical centre offset by `translation` in camera axes.
  static Calibration pinhole(double focal, double cu, double cv, double image_width,
                             double image_height, std::array<double, 3> translation = {0, 0, 0});
};

double iou_2d(const Box2D& a, const Box2D& b);
double diagonal(const Box2D& b);

/// Axis-aligned hull of the 8 projected corners, clipped to the image.
/// Throws kBehindCamera if any corner has depth <= 0, kOutsideImage if the
/// clipped hull is empty.
Box2D project_box3d(const Box3D& box, const Calibration& calib);
Box2D project_box3d_unclipped(const Box3D& box, const Calibration& calib);
std::optional<Box2D> try_project_box3d(const Box3D& box, const Calibration& calib);

/// Projects a single point; nullopt when depth <= 0.
std::optional<std::array<double, 2>> project_point(const std::array<double, 3>& p,
                                                   const Calibration& calib);

using Polygon = std::vector<std::array<double, 2>>;

double polygon_area(const Polygon& poly);
/// Sutherland-Hodgman clip of `subject` against convex counter-clockwise `clip`.
Polygon clip_convex(const Polygon& subject, const Polygon& clip);

double bev_intersection_area(const Box3D& a, const Box3D& b);
double iou_3d(const Box3D& a, const Box3D& b);

struct ScoredBox {
  Box3D box;
  double score = 0.0;
};

/// Greedy NMS with iou_3d. Returns surviving input indices in descending
/// score order; ties keep the lower input index first.
std::vector<std::size_t> nms(std::span<const ScoredBox> boxes, double iou_threshold);

}  // namespace umoe::geometry
