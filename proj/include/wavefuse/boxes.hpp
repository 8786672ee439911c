#pragma once

#include <algorithm>
#include <cmath>

#include "wavefuse/common.hpp"

namespace wavefuse {

// Center-form box normalized to [0,1] relative to image extents.
struct BoundingBox {
  double cx = 0, cy = 0, w = 0, h = 0;

  struct Corners {
    double x0, y0, x1, y1;
  };

  Corners corners() const {
    return {cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
  }

  static BoundingBox from_corners(double x0, double y0, double x1, double y1) {
    if (x1 < x0 || y1 < y0) throw ShapeError("box corners out of order");
    return {(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0};
  }

  double area() const { return w * h; }

  bool valid() const {
    return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h) &&
           cx >= 0 && cx <= 1 && cy >= 0 && cy <= 1 && w > 0 && w <= 1 && h > 0 && h <= 1;
  }
};

// Intersection-over-union; disjoint boxes give 0.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const auto ca = a.corners(), cb = b.corners();
  const double ix = std::max(0.0, std::min(ca.x1, cb.x1) - std::max(ca.x0, cb.x0));
  const double iy = std::max(0.0, std::min(ca.y1, cb.y1) - std::max(ca.y0, cb.y0));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

// Generalized IoU in (-1, 1]: IoU minus the hull penalty
// (hull - union) / hull.
inline double giou(const BoundingBox& a, const BoundingBox& b) {
  const auto ca = a.corners(), cb = b.corners();
  const double ix = std::max(0.0, std::min(ca.x1, cb.x1) - std::max(ca.x0, cb.x0));
  const double iy = std::max(0.0, std::min(ca.y1, cb.y1) - std::max(ca.y0, cb.y0));
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  const double hull_w = std::max(ca.x1, cb.x1) - std::min(ca.x0, cb.x0);
  const double hull_h = std::max(ca.y1, cb.y1) - std::min(ca.y0, cb.y0);
  const double hull = hull_w * hull_h;
  const double iou_v = uni > 0.0 ? inter / uni : 0.0;
  return hull > 0.0 ? iou_v - (hull - uni) / hull : iou_v;
}

}  // namespace wavefuse
