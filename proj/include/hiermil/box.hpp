#pragma once

#include <tuple>

#include "hiermil/common.hpp"

namespace hiermil {

// Axis-aligned box in continuous image coordinates. Half-open convention:
// area is (x_max-x_min)*(y_max-y_min), no +1 raster correction.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool valid() const { return x_min < x_max && y_min < y_max; }
  double area() const { return (x_max - x_min) * (y_max - y_min); }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline bool box_less(const BoundingBox& a, const BoundingBox& b) {
  return std::tie(a.x_min, a.y_min, a.x_max, a.y_max) <
         std::tie(b.x_min, b.y_min, b.x_max, b.y_max);
}

void check_box(const BoundingBox& b, const char* what);

// Intersection-over-union in [0, 1]; 0 for disjoint boxes, 1 iff identical.
double iou(const BoundingBox& a, const BoundingBox& b);

}  // namespace hiermil
