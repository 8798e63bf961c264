#include "hiermil/box.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hiermil {

void check_box(const BoundingBox& b, const char* what) {
  const bool finite = std::isfinite(b.x_min) && std::isfinite(b.y_min) &&
                      std::isfinite(b.x_max) && std::isfinite(b.y_max);
  if (!finite || !b.valid()) {
    throw DataError(std::string(what) + ": degenerate box [" +
                    format_double(b.x_min) + "," + format_double(b.y_min) +
                    "," + format_double(b.x_max) + "," +
                    format_double(b.y_max) + "]");
  }
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return inter / uni;
}

}  // namespace hiermil
