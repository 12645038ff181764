#pragma once

#include <algorithm>
#include <cmath>
#include <ostream>

namespace sfpp {

// Axis-aligned box in continuous pixel coordinates; pixel (i, j) covers
// [j, j+1) x [i, i+1).
struct BBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  double cx() const { return 0.5 * (x0 + x1); }
  double cy() const { return 0.5 * (y0 + y1); }
  bool valid() const { return std::isfinite(x0) && std::isfinite(y0) && std::isfinite(x1) &&
                              std::isfinite(y1) && x1 > x0 && y1 > y0; }

  static BBox from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
  }

  bool operator==(const BBox&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const BBox& b) {
  return os << '(' << b.x0 << ',' << b.y0 << ',' << b.x1 << ',' << b.y1 << ')';
}

inline double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return (w > 0 && h > 0) ? w * h : 0.0;
}

inline double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

}  // namespace sfpp
