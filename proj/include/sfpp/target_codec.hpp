#pragma once

#include <array>
#include <string>
#include <utility>

#include "sfpp/box.hpp"
#include "sfpp/tensor.hpp"

namespace sfpp {

enum class QualityMode { kPss, kIou, kNone };

QualityMode parse_quality_mode(const std::string& s);
std::string to_string(QualityMode m);

// Placement of the score grid inside the search patch: cell (x, y) maps to
// pixel (offset + x * stride, offset + y * stride).
struct ScoreGeometry {
  int size = 0;
  int stride = 8;
  double offset = 4.0;

  // Literal placement with offset floor(s/2).
  static ScoreGeometry literal(int size, int stride) { return {size, stride, double(stride / 2)}; }

  std::pair<double, double> cell_to_pixel(int x, int y) const {
    return {offset + double(x) * stride, offset + double(y) * stride};
  }
};

// (floor(s/2) + x*s, floor(s/2) + y*s)
std::pair<double, double> map_feature_to_image(int x, int y, int stride);

struct TargetMaps {
  Tensor<double> cls_star;      // [N,N] in {0,1}
  Tensor<double> quality_star;  // [N,N] in [0,1]
  Tensor<double> reg_star;      // [4,N,N] (l*, t*, r*, b*)
  int n_pos = 0;
  ScoreGeometry geometry;
  QualityMode quality_mode = QualityMode::kPss;
};

struct EncodeOptions {
  QualityMode quality_mode = QualityMode::kPss;
  // Fraction of the box half-extent trimmed from each side before testing
  // membership; 0 keeps the full box.
  double positive_shrink = 0.0;
};

// Distance floor used before PSS so an edge-positive cell does not divide by zero.
inline constexpr double kDistanceFloor = 1e-6;

TargetMaps assign_and_encode(const BBox& gt, const ScoreGeometry& geometry,
                             const EncodeOptions& options = {});
TargetMaps assign_and_encode(const BBox& gt, int n, int stride,
                             const EncodeOptions& options = {});

// All-negative maps (negative pairs).
TargetMaps empty_targets(const ScoreGeometry& geometry, QualityMode mode);

double pss(double l, double t, double r, double b);

BBox decode_box(int x, int y, const std::array<double, 4>& ltrb, const ScoreGeometry& geometry);
BBox decode_box(int x, int y, const std::array<double, 4>& ltrb, int stride);

}  // namespace sfpp
