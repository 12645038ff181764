#include "sfpp/target_codec.hpp"

#include <algorithm>
#include <cmath>

#include "sfpp/errors.hpp"

namespace sfpp {

QualityMode parse_quality_mode(const std::string& s) {
  if (s == "pss" || s == "PSS") return QualityMode::kPss;
  if (s == "iou" || s == "IoU" || s == "IOU") return QualityMode::kIou;
  if (s == "none") return QualityMode::kNone;
  throw ConfigError("unknown quality mode '" + s + "' (expected pss, iou or none)");
}

std::string to_string(QualityMode m) {
  switch (m) {
    case QualityMode::kPss: return "pss";
    case QualityMode::kIou: return "iou";
    case QualityMode::kNone: return "none";
  }
  return "pss";
}

std::pair<double, double> map_feature_to_image(int x, int y, int stride) {
  return ScoreGeometry::literal(1, stride).cell_to_pixel(x, y);
}

double pss(double l, double t, double r, double b) {
  if (!(l > 0 && t > 0 && r > 0 && b > 0))
    throw InvalidArgument("pss: distances must be positive");
  return std::sqrt(std::min(l, r) / std::max(l, r) * (std::min(t, b) / std::max(t, b)));
}

TargetMaps empty_targets(const ScoreGeometry& geometry, QualityMode mode) {
  const int n = geometry.size;
  if (n < 1) throw ShapeError("target maps need a positive grid size");
  TargetMaps maps;
  maps.cls_star = Tensor<double>(Shape{n, n});
  maps.quality_star = Tensor<double>(Shape{n, n});
  maps.reg_star = Tensor<double>(Shape{4, n, n});
  maps.geometry = geometry;
  maps.quality_mode = mode;
  return maps;
}

TargetMaps assign_and_encode(const BBox& gt, const ScoreGeometry& geometry, const EncodeOptions& options) {
  if (!gt.valid()) throw InvalidArgument("assign_and_encode: invalid ground-truth box");
  TargetMaps maps = empty_targets(geometry, options.quality_mode);
  const double shrink = std::clamp(options.positive_shrink, 0.0, 1.0);
  const double hx = 0.5 * gt.width() * (1.0 - shrink), hy = 0.5 * gt.height() * (1.0 - shrink);
  const BBox region{gt.cx() - hx, gt.cy() - hy, gt.cx() + hx, gt.cy() + hy};

  const int n = geometry.size;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const auto [px, py] = geometry.cell_to_pixel(x, y);
      if (px < region.x0 || px > region.x1 || py < region.y0 || py > region.y1) continue;
      const double l = px - gt.x0, t = py - gt.y0, r = gt.x1 - px, b = gt.y1 - py;
      maps.cls_star(y, x) = 1.0;
      maps.reg_star(0, y, x) = l;
      maps.reg_star(1, y, x) = t;
      maps.reg_star(2, y, x) = r;
      maps.reg_star(3, y, x) = b;
      switch (options.quality_mode) {
        case QualityMode::kPss:
          maps.quality_star(y, x) = pss(std::max(l, kDistanceFloor), std::max(t, kDistanceFloor),
                                        std::max(r, kDistanceFloor), std::max(b, kDistanceFloor));
          break;
        case QualityMode::kIou:
          // The encoded box decodes to gt exactly; the loss replaces this with
          // IoU(predicted, gt) at training time.
          maps.quality_star(y, x) = 1.0;
          break;
        case QualityMode::kNone:
          break;
      }
      ++maps.n_pos;
    }
  return maps;
}

TargetMaps assign_and_encode(const BBox& gt, int n, int stride, const EncodeOptions& options) {
  return assign_and_encode(gt, ScoreGeometry::literal(n, stride), options);
}

BBox decode_box(int x, int y, const std::array<double, 4>& ltrb, const ScoreGeometry& geometry) {
  const auto [px, py] = geometry.cell_to_pixel(x, y);
  return {px - ltrb[0], py - ltrb[1], px + ltrb[2], py + ltrb[3]};
}

BBox decode_box(int x, int y, const std::array<double, 4>& ltrb, int stride) {
  return decode_box(x, y, ltrb, ScoreGeometry::literal(1, stride));
}

}  // namespace sfpp
