#include "sfpp/anchor.hpp"

#include <cmath>

namespace sfpp {

BBox anchor_box(const AnchorConfig& cfg, const ScoreGeometry& geometry, int k, int x, int y) {
  const int nr = int(cfg.ratios.size());
  const double ratio = cfg.ratios[size_t(k % nr)];
  const double side = cfg.base_size * cfg.scales[size_t(k / nr)];
  const auto [px, py] = geometry.cell_to_pixel(x, y);
  return BBox::from_center(px, py, side * std::sqrt(ratio), side / std::sqrt(ratio));
}

BBox anchor_decode(const BBox& anchor, const std::array<double, 4>& o) {
  if (!anchor.valid()) throw InvalidArgument("anchor_decode: invalid anchor");
  const double w = anchor.width() * std::exp(o[2]);
  const double h = anchor.height() * std::exp(o[3]);
  if (!std::isfinite(w) || !std::isfinite(h)) throw NumericError("anchor_decode: size overflow");
  return BBox::from_center(anchor.cx() + o[0] * anchor.width(), anchor.cy() + o[1] * anchor.height(), w, h);
}

std::array<double, 4> encode_offsets(const BBox& anchor, const BBox& box) {
  return {(box.cx() - anchor.cx()) / anchor.width(), (box.cy() - anchor.cy()) / anchor.height(),
          std::log(box.width() / anchor.width()), std::log(box.height() / anchor.height())};
}

AnchorTargets assign_anchor_targets(const BBox* gt, const AnchorConfig& cfg, const ScoreGeometry& geometry) {
  const int k = cfg.count(), n = geometry.size;
  AnchorTargets t;
  t.labels = Tensor<double>(Shape{k, n, n});
  t.weights = Tensor<double>(Shape{k, n, n}, 1.0);
  t.offsets = Tensor<double>(Shape{4 * k, n, n});
  if (!gt) return t;

  double best = -1;
  int best_a = 0, best_x = 0, best_y = 0;
  for (int a = 0; a < k; ++a)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const BBox anchor = anchor_box(cfg, geometry, a, x, y);
        const double overlap = iou(anchor, *gt);
        if (overlap > best) {
          best = overlap;
          best_a = a;
          best_x = x;
          best_y = y;
        }
        if (overlap >= cfg.positive_iou) {
          t.labels(a, y, x) = 1;
        } else if (overlap >= cfg.negative_iou) {
          t.weights(a, y, x) = 0;
        }
      }
  if (best > 0) {
    t.labels(best_a, best_y, best_x) = 1;
    t.weights(best_a, best_y, best_x) = 1;
  }
  for (int a = 0; a < k; ++a)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        if (t.labels(a, y, x) < 0.5) continue;
        ++t.n_pos;
        const auto o = encode_offsets(anchor_box(cfg, geometry, a, x, y), *gt);
        for (int c = 0; c < 4; ++c) t.offsets(4 * a + c, y, x) = o[size_t(c)];
      }
  return t;
}

Maxout maxout_score(const Tensor<float>& s) {
  if (s.rank() != 3) throw ShapeError("maxout_score: expected [K,N,N]");
  const int k = s.dim(0), h = s.dim(1), w = s.dim(2);
  Maxout m;
  m.score = Tensor<float>(Shape{h, w});
  m.arg.assign(size_t(h) * w, 0);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      int best = 0;
      for (int a = 1; a < k; ++a)
        if (s(a, i, j) > s(best, i, j)) best = a;
      m.score(i, j) = s(best, i, j);
      m.arg[size_t(i) * w + j] = best;
    }
  return m;
}

}  // namespace sfpp
