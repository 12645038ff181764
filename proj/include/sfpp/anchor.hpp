#pragma once

// Anchor-based head variant: K pre-set anchors per cell, per-anchor scores,
// offset regression, and maxout scoring over anchors.

#include <array>
#include <vector>

#include "sfpp/loss.hpp"
#include "sfpp/target_codec.hpp"

namespace sfpp {

struct AnchorConfig {
  std::vector<double> ratios{0.5, 1.0, 2.0};  // w / h
  std::vector<double> scales{1.0};
  double base_size = 32.0;  // search-patch pixels
  double positive_iou = 0.6;
  double negative_iou = 0.3;

  int count() const { return int(ratios.size() * scales.size()); }
};

// Anchor k centered on cell (x, y); k enumerates scales major, ratios minor.
BBox anchor_box(const AnchorConfig& cfg, const ScoreGeometry& geometry, int k, int x, int y);

// cx = ax + dx*aw, cy = ay + dy*ah, w = aw*exp(dw), h = ah*exp(dh).
BBox anchor_decode(const BBox& anchor, const std::array<double, 4>& offsets);
std::array<double, 4> encode_offsets(const BBox& anchor, const BBox& box);

struct AnchorTargets {
  Tensor<double> labels;   // [K,N,N] in {0,1}
  Tensor<double> weights;  // [K,N,N], 0 on ignored anchors
  Tensor<double> offsets;  // [4K,N,N], channel 4k+c
  int n_pos = 0;
};

// IoU >= positive_iou is positive, < negative_iou negative, else ignored; the
// best-matching anchor is always positive. A missing gt gives all negatives.
AnchorTargets assign_anchor_targets(const BBox* gt, const AnchorConfig& cfg, const ScoreGeometry& geometry);

struct Maxout {
  Tensor<float> score;   // [N,N]
  std::vector<int> arg;  // winning anchor per cell, row-major
};

Maxout maxout_score(const Tensor<float>& per_anchor_scores);

// Sum over mask>0 entries of smooth-L1(pred - target), beta = 1/9.
template <typename Scalar>
Var smooth_l1_loss(Tape<Scalar>& tape, Var pred, const Tensor<double>& target, const Tensor<double>& mask4) {
  constexpr double kBeta = 1.0 / 9.0;
  const Tensor<Scalar>& p = tape.value(pred);
  if (p.size() != target.size() || p.size() != mask4.size()) throw ShapeError("smooth_l1_loss: size mismatch");
  Tensor<Scalar> grad(p.shape());
  Scalar total(0);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(mask4[i] > 0)) continue;
    const Scalar d = p[i] - Scalar(target[i]);
    const Scalar a = std::abs(d);
    if (a < Scalar(kBeta)) {
      total += Scalar(0.5) * d * d / Scalar(kBeta);
      grad[i] = d / Scalar(kBeta);
    } else {
      total += a - Scalar(0.5 * kBeta);
      grad[i] = d > 0 ? Scalar(1) : Scalar(-1);
    }
  }
  return tape.record(
      Tensor<Scalar>::scalar(total), {pred},
      [pred, grad](Tape<Scalar>& t, const Tensor<Scalar>& up) {
        t.accumulate(pred, Tensor<Scalar>(grad.shape(), (grad.array() * up[0]).eval()));
      },
      "smooth_l1_loss");
}

// Focal loss over anchors plus smooth-L1 offsets at positive anchors, both
// divided by max(N_pos, floor); the regression term is weighted by lambda.
template <typename Scalar>
LossResult<Scalar> anchor_loss(Tape<Scalar>& tape, const HeadVars& head, const AnchorTargets& targets,
                               const LossConfig& cfg) {
  cfg.validate();
  LossReport report;
  report.n_pos = targets.n_pos;
  const double norm = 1.0 / double(std::max(targets.n_pos, cfg.n_pos_floor));
  Var cls = focal_loss(tape, head.cls, targets.labels, cfg.focal_gamma, cfg.focal_alpha, &targets.weights);
  Var total = scale(tape, cls, Scalar(norm));
  report.cls_term = double(tape.value(total).item());
  if (targets.n_pos > 0) {
    // Broadcast the per-anchor positive mask to its four offset channels.
    const int k = targets.labels.dim(0);
    const Eigen::Index plane = targets.labels.size() / k;
    Tensor<double> mask4(targets.offsets.shape());
    for (int a = 0; a < k; ++a)
      for (int c = 0; c < 4; ++c)
        mask4.array().segment((4 * a + c) * plane, plane) = targets.labels.array().segment(a * plane, plane);
    Var reg = scale(tape, smooth_l1_loss(tape, head.reg, targets.offsets, mask4), Scalar(norm));
    report.reg_term = double(tape.value(reg).item());
    total = add(tape, total, scale(tape, reg, Scalar(cfg.lambda_weight)));
  }
  report.total = double(tape.value(total).item());
  return {total, report};
}

}  // namespace sfpp
