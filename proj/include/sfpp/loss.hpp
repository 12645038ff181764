#pragma once

// Training objective: focal classification loss summed over every cell, BCE
// quality loss and IoU regression loss summed over positives, each divided
// by max(N_pos, floor); quality and regression terms weighted by lambda.

#include <algorithm>
#include <cmath>

#include "sfpp/head.hpp"
#include "sfpp/target_codec.hpp"

namespace sfpp {

struct LossConfig {
  double lambda_weight = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  int n_pos_floor = 1;

  void validate() const {
    if (!(focal_gamma >= 0)) throw ConfigError("loss.focal_gamma must be >= 0");
    if (!(focal_alpha > 0 && focal_alpha < 1)) throw ConfigError("loss.focal_alpha must be in (0,1)");
    if (!(lambda_weight >= 0)) throw ConfigError("loss.lambda_weight must be >= 0");
    if (n_pos_floor < 1) throw ConfigError("loss.n_pos_floor must be >= 1");
  }
};

struct LossReport {
  double total = 0, cls_term = 0, quality_term = 0, reg_term = 0;
  int n_pos = 0;
  int clamped_cells = 0;  // positives whose IoU hit the 1e-6 floor
};

// IoU values below this are clamped; the loss caps at -ln(kIouFloor).
inline constexpr double kIouFloor = 1e-6;

namespace loss_detail {

template <typename Scalar>
Scalar softplus(Scalar x) {
  return std::max(x, Scalar(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename Scalar>
void require_same_size(const Tensor<Scalar>& a, const Tensor<double>& b, const char* op) {
  if (a.size() != b.size())
    throw ShapeError(std::string(op) + ": prediction " + shape_str(a.shape()) + " vs target " +
                     shape_str(b.shape()));
}

}  // namespace loss_detail

// Sum over cells of -alpha_t (1-p_t)^gamma log p_t. `weight` (optional, same
// size) scales each cell; 0 excludes it.
template <typename Scalar>
Var focal_loss(Tape<Scalar>& tape, Var logits, const Tensor<double>& cls_star, double gamma, double alpha,
               const Tensor<double>* weight = nullptr) {
  using loss_detail::softplus;
  const Tensor<Scalar>& x = tape.value(logits);
  loss_detail::require_same_size(x, cls_star, "focal_loss");
  if (weight) loss_detail::require_same_size(x, *weight, "focal_loss");
  const Scalar g = Scalar(gamma), a = Scalar(alpha);
  Tensor<Scalar> grad(x.shape());
  Scalar total(0);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Scalar w = weight ? Scalar((*weight)[i]) : Scalar(1);
    if (w == Scalar(0)) continue;
    const Scalar xi = x[i];
    const Scalar p = sigmoid(xi), q = sigmoid(-xi);  // q = 1 - p without cancellation
    if (cls_star[i] > 0.5) {
      const Scalar log_p = -softplus(-xi);
      const Scalar mod = std::pow(q, g);
      total += -w * a * mod * log_p;
      grad[i] = w * a * mod * (g * p * log_p - q);
    } else {
      const Scalar log_q = -softplus(xi);
      const Scalar mod = std::pow(p, g);
      total += -w * (Scalar(1) - a) * mod * log_q;
      grad[i] = w * (Scalar(1) - a) * mod * (p - g * q * log_q);
    }
  }
  return tape.record(
      Tensor<Scalar>::scalar(total), {logits},
      [logits, grad](Tape<Scalar>& t, const Tensor<Scalar>& up) {
        t.accumulate(logits, Tensor<Scalar>(grad.shape(), (grad.array() * up[0]).eval()));
      },
      "focal_loss");
}

// Sum over mask>0 cells of -[q* log q + (1-q*) log(1-q)], q = sigmoid(logit).
template <typename Scalar>
Var bce_loss(Tape<Scalar>& tape, Var logits, const Tensor<double>& quality_star, const Tensor<double>& mask) {
  using loss_detail::softplus;
  const Tensor<Scalar>& x = tape.value(logits);
  loss_detail::require_same_size(x, quality_star, "bce_loss");
  loss_detail::require_same_size(x, mask, "bce_loss");
  Tensor<Scalar> grad(x.shape());
  Scalar total(0);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(mask[i] > 0)) continue;
    const Scalar q = Scalar(quality_star[i]);
    total += softplus(x[i]) - q * x[i];
    grad[i] = sigmoid(x[i]) - q;
  }
  return tape.record(
      Tensor<Scalar>::scalar(total), {logits},
      [logits, grad](Tape<Scalar>& t, const Tensor<Scalar>& up) {
        t.accumulate(logits, Tensor<Scalar>(grad.shape(), (grad.array() * up[0]).eval()));
      },
      "bce_loss");
}

// IoU between two boxes sharing an anchor point, from their (l,t,r,b) distances.
inline double distance_iou(const double* pred, const double* target) {
  const double ap = (pred[0] + pred[2]) * (pred[1] + pred[3]);
  const double at = (target[0] + target[2]) * (target[1] + target[3]);
  const double w = std::min(pred[0], target[0]) + std::min(pred[2], target[2]);
  const double h = std::min(pred[1], target[1]) + std::min(pred[3], target[3]);
  const double inter = std::max(w, 0.0) * std::max(h, 0.0);
  const double uni = ap + at - inter;
  return uni > 0 ? inter / uni : 0.0;
}

struct IouLossResult {
  Var loss;
  int clamped_cells = 0;
};

// Sum over mask>0 cells of -ln IoU(pred, target) in distance form.
// pred_distances and reg_star are [4,N,N].
template <typename Scalar>
IouLossResult iou_loss(Tape<Scalar>& tape, Var pred_distances, const Tensor<double>& reg_star,
                       const Tensor<double>& mask) {
  const Tensor<Scalar>& d = tape.value(pred_distances);
  loss_detail::require_same_size(d, reg_star, "iou_loss");
  const Eigen::Index cells = mask.size();
  if (d.size() != 4 * cells) throw ShapeError("iou_loss: distances must be [4,N,N] over the mask grid");
  Tensor<Scalar> grad(d.shape());
  Scalar total(0);
  int clamped = 0;
  for (Eigen::Index c = 0; c < cells; ++c) {
    if (!(mask[c] > 0)) continue;
    const Scalar l = d[c], t = d[cells + c], r = d[2 * cells + c], b = d[3 * cells + c];
    const Scalar lt = Scalar(reg_star[c]), tt = Scalar(reg_star[cells + c]);
    const Scalar rt = Scalar(reg_star[2 * cells + c]), bt = Scalar(reg_star[3 * cells + c]);
    const Scalar w = std::min(l, lt) + std::min(r, rt);
    const Scalar h = std::min(t, tt) + std::min(b, bt);
    const Scalar inter = w * h;
    const Scalar uni = (l + r) * (t + b) + (lt + rt) * (tt + bt) - inter;
    const Scalar ratio = uni > 0 ? inter / uni : Scalar(0);
    if (!(ratio >= Scalar(kIouFloor))) {
      total += Scalar(-std::log(kIouFloor));
      ++clamped;
      continue;
    }
    total += -std::log(ratio);
    // L = ln U - ln I, with U = Ap + At - I.
    const Scalar dI_dl = l < lt ? h : Scalar(0), dI_dr = r < rt ? h : Scalar(0);
    const Scalar dI_dt = t < tt ? w : Scalar(0), dI_db = b < bt ? w : Scalar(0);
    auto dl = [&](Scalar dAp, Scalar dI) { return (dAp - dI) / uni - dI / inter; };
    grad[c] = dl(t + b, dI_dl);
    grad[2 * cells + c] = dl(t + b, dI_dr);
    grad[cells + c] = dl(l + r, dI_dt);
    grad[3 * cells + c] = dl(l + r, dI_db);
  }
  Var out = tape.record(
      Tensor<Scalar>::scalar(total), {pred_distances},
      [pred_distances, grad](Tape<Scalar>& tp, const Tensor<Scalar>& up) {
        tp.accumulate(pred_distances, Tensor<Scalar>(grad.shape(), (grad.array() * up[0]).eval()));
      },
      "iou_loss");
  return {out, clamped};
}

// Quality targets for IoU mode: IoU of the current (detached) prediction
// against the target at every positive cell.
template <typename Scalar>
Tensor<double> iou_quality_targets(const Tensor<Scalar>& pred_distances, const Tensor<double>& reg_star,
                                   const Tensor<double>& mask) {
  const Eigen::Index cells = mask.size();
  Tensor<double> q(mask.shape());
  for (Eigen::Index c = 0; c < cells; ++c) {
    if (!(mask[c] > 0)) continue;
    const double p[4] = {double(pred_distances[c]), double(pred_distances[cells + c]),
                         double(pred_distances[2 * cells + c]), double(pred_distances[3 * cells + c])};
    const double t[4] = {reg_star[c], reg_star[cells + c], reg_star[2 * cells + c], reg_star[3 * cells + c]};
    q[c] = distance_iou(p, t);
  }
  return q;
}

template <typename Scalar>
struct LossResult {
  Var total;
  LossReport report;
};

// Full objective on raw head variables. reg is decoded with stride*exp.
template <typename Scalar>
LossResult<Scalar> total_loss(Tape<Scalar>& tape, const HeadVars& head, const TargetMaps& targets,
                              const LossConfig& cfg) {
  cfg.validate();
  LossReport report;
  report.n_pos = targets.n_pos;
  const double norm = 1.0 / double(std::max(targets.n_pos, cfg.n_pos_floor));

  Var cls = focal_loss(tape, head.cls, targets.cls_star, cfg.focal_gamma, cfg.focal_alpha);
  Var total = scale(tape, cls, Scalar(norm));
  report.cls_term = double(tape.value(total).item());

  if (targets.n_pos > 0) {
    Var distances = decode_distances(tape, head.reg, targets.geometry.stride);
    auto reg = iou_loss(tape, distances, targets.reg_star, targets.cls_star);
    report.clamped_cells = reg.clamped_cells;
    Var reg_term = scale(tape, reg.loss, Scalar(norm));
    report.reg_term = double(tape.value(reg_term).item());
    Var weighted = scale(tape, reg_term, Scalar(cfg.lambda_weight));

    if (targets.quality_mode != QualityMode::kNone && head.quality.valid()) {
      const Tensor<double> qstar = targets.quality_mode == QualityMode::kIou
                                       ? iou_quality_targets(tape.value(distances), targets.reg_star,
                                                             targets.cls_star)
                                       : targets.quality_star;
      Var q = scale(tape, bce_loss(tape, head.quality, qstar, targets.cls_star), Scalar(norm));
      report.quality_term = double(tape.value(q).item());
      weighted = add(tape, weighted, scale(tape, q, Scalar(cfg.lambda_weight)));
    }
    total = add(tape, total, weighted);
  }
  report.total = double(tape.value(total).item());
  return {total, report};
}

}  // namespace sfpp
