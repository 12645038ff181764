#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sfpp/box.hpp"

namespace sfpp {

struct EvalReport {
  int frames = 0;  // scored frames
  double ao = 0;
  double sr50 = 0, sr75 = 0;
  double precision20 = 0;  // center error <= 20 px
  int failures = 0;        // IoU == 0
  double accuracy = 0;     // mean IoU over non-failure frames

  // Flat key = value text.
  std::string summary() const;
};

// Metrics from per-frame overlaps and center errors (already excluding the
// given first frame).
EvalReport eval_overlaps(const std::vector<double>& ious, const std::vector<double>& center_errors);
EvalReport eval_overlaps(const std::vector<double>& ious);

// Per-frame IoU and center error, frame 0 excluded.
EvalReport eval_sequence(const std::vector<BBox>& pred, const std::vector<BBox>& gt);
std::vector<double> frame_ious(const std::vector<BBox>& pred, const std::vector<BBox>& gt);

// Mean over sequences of each rate; failures and frames summed.
EvalReport aggregate(const std::vector<EvalReport>& reports);

struct Histogram {
  double lo = 0, hi = 1;
  std::vector<int> counts;

  static Histogram of(const std::vector<double>& samples, int bins = 20, double lo = 0, double hi = 1);
  double bin_lo(int i) const { return lo + (hi - lo) * i / double(counts.size()); }
  double bin_hi(int i) const { return lo + (hi - lo) * (i + 1) / double(counts.size()); }
};

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

struct SplitHistograms {
  Histogram success, failure;
  double ks = 0;
  bool degenerate = false;  // one class empty
  int n_success = 0, n_failure = 0;
  double mean_success = 0, mean_failure = 0;

  // bin_lo,bin_hi,count_success,count_failure
  std::string to_csv() const;
};

SplitHistograms score_histograms(const std::vector<double>& success, const std::vector<double>& failure,
                                 int bins = 20);

struct AnchorIouAnalysis {
  SplitHistograms pred_gt;    // IoU(pred, gt)
  SplitHistograms anchor_gt;  // IoU(winning anchor, gt)
};

// success[i] classifies frame i.
AnchorIouAnalysis anchor_iou_analysis(const std::vector<BBox>& pred, const std::vector<BBox>& anchors,
                                      const std::vector<BBox>& gt, const std::vector<bool>& success, int bins = 20);

}  // namespace sfpp
