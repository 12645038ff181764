#include "sfpp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sfpp/errors.hpp"

namespace sfpp {

std::string EvalReport::summary() const {
  std::ostringstream os;
  char buf[64];
  auto kv = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    os << key << " = " << buf << '\n';
  };
  os << "frames = " << frames << '\n';
  kv("ao", ao);
  kv("sr50", sr50);
  kv("sr75", sr75);
  kv("precision20", precision20);
  os << "failures = " << failures << '\n';
  kv("accuracy", accuracy);
  return os.str();
}

EvalReport eval_overlaps(const std::vector<double>& ious, const std::vector<double>& center_errors) {
  if (!center_errors.empty() && center_errors.size() != ious.size())
    throw InvalidArgument("eval: overlap and center-error counts differ");
  EvalReport r;
  r.frames = int(ious.size());
  if (ious.empty()) return r;
  double sum_ok = 0;
  for (size_t i = 0; i < ious.size(); ++i) {
    const double v = ious[i];
    r.ao += v;
    r.sr50 += v >= 0.5;
    r.sr75 += v >= 0.75;
    if (v <= 0) {
      ++r.failures;
    } else {
      sum_ok += v;
    }
    if (!center_errors.empty()) r.precision20 += center_errors[i] <= 20.0;
  }
  const double n = double(ious.size());
  r.ao /= n;
  r.sr50 /= n;
  r.sr75 /= n;
  r.precision20 /= n;
  const int ok = r.frames - r.failures;
  r.accuracy = ok > 0 ? sum_ok / ok : 0.0;
  return r;
}

EvalReport eval_overlaps(const std::vector<double>& ious) { return eval_overlaps(ious, {}); }

std::vector<double> frame_ious(const std::vector<BBox>& pred, const std::vector<BBox>& gt) {
  if (pred.size() != gt.size())
    throw InvalidArgument("eval: " + std::to_string(pred.size()) + " predictions for " + std::to_string(gt.size()) +
                          " ground-truth frames");
  std::vector<double> out;
  for (size_t t = 1; t < pred.size(); ++t) out.push_back(iou(pred[t], gt[t]));
  return out;
}

EvalReport eval_sequence(const std::vector<BBox>& pred, const std::vector<BBox>& gt) {
  const std::vector<double> ious = frame_ious(pred, gt);
  std::vector<double> err;
  for (size_t t = 1; t < pred.size(); ++t) err.push_back(std::hypot(pred[t].cx() - gt[t].cx(), pred[t].cy() - gt[t].cy()));
  return eval_overlaps(ious, err);
}

EvalReport aggregate(const std::vector<EvalReport>& reports) {
  EvalReport r;
  if (reports.empty()) return r;
  for (const auto& s : reports) {
    r.frames += s.frames;
    r.failures += s.failures;
    r.ao += s.ao;
    r.sr50 += s.sr50;
    r.sr75 += s.sr75;
    r.precision20 += s.precision20;
    r.accuracy += s.accuracy;
  }
  const double n = double(reports.size());
  r.ao /= n;
  r.sr50 /= n;
  r.sr75 /= n;
  r.precision20 /= n;
  r.accuracy /= n;
  return r;
}

Histogram Histogram::of(const std::vector<double>& samples, int bins, double lo, double hi) {
  if (bins < 1 || !(hi > lo)) throw InvalidArgument("histogram: bad binning");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(size_t(bins), 0);
  for (double v : samples) {
    const int b = std::clamp(int(std::floor((v - lo) / (hi - lo) * bins)), 0, bins - 1);
    ++h.counts[size_t(b)];
  }
  return h;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) return 0.0;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(double(i) / a.size() - double(j) / b.size()));
  }
  return d;
}

std::string SplitHistograms::to_csv() const {
  std::ostringstream os;
  os << "bin_lo,bin_hi,count_success,count_failure\n";
  char line[128];
  for (size_t i = 0; i < success.counts.size(); ++i) {
    std::snprintf(line, sizeof line, "%.4f,%.4f,%d,%d\n", success.bin_lo(int(i)), success.bin_hi(int(i)),
                  success.counts[i], failure.counts[i]);
    os << line;
  }
  return os.str();
}

namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

}  // namespace

SplitHistograms score_histograms(const std::vector<double>& success, const std::vector<double>& failure,
                                 int bins) {
  SplitHistograms h;
  h.success = Histogram::of(success, bins);
  h.failure = Histogram::of(failure, bins);
  h.n_success = int(success.size());
  h.n_failure = int(failure.size());
  h.degenerate = success.empty() || failure.empty();
  h.ks = ks_statistic(success, failure);
  h.mean_success = mean(success);
  h.mean_failure = mean(failure);
  return h;
}

AnchorIouAnalysis anchor_iou_analysis(const std::vector<BBox>& pred, const std::vector<BBox>& anchors,
                                      const std::vector<BBox>& gt, const std::vector<bool>& success, int bins) {
  if (pred.size() != gt.size() || anchors.size() != gt.size() || success.size() != gt.size())
    throw InvalidArgument("anchor_iou_analysis: length mismatch");
  std::vector<double> ps, pf, as, af;
  for (size_t i = 0; i < gt.size(); ++i) {
    (success[i] ? ps : pf).push_back(iou(pred[i], gt[i]));
    (success[i] ? as : af).push_back(iou(anchors[i], gt[i]));
  }
  return {score_histograms(ps, pf, bins), score_histograms(as, af, bins)};
}

}  // namespace sfpp
